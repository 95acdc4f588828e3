//! System prompts shipped with the crate, one per chain or generator.

use crate::model::ScriptCategory;

pub const SEGMENTATION: &str = include_str!("../resources/prompts/segmentation.txt");
pub const PARAMETER_GENERATION: &str = include_str!("../resources/prompts/parameter_generation.txt");
pub const PARAMETER_INFERENCE: &str = include_str!("../resources/prompts/parameter_inference.txt");
pub const CODE_INSTRUCTION: &str = include_str!("../resources/prompts/code_instruction.txt");
pub const PRIMITIVE_AGENT: &str = include_str!("../resources/prompts/primitive_agent.txt");
pub const ANIMATION_AGENT: &str = include_str!("../resources/prompts/animation_agent.txt");
pub const INTERACTION_AGENT: &str = include_str!("../resources/prompts/interaction_agent.txt");

/// Generator system prompt for a category.
pub fn generator(category: ScriptCategory) -> &'static str {
    match category {
        ScriptCategory::Primitive => PRIMITIVE_AGENT,
        ScriptCategory::Animation => ANIMATION_AGENT,
        ScriptCategory::Interaction => INTERACTION_AGENT,
    }
}

/// `(name, text)` for every shipped prompt.
pub fn all() -> [(&'static str, &'static str); 7] {
    [
        ("segmentation", SEGMENTATION),
        ("parameter_generation", PARAMETER_GENERATION),
        ("parameter_inference", PARAMETER_INFERENCE),
        ("code_instruction", CODE_INSTRUCTION),
        ("primitive_agent", PRIMITIVE_AGENT),
        ("animation_agent", ANIMATION_AGENT),
        ("interaction_agent", INTERACTION_AGENT),
    ]
}
