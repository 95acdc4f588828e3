//! Shared inputs for the benchmarks.

use indexmap::IndexMap;
use pinshape_core::{Scene, ScriptArtifact, ScriptCategory};

pub const SQUARE: &str = include_str!("../../core/resources/scripts/square_primitive.js");
pub const BOUNCE: &str = include_str!("../../core/resources/scripts/bounce_animation.js");
pub const BUTTONS: &str = include_str!("../../core/resources/scripts/two_button_interaction.js");

pub fn artifact(category: ScriptCategory, source: &str) -> ScriptArtifact {
    ScriptArtifact {
        category,
        message: String::new(),
        source: source.to_string(),
        parameters: IndexMap::new(),
        explanation: None,
        origin_prompt: String::new(),
    }
}

/// Square, bounce and two buttons loaded together.
pub fn full_scene() -> Scene {
    let artifacts = [
        artifact(ScriptCategory::Primitive, SQUARE),
        artifact(ScriptCategory::Animation, BOUNCE),
        artifact(ScriptCategory::Interaction, BUTTONS),
    ];
    Scene::load(&artifacts).expect("bundled scripts load")
}
