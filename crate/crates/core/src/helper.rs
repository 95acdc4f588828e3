//! The four helper sub-chains: segmentation, parameter generation,
//! parameter validation and code-instruction synthesis.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::history::HelperTurn;
use crate::llm::{ChatMessage, Gateway, GatewayError};
use crate::model::{InstructionBundle, ParameterSet, SegmentPlan, ValidationVerdict};
use crate::prompts;
use crate::structured::{
    self, StructuredError, KEY_ANIMATION, KEY_INTERACTION, KEY_IS_FOLLOWUP, KEY_PRIMITIVE,
};

/// Re-validations allowed after the first failed verdict.
pub const MAX_VALIDATION_ROUNDS: usize = 2;

const NONE: &str = "None";

/// Long-term context for one helper run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HelperContext {
    /// Archived turns, oldest first.
    pub prior_turns: Vec<HelperTurn>,
    /// Parameters of the scene a follow-up edits; reused instead of generating a fresh set.
    pub current_params: Option<ParameterSet>,
}

#[derive(Debug, Error)]
pub enum HelperError {
    #[error("user input is empty")]
    EmptyInput,
    #[error("{chain} chain: {source}")]
    Schema {
        chain: Chain,
        #[source]
        source: StructuredError,
    },
    #[error("{chain} chain: {source}")]
    Gateway {
        chain: Chain,
        #[source]
        source: GatewayError,
    },
    #[error("segment plan has no primitive segment")]
    NoPrimitive,
    #[error("parameter list is empty")]
    NoParameters,
    #[error("parameter list {0:?} has no height parameter")]
    NoHeightParameter(Vec<String>),
    #[error("parameters still insufficient after {rounds} adjustment rounds: {message}")]
    ValidationExhausted { rounds: usize, message: String },
}

impl HelperError {
    /// Raw model output for schema failures.
    pub fn raw_output(&self) -> Option<&str> {
        match self {
            HelperError::Schema { source, .. } => Some(&source.raw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chain {
    Segmentation,
    ParameterGeneration,
    ParameterValidation,
    CodeInstruction,
}

impl std::fmt::Display for Chain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Chain::Segmentation => "segmentation",
            Chain::ParameterGeneration => "parameter generation",
            Chain::ParameterValidation => "parameter validation",
            Chain::CodeInstruction => "code instruction",
        })
    }
}

/// Progress reported after each sub-chain.
#[derive(Debug, Clone, PartialEq)]
pub enum HelperEvent<'a> {
    Segmented(&'a SegmentPlan),
    Parameters(&'a ParameterSet),
    Validated { round: usize, verdict: &'a ValidationVerdict },
    Instructed(&'a InstructionBundle),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HelperOutput {
    pub plan: SegmentPlan,
    pub params: ParameterSet,
    pub instructions: InstructionBundle,
    pub validation_calls: usize,
}

#[derive(Debug, Clone)]
pub struct PromptHelper {
    gateway: Gateway,
    model: String,
    pub max_validation_rounds: usize,
}

fn segments_json(primitive: Option<&str>, animation: Option<&str>, interaction: Option<&str>) -> Map<String, Value> {
    let mut map = Map::new();
    map.insert(KEY_PRIMITIVE.into(), json!(primitive.unwrap_or(NONE)));
    map.insert(KEY_ANIMATION.into(), json!(animation.unwrap_or(NONE)));
    map.insert(KEY_INTERACTION.into(), json!(interaction.unwrap_or(NONE)));
    map
}

fn to_text(value: &Map<String, Value>) -> String {
    serde_json::to_string_pretty(value).expect("maps serialize")
}

impl PromptHelper {
    pub fn new(gateway: Gateway, model: impl Into<String>) -> Self {
        Self {
            gateway,
            model: model.into(),
            max_validation_rounds: MAX_VALIDATION_ROUNDS,
        }
    }

    fn ask(&self, chain: Chain, messages: &[ChatMessage]) -> Result<String, HelperError> {
        self.gateway
            .complete(&self.model, messages)
            .map_err(|source| HelperError::Gateway { chain, source })
    }

    pub fn segment(&self, user_input: &str, ctx: &HelperContext) -> Result<SegmentPlan, HelperError> {
        if user_input.trim().is_empty() {
            return Err(HelperError::EmptyInput);
        }
        let mut messages = vec![ChatMessage::system(prompts::SEGMENTATION)];
        for turn in &ctx.prior_turns {
            let b = &turn.instructions;
            let mut archived = segments_json(b.primitive.as_deref(), b.animation.as_deref(), b.interaction.as_deref());
            archived.insert(KEY_IS_FOLLOWUP.into(), json!(false));
            messages.push(ChatMessage::user(turn.user_input.clone()));
            messages.push(ChatMessage::assistant(to_text(&archived)));
        }
        messages.push(ChatMessage::user(user_input));
        let raw = self.ask(Chain::Segmentation, &messages)?;
        structured::parse_segment_plan(&raw).map_err(|source| HelperError::Schema {
            chain: Chain::Segmentation,
            source,
        })
    }

    pub fn generate_parameters(&self, plan: &SegmentPlan) -> Result<ParameterSet, HelperError> {
        let primitive = plan.primitive.as_deref().ok_or(HelperError::NoPrimitive)?;
        let input = segments_json(Some(primitive), plan.animation.as_deref(), plan.interaction.as_deref());
        let messages = [
            ChatMessage::system(prompts::PARAMETER_GENERATION),
            ChatMessage::user(to_text(&input)),
        ];
        let raw = self.ask(Chain::ParameterGeneration, &messages)?;
        let params = structured::parse_parameters(&raw).map_err(|source| HelperError::Schema {
            chain: Chain::ParameterGeneration,
            source,
        })?;
        if params.is_empty() {
            return Err(HelperError::NoParameters);
        }
        if !params.has_height_like() {
            return Err(HelperError::NoHeightParameter(params.names().to_vec()));
        }
        Ok(params)
    }

    /// Returns `Ok(None)` without calling the model when there is nothing to accommodate.
    pub fn validate_parameters(
        &self,
        params: &ParameterSet,
        plan: &SegmentPlan,
    ) -> Result<Option<ValidationVerdict>, HelperError> {
        if params.is_empty() {
            return Err(HelperError::NoParameters);
        }
        let prompt = match (plan.animation.as_deref(), plan.interaction.as_deref()) {
            (None, None) => return Ok(None),
            (Some(a), None) => format!("Animation: {a}"),
            (None, Some(i)) => format!("Interaction: {i}"),
            (Some(a), Some(i)) => format!("Animation: {a}\nInteraction: {i}"),
        };
        let input = json!({ "parentparam": params.names(), "prompt": prompt });
        let messages = [
            ChatMessage::system(prompts::PARAMETER_INFERENCE),
            ChatMessage::user(serde_json::to_string_pretty(&input).expect("json")),
        ];
        let raw = self.ask(Chain::ParameterValidation, &messages)?;
        let mut verdict = structured::parse_verdict(&raw).map_err(|source| HelperError::Schema {
            chain: Chain::ParameterValidation,
            source,
        })?;
        if let Some(updated) = verdict.updated_params.take() {
            // The model is asked for "original plus additions"; enforce it.
            verdict.updated_params = Some(params.union(&updated));
        }
        Ok(Some(verdict))
    }

    /// `plan.primitive` may carry the previous primitive instruction when a
    /// follow-up changes the parameters of an existing primitive.
    pub fn build_instructions(
        &self,
        plan: &SegmentPlan,
        params: &ParameterSet,
    ) -> Result<InstructionBundle, HelperError> {
        let mut input = segments_json(
            plan.primitive.as_deref(),
            plan.animation.as_deref(),
            plan.interaction.as_deref(),
        );
        input.insert("parameters".into(), json!(params.names()));
        let messages = [
            ChatMessage::system(prompts::CODE_INSTRUCTION),
            ChatMessage::user(to_text(&input)),
        ];
        let raw = self.ask(Chain::CodeInstruction, &messages)?;
        let mut bundle = structured::parse_instructions(&raw).map_err(|source| HelperError::Schema {
            chain: Chain::CodeInstruction,
            source,
        })?;
        // Segments that were None stay None whatever the model says.
        if plan.primitive.is_none() {
            bundle.primitive = None;
        }
        if plan.animation.is_none() {
            bundle.animation = None;
        }
        if plan.interaction.is_none() {
            bundle.interaction = None;
        }
        Ok(bundle)
    }

    /// Runs all four chains, calling `observe` after each.
    ///
    /// A follow-up reuses `ctx.current_params`. When validation then adds
    /// parameters and the plan has no primitive segment, the last primitive
    /// instruction is re-sent so the primitive can be rebuilt with them.
    pub fn run(
        &self,
        user_input: &str,
        ctx: &HelperContext,
        observe: &mut dyn FnMut(HelperEvent<'_>),
    ) -> Result<HelperOutput, HelperError> {
        let plan = self.segment(user_input, ctx)?;
        observe(HelperEvent::Segmented(&plan));

        let followup_params = if plan.is_followup { ctx.current_params.clone() } else { None };
        let reused = followup_params.is_some();
        let mut params = match followup_params {
            Some(p) => p,
            None => self.generate_parameters(&plan)?,
        };
        observe(HelperEvent::Parameters(&params));

        let original = params.clone();
        let mut calls = 0;
        while let Some(verdict) = self.validate_parameters(&params, &plan)? {
            calls += 1;
            observe(HelperEvent::Validated {
                round: calls,
                verdict: &verdict,
            });
            if verdict.success {
                break;
            }
            if calls > self.max_validation_rounds {
                return Err(HelperError::ValidationExhausted {
                    rounds: self.max_validation_rounds,
                    message: verdict.message,
                });
            }
            params = verdict.updated_params.expect("failed verdicts carry updatedParams");
        }

        let mut instruct_plan = plan.clone();
        if reused && instruct_plan.primitive.is_none() && params != original {
            instruct_plan.primitive = ctx
                .prior_turns
                .iter()
                .rev()
                .find_map(|t| t.instructions.primitive.clone());
        }
        let mut instructions = self.build_instructions(&instruct_plan, &params)?;
        if instruct_plan.primitive.is_none() {
            instructions.primitive = None;
        }
        observe(HelperEvent::Instructed(&instructions));
        Ok(HelperOutput {
            plan,
            params,
            instructions,
            validation_calls: calls,
        })
    }
}
