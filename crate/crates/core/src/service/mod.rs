//! Session orchestration: helper → generators → compile check → scene, plus
//! the live-session actor and hub used by the HTTP server.

mod actor;
mod log;
mod session;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::helper::{HelperContext, HelperError, HelperEvent, PromptHelper, MAX_VALIDATION_ROUNDS};
use crate::history::{GeneratorMemory, HistoryError, NewCard, Session};
use crate::llm::{CallRecorder, Gateway, GatewayError, ModelConfig};
use crate::model::{InstructionBundle, ParameterSet, ScriptArtifact, ScriptCategory, SegmentPlan};
use crate::rag::{RagStore, DEFAULT_TOP_K};
use crate::scriptgen::{GenerateError, GeneratorRequest, ScriptGenerator};
use crate::sim::{self, CompileError, Limits, SceneError};

pub use actor::{Command, Event, FrameMessage, HardwareLink, Hub, HubConfig, SessionHandle, DEFAULT_TICK_HZ};
pub use log::{EventLog, LogEntry, LoggedCommand};
pub use session::{HistorySnapshot, SessionState};

/// Regeneration attempts allowed per artifact after the first generation.
pub const MAX_REGENS: usize = 3;

pub type SessionId = uuid::Uuid;

/// Pipeline progress. Serialized as `segmented`, `generated:primitive`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepPhase {
    Segmented,
    Parameters,
    Validated,
    Instructed,
    Generated(ScriptCategory),
    Loaded,
    Error,
}

impl StepPhase {
    /// Position in the canonical order; `Error` has none.
    pub fn rank(self) -> Option<usize> {
        Some(match self {
            StepPhase::Segmented => 0,
            StepPhase::Parameters => 1,
            StepPhase::Validated => 2,
            StepPhase::Instructed => 3,
            StepPhase::Generated(ScriptCategory::Primitive) => 4,
            StepPhase::Generated(ScriptCategory::Animation) => 5,
            StepPhase::Generated(ScriptCategory::Interaction) => 6,
            StepPhase::Loaded => 7,
            StepPhase::Error => return None,
        })
    }

    /// True when the non-error phases appear in canonical order without repeats.
    pub fn in_canonical_order(phases: &[StepPhase]) -> bool {
        let ranks: Vec<usize> = phases.iter().filter_map(|p| p.rank()).collect();
        ranks.windows(2).all(|w| w[0] < w[1])
    }
}

impl fmt::Display for StepPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepPhase::Segmented => f.write_str("segmented"),
            StepPhase::Parameters => f.write_str("parameters"),
            StepPhase::Validated => f.write_str("validated"),
            StepPhase::Instructed => f.write_str("instructed"),
            StepPhase::Generated(c) => write!(f, "generated:{c}"),
            StepPhase::Loaded => f.write_str("loaded"),
            StepPhase::Error => f.write_str("error"),
        }
    }
}

impl FromStr for StepPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "segmented" => StepPhase::Segmented,
            "parameters" => StepPhase::Parameters,
            "validated" => StepPhase::Validated,
            "instructed" => StepPhase::Instructed,
            "loaded" => StepPhase::Loaded,
            "error" => StepPhase::Error,
            other => match other.strip_prefix("generated:") {
                Some(c) => StepPhase::Generated(c.parse().map_err(|_| format!("unknown phase `{s}`"))?),
                None => return Err(format!("unknown phase `{s}`")),
            },
        })
    }
}

impl Serialize for StepPhase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StepPhase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepFeedback {
    pub session_id: SessionId,
    pub phase: StepPhase,
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session {0} not found")]
    SessionNotFound(SessionId),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("no scene is loaded")]
    NoScene,
    #[error("{0}")]
    NotFound(String),
    #[error("prompt helper: {0}")]
    Helper(#[from] HelperError),
    #[error("{category} generator: {source}")]
    Generate {
        category: ScriptCategory,
        #[source]
        source: GenerateError,
    },
    #[error("{category} script still fails after {regenerations} regenerations: {last_error}")]
    GenerationFailed {
        category: ScriptCategory,
        regenerations: usize,
        last_error: String,
    },
    #[error("the plan has no primitive and there is none to keep")]
    NoPrimitive,
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("history: {0}")]
    History(#[from] HistoryError),
    #[error("event log: {0}")]
    Log(#[from] std::io::Error),
    #[error("session worker stopped")]
    WorkerGone,
}

impl ServiceError {
    /// HTTP-ish classification used by the server.
    pub fn kind(&self) -> ErrorKind {
        match self {
            ServiceError::SessionNotFound(_) | ServiceError::NotFound(_) => ErrorKind::NotFound,
            ServiceError::History(HistoryError::CardNotFound(_))
            | ServiceError::History(HistoryError::ArtifactNotFound { .. }) => ErrorKind::NotFound,
            ServiceError::Scene(
                SceneError::UnknownParameter(_) | SceneError::UnknownButton(_) | SceneError::MissingScript(_),
            ) => ErrorKind::NotFound,
            ServiceError::NoScene | ServiceError::History(HistoryError::Empty) => ErrorKind::InvalidState,
            ServiceError::EmptyPrompt | ServiceError::Scene(_) => ErrorKind::BadRequest,
            ServiceError::Helper(_)
            | ServiceError::Generate { .. }
            | ServiceError::GenerationFailed { .. }
            | ServiceError::NoPrimitive => ErrorKind::Pipeline,
            ServiceError::Log(_) | ServiceError::WorkerGone => ErrorKind::Internal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    NotFound,
    InvalidState,
    BadRequest,
    Pipeline,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EngineConfig {
    pub helper_model: String,
    pub generator_model: String,
    pub embedding_model: String,
    pub max_regens: usize,
    pub max_validation_rounds: usize,
    pub top_k: usize,
    pub limits: Limits,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self::from_models(&ModelConfig::default())
    }
}

impl EngineConfig {
    pub fn from_models(models: &ModelConfig) -> Self {
        Self {
            helper_model: models.helper_model.clone(),
            generator_model: models.generator_model.clone(),
            embedding_model: models.embedding_model.clone(),
            max_regens: MAX_REGENS,
            max_validation_rounds: MAX_VALIDATION_ROUNDS,
            top_k: DEFAULT_TOP_K,
            limits: Limits::default(),
        }
    }
}

/// What a successful pipeline run produced, before it is applied to a session.
#[derive(Debug, Clone)]
pub struct PromptOutcome {
    pub card: NewCard,
    pub params: ParameterSet,
    /// Regenerations used per generated category.
    pub regenerations: IndexMap<ScriptCategory, usize>,
    /// Fixture keys of every model call made.
    pub fixture_keys: Vec<String>,
    pub memory: GeneratorMemory,
}

/// Stateless pipeline runner shared by all sessions.
#[derive(Debug, Clone)]
pub struct Engine {
    gateway: Gateway,
    rag: Arc<RagStore>,
    config: EngineConfig,
}

impl Engine {
    pub fn new(gateway: Gateway, rag: Arc<RagStore>, config: EngineConfig) -> Self {
        Self { gateway, rag, config }
    }

    /// Gateway plus the bundled seed collections.
    pub fn seeded(gateway: Gateway, config: EngineConfig) -> Result<Self, crate::rag::RagError> {
        let rag = Arc::new(RagStore::seeded(gateway.clone(), config.embedding_model.clone())?);
        Ok(Self::new(gateway, rag, config))
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn rag(&self) -> &Arc<RagStore> {
        &self.rag
    }

    pub fn helper(&self, gateway: Gateway) -> PromptHelper {
        let mut helper = PromptHelper::new(gateway, self.config.helper_model.clone());
        helper.max_validation_rounds = self.config.max_validation_rounds;
        helper
    }

    pub fn generator(&self, gateway: Gateway) -> ScriptGenerator {
        let mut generator = ScriptGenerator::new(gateway, self.rag.clone(), self.config.generator_model.clone());
        generator.top_k = self.config.top_k;
        generator
    }

    /// Runs the whole pipeline against a snapshot of `session`. The session
    /// itself is not modified; apply the outcome with [`SessionState::apply`].
    pub fn run_prompt(
        &self,
        session: &Session,
        text: &str,
        created_at_ms: u64,
        emit: &mut dyn FnMut(StepPhase, String),
    ) -> Result<PromptOutcome, ServiceError> {
        if text.trim().is_empty() {
            return Err(ServiceError::EmptyPrompt);
        }
        let recorder = CallRecorder::new();
        let gateway = self.gateway.recording(recorder.clone());
        let result = self.pipeline(session, text, created_at_ms, &gateway, emit);
        if let Err(e) = &result {
            emit(StepPhase::Error, e.to_string());
        }
        let mut outcome = result?;
        outcome.fixture_keys = recorder.take().into_iter().map(|r| r.key).collect();
        Ok(outcome)
    }

    fn pipeline(
        &self,
        session: &Session,
        text: &str,
        created_at_ms: u64,
        gateway: &Gateway,
        emit: &mut dyn FnMut(StepPhase, String),
    ) -> Result<PromptOutcome, ServiceError> {
        let active = session.active_card();
        let ctx = HelperContext {
            prior_turns: session.helper_memory().to_vec(),
            current_params: active
                .and_then(|c| c.artifact(ScriptCategory::Primitive))
                .and_then(|a| ParameterSet::new(a.parameters.keys().cloned()).ok()),
        };

        let mut last_verdict = None;
        let helper_out = self.helper(gateway.clone()).run(text, &ctx, &mut |event| match event {
            HelperEvent::Segmented(plan) => emit(StepPhase::Segmented, describe_plan(plan)),
            HelperEvent::Parameters(params) => emit(StepPhase::Parameters, params.names().join(", ")),
            HelperEvent::Validated { round, verdict } => {
                last_verdict = Some(format!("round {round}: {}", verdict.message));
            }
            HelperEvent::Instructed(bundle) => {
                emit(
                    StepPhase::Validated,
                    last_verdict.take().unwrap_or_else(|| "no animation or interaction to validate".into()),
                );
                emit(StepPhase::Instructed, describe_bundle(bundle));
            }
        })?;

        let generator = self.generator(gateway.clone());
        let mut memory = session.generator_memory().clone();
        let followup = helper_out.plan.is_followup;
        let mut artifacts: Vec<ScriptArtifact> = Vec::new();
        let mut regenerations = IndexMap::new();

        let carried = |category| {
            if followup {
                active.and_then(|c| c.artifact(category)).cloned()
            } else {
                None
            }
        };

        let primitive = match helper_out.instructions.primitive.as_deref() {
            Some(instruction) => {
                let req = GeneratorRequest::new(ScriptCategory::Primitive, instruction)
                    .with_parameters(helper_out.params.clone())
                    .with_memory(followup.then(|| memory.get(ScriptCategory::Primitive).map(str::to_string)).flatten());
                let (artifact, regens) = self.generate_checked(&generator, req, None, &mut memory, emit)?;
                regenerations.insert(ScriptCategory::Primitive, regens);
                artifact
            }
            None => carried(ScriptCategory::Primitive).ok_or(ServiceError::NoPrimitive)?,
        };
        let parent = primitive.parameters.clone();
        artifacts.push(primitive);

        for category in [ScriptCategory::Animation, ScriptCategory::Interaction] {
            let artifact = match helper_out.instructions.get(category) {
                Some(instruction) => {
                    let req = GeneratorRequest::new(category, instruction)
                        .with_parent(parent.clone())
                        .with_memory(followup.then(|| memory.get(category).map(str::to_string)).flatten());
                    let (artifact, regens) =
                        self.generate_checked(&generator, req, Some(&parent), &mut memory, emit)?;
                    regenerations.insert(category, regens);
                    Some(artifact)
                }
                None => carried(category),
            };
            artifacts.extend(artifact);
        }

        Ok(PromptOutcome {
            card: NewCard {
                user_input: text.to_string(),
                plan: helper_out.plan,
                instructions: helper_out.instructions,
                artifacts,
                created_at_ms,
            },
            params: helper_out.params,
            regenerations,
            fixture_keys: Vec::new(),
            memory,
        })
    }

    /// Generates, compile-checks and regenerates up to `max_regens` times.
    fn generate_checked(
        &self,
        generator: &ScriptGenerator,
        req: GeneratorRequest,
        parent: Option<&IndexMap<String, f64>>,
        memory: &mut GeneratorMemory,
        emit: &mut dyn FnMut(StepPhase, String),
    ) -> Result<(ScriptArtifact, usize), ServiceError> {
        let category = req.category;
        let empty = IndexMap::new();
        let parent = parent.unwrap_or(&empty);
        let mut last_compile_error: Option<String> = None;
        let mut last_error = String::new();
        for attempt in 0..=self.config.max_regens {
            let result = match (&last_compile_error, memory.get(category)) {
                (Some(err), Some(_)) if attempt > 0 => generator.regenerate_on_error(&req, err, memory),
                _ => generator.generate(&req, memory),
            };
            let artifact = match result {
                Ok(a) => a,
                Err(e @ (GenerateError::Structured(_) | GenerateError::CategoryMismatch { .. })) => {
                    last_error = e.to_string();
                    last_compile_error = None;
                    emit(StepPhase::Error, format!("{category}: {e}"));
                    continue;
                }
                Err(source) => return Err(ServiceError::Generate { category, source }),
            };
            match check(&artifact, parent, self.config.limits) {
                Ok(()) => {
                    emit(StepPhase::Generated(category), artifact.message.clone());
                    return Ok((artifact, attempt));
                }
                Err(e) => {
                    last_error = e.to_string();
                    emit(StepPhase::Error, format!("{category}: {e}"));
                    last_compile_error = Some(e.to_string());
                }
            }
        }
        Err(ServiceError::GenerationFailed {
            category,
            regenerations: self.config.max_regens,
            last_error,
        })
    }
}

fn check(artifact: &ScriptArtifact, parent: &IndexMap<String, f64>, limits: Limits) -> Result<(), CompileError> {
    sim::compile_check_with_limits(&artifact.source, artifact.category, parent, limits)
}

fn describe_plan(plan: &SegmentPlan) -> String {
    let mut parts = Vec::new();
    if plan.is_followup {
        parts.push("follow-up".to_string());
    }
    for category in ScriptCategory::ALL {
        if let Some(text) = plan.segment(category) {
            parts.push(format!("{category}: {text}"));
        }
    }
    parts.join("\n")
}

fn describe_bundle(bundle: &InstructionBundle) -> String {
    bundle
        .iter()
        .map(|(c, text)| format!("{c}: {text}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Milliseconds since the Unix epoch.
pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl From<GatewayError> for ServiceError {
    fn from(source: GatewayError) -> Self {
        ServiceError::Helper(HelperError::Gateway {
            chain: crate::helper::Chain::Segmentation,
            source,
        })
    }
}
