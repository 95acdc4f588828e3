//! Prompt-to-pin-display authoring: LLM chains, script generators, a sandboxed
//! 24x24 pin runtime, the session engine and the evaluation harness.

pub mod eval;
pub mod grid;
pub mod helper;
pub mod history;
pub mod hw;
pub mod llm;
pub mod model;
pub mod prompts;
pub mod rag;
pub mod scriptgen;
pub mod service;
pub mod sim;
pub mod structured;

pub use eval::{success_rate, EvalError, EvalReport, Evaluator, PipelineVariant, SampleOutcome};
pub use grid::{pin_coords, pin_index, GridError, HeightField, GRID_X, GRID_Y, MAX_HEIGHT, PIN_COUNT};
pub use helper::{HelperContext, HelperError, HelperEvent, HelperOutput, PromptHelper};
pub use history::{CardId, GeneratorMemory, HelperTurn, HistoryCard, HistoryError, NewCard, Session};
pub use hw::{quantize, LatestSlot, WireError, WireFrame, PRESS_THRESHOLD};
pub use llm::{ChatMessage, Gateway, GatewayError, Mode, ModelConfig, Role};
pub use model::{
    slider_bounds, InstructionBundle, ModelError, ParameterSet, ScriptArtifact, ScriptCategory,
    SegmentPlan, SliderSpec, ValidationVerdict,
};
pub use rag::{ExampleRecord, RagError, RagStore, DEFAULT_TOP_K};
pub use scriptgen::{GenerateError, GeneratorRequest, ScriptGenerator};
pub use service::{
    Engine, EngineConfig, Event, FrameMessage, HistorySnapshot, Hub, HubConfig, ServiceError,
    SessionHandle, SessionId, SessionState, StepFeedback, StepPhase,
};
pub use sim::{
    compile_check, extract_parameters, ButtonSpec, CompileError, CompilePhase, Fault, FaultKind,
    Frame, Limits, PinState, Scene, SceneError,
};
pub use structured::{parse_script_output, ScriptOutput, StructuredError};
