//! Category generators: system prompt + retrieved examples + request,
//! parsed into a [`ScriptArtifact`].

use std::sync::Arc;

use indexmap::IndexMap;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::history::GeneratorMemory;
use crate::llm::{ChatMessage, Gateway, GatewayError};
use crate::model::{ParameterSet, ScriptArtifact, ScriptCategory};
use crate::prompts;
use crate::rag::{ExampleRecord, RagError, RagStore, DEFAULT_TOP_K};
use crate::sim;
use crate::structured::{self, StructuredError};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorRequest {
    pub category: ScriptCategory,
    pub instruction: String,
    /// Parameter names a primitive must declare.
    pub parameters: Option<ParameterSet>,
    /// The primitive's parameters, required for animation and interaction.
    pub parent_params: Option<IndexMap<String, f64>>,
    pub short_term_memory: Option<String>,
    pub compile_error: Option<String>,
}

impl GeneratorRequest {
    pub fn new(category: ScriptCategory, instruction: impl Into<String>) -> Self {
        Self {
            category,
            instruction: instruction.into(),
            parameters: None,
            parent_params: None,
            short_term_memory: None,
            compile_error: None,
        }
    }

    pub fn with_parameters(mut self, params: ParameterSet) -> Self {
        self.parameters = Some(params);
        self
    }

    pub fn with_parent(mut self, parent: IndexMap<String, f64>) -> Self {
        self.parent_params = Some(parent);
        self
    }

    pub fn with_memory(mut self, source: Option<String>) -> Self {
        self.short_term_memory = source;
        self
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.instruction.trim().is_empty() {
            return Err(GenerateError::EmptyInstruction);
        }
        if self.category != ScriptCategory::Primitive && self.parent_params.is_none() {
            return Err(GenerateError::MissingParentParams(self.category));
        }
        if self.compile_error.is_some() && self.short_term_memory.is_none() {
            return Err(GenerateError::ErrorWithoutMemory);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("{0} requests need parentparams")]
    MissingParentParams(ScriptCategory),
    #[error("a compile error can only be sent together with the previous script")]
    ErrorWithoutMemory,
    #[error("no previous {0} script to regenerate from")]
    NoMemory(ScriptCategory),
    #[error("structured output: {0}")]
    Structured(#[from] StructuredError),
    #[error("asked for a {expected} script but the model returned {found}")]
    CategoryMismatch {
        expected: ScriptCategory,
        found: ScriptCategory,
        raw: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("retrieval: {0}")]
    Retrieval(#[from] RagError),
}

impl GenerateError {
    /// Raw model output, for the error console.
    pub fn raw_output(&self) -> Option<&str> {
        match self {
            GenerateError::Structured(e) => Some(&e.raw),
            GenerateError::CategoryMismatch { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

fn example_input(category: ScriptCategory, instruction: &str, params: &IndexMap<String, f64>) -> Map<String, Value> {
    let mut input = Map::new();
    input.insert("Prompt".into(), json!(instruction));
    if category == ScriptCategory::Primitive {
        input.insert("parameters".into(), json!(params.keys().collect::<Vec<_>>()));
    } else {
        input.insert("parentparams".into(), json!(params));
    }
    input
}

fn pretty(value: &Map<String, Value>) -> String {
    serde_json::to_string_pretty(value).expect("maps serialize")
}

/// Renders a stored example as the (input, output) message pair shown to the model.
pub fn example_messages(record: &ExampleRecord) -> [ChatMessage; 2] {
    let input = example_input(record.category, &record.instruction, &record.params);
    let mut output = Map::new();
    output.insert("type".into(), json!(record.category.label()));
    output.insert("message".into(), json!(record.message));
    output.insert("content".into(), json!(record.code));
    [ChatMessage::user(pretty(&input)), ChatMessage::assistant(pretty(&output))]
}

#[derive(Debug, Clone)]
pub struct ScriptGenerator {
    gateway: Gateway,
    rag: Arc<RagStore>,
    model: String,
    pub top_k: usize,
}

impl ScriptGenerator {
    pub fn new(gateway: Gateway, rag: Arc<RagStore>, model: impl Into<String>) -> Self {
        Self {
            gateway,
            rag,
            model: model.into(),
            top_k: DEFAULT_TOP_K,
        }
    }

    pub fn rag(&self) -> &Arc<RagStore> {
        &self.rag
    }

    /// The full message list sent for `req`.
    pub fn messages(&self, req: &GeneratorRequest) -> Result<Vec<ChatMessage>, GenerateError> {
        req.validate()?;
        let mut messages = vec![ChatMessage::system(prompts::generator(req.category))];
        for hit in self.rag.top_k(req.category, &req.instruction, self.top_k)? {
            messages.extend(example_messages(&hit.record));
        }
        let mut input = match req.category {
            ScriptCategory::Primitive => {
                let names = req.parameters.as_ref().map(|p| p.names().to_vec()).unwrap_or_default();
                let mut m = Map::new();
                m.insert("Prompt".into(), json!(req.instruction));
                m.insert("parameters".into(), json!(names));
                m
            }
            _ => example_input(
                req.category,
                &req.instruction,
                req.parent_params.as_ref().expect("validated"),
            ),
        };
        if let Some(previous) = &req.short_term_memory {
            input.insert("previousScript".into(), json!(previous));
        }
        if let Some(error) = &req.compile_error {
            input.insert("compileError".into(), json!(error));
        }
        messages.push(ChatMessage::user(pretty(&input)));
        Ok(messages)
    }

    /// Generates one script and stores its source in `memory`.
    pub fn generate(
        &self,
        req: &GeneratorRequest,
        memory: &mut GeneratorMemory,
    ) -> Result<ScriptArtifact, GenerateError> {
        let messages = self.messages(req)?;
        let raw = self.gateway.complete(&self.model, &messages)?;
        let out = structured::parse_script_output(&raw)?;
        if out.category != req.category {
            return Err(GenerateError::CategoryMismatch {
                expected: req.category,
                found: out.category,
                raw,
            });
        }
        // Ground truth for sliders comes from running the initializer; a
        // script whose initializer fails is caught by the compile check.
        let parameters = sim::extract_parameters(&out.source, req.category).unwrap_or_default();
        memory.set(req.category, out.source.clone());
        Ok(ScriptArtifact {
            category: req.category,
            message: out.message,
            source: out.source,
            parameters,
            explanation: out.explanation,
            origin_prompt: req.instruction.clone(),
        })
    }

    /// Re-asks with the remembered script and the compile error attached.
    pub fn regenerate_on_error(
        &self,
        base: &GeneratorRequest,
        compile_error: &str,
        memory: &mut GeneratorMemory,
    ) -> Result<ScriptArtifact, GenerateError> {
        let previous = memory
            .get(base.category)
            .ok_or(GenerateError::NoMemory(base.category))?
            .to_string();
        let mut req = base.clone();
        req.short_term_memory = Some(previous);
        req.compile_error = Some(compile_error.to_string());
        self.generate(&req, memory)
    }
}
