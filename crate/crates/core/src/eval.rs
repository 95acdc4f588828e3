//! Compile-success evaluation over a prompt corpus.
//!
//! S̄ = (1/n) Σᵢ (1/mᵢ) Σⱼ sᵢⱼ, where sᵢⱼ is 1 when segment j of sample i
//! produced a script that passes the compile check.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::helper::HelperContext;
use crate::history::GeneratorMemory;
use crate::llm::{CallKind, CallRecorder, ChatMessage, Gateway, Mode};
use crate::model::{ParameterSet, ScriptArtifact, ScriptCategory};
use crate::prompts;
use crate::scriptgen::{example_messages, GeneratorRequest, ScriptGenerator};
use crate::service::Engine;
use crate::sim;
use crate::structured::parse_script_output;

pub const DEFAULT_CORPUS: &str = include_str!("../resources/corpus/techeval.txt");

/// Fixed examples for the plain baseline, one per category.
pub const CANONICAL_TRIO: [&str; 3] = ["primitive-square", "animation-bounce", "interaction-two-buttons"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineVariant {
    Baseline,
    BaselineRag,
    Segmentation,
    Full,
}

impl PipelineVariant {
    pub const ALL: [PipelineVariant; 4] = [
        PipelineVariant::Baseline,
        PipelineVariant::BaselineRag,
        PipelineVariant::Segmentation,
        PipelineVariant::Full,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PipelineVariant::Baseline => "baseline",
            PipelineVariant::BaselineRag => "baseline-rag",
            PipelineVariant::Segmentation => "segmentation",
            PipelineVariant::Full => "full",
        }
    }

    pub fn is_single_generator(self) -> bool {
        matches!(self, PipelineVariant::Baseline | PipelineVariant::BaselineRag)
    }
}

impl fmt::Display for PipelineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PipelineVariant {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| EvalError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to score")]
    Empty,
    #[error("sample {0} has no segments")]
    NoSegments(usize),
    #[error("unknown pipeline variant `{0}`")]
    UnknownVariant(String),
    #[error("corpus: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub prompt: String,
    pub m_i: usize,
    pub s_ij: Vec<u8>,
    /// Segment categories, parallel to `s_ij`.
    #[serde(default)]
    pub segments: Vec<ScriptCategory>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl SampleOutcome {
    pub fn score(&self) -> f64 {
        self.s_ij.iter().map(|s| f64::from(*s)).sum::<f64>() / self.m_i as f64
    }

    fn failed(prompt: &str, error: String) -> Self {
        Self {
            prompt: prompt.to_string(),
            m_i: 1,
            s_ij: vec![0],
            segments: Vec::new(),
            errors: vec![error],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub variant: PipelineVariant,
    pub n: usize,
    pub per_sample: Vec<SampleOutcome>,
    pub success_rate: f64,
    /// Wall time of every chat call, in seconds.
    pub latencies: Vec<f64>,
    pub mean_latency: f64,
    /// False in replay mode, where latencies measure fixture reads.
    pub latency_is_physical: bool,
}

/// Mean over samples of each sample's mean segment success.
pub fn success_rate(samples: &[SampleOutcome]) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if s.m_i == 0 || s.s_ij.len() != s.m_i {
            return Err(EvalError::NoSegments(i));
        }
        total += s.score();
    }
    Ok(total / samples.len() as f64)
}

/// Non-empty trimmed lines.
pub fn parse_corpus(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<String>, EvalError> {
    Ok(parse_corpus(&std::fs::read_to_string(path)?))
}

#[derive(Debug, Clone)]
pub struct Evaluator {
    engine: Engine,
    pub variant: PipelineVariant,
    pub jobs: usize,
}

impl Evaluator {
    pub fn new(engine: Engine, variant: PipelineVariant) -> Self {
        Self {
            engine,
            variant,
            jobs: 1,
        }
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    pub fn run_corpus(&self, path: impl AsRef<Path>) -> Result<EvalReport, EvalError> {
        self.run(&load_corpus(path)?)
    }

    /// Samples run in parallel up to `jobs`; results keep corpus order.
    pub fn run(&self, prompts: &[String]) -> Result<EvalReport, EvalError> {
        if prompts.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut results: Vec<Option<(SampleOutcome, Vec<f64>)>> = vec![None; prompts.len()];
        let chunk = prompts.len().div_ceil(self.jobs);
        std::thread::scope(|scope| {
            for (slots, batch) in results.chunks_mut(chunk).zip(prompts.chunks(chunk)) {
                scope.spawn(move || {
                    for (slot, prompt) in slots.iter_mut().zip(batch) {
                        *slot = Some(self.sample(prompt));
                    }
                });
            }
        });
        let mut per_sample = Vec::with_capacity(prompts.len());
        let mut latencies = Vec::new();
        for (outcome, lat) in results.into_iter().map(|r| r.expect("every sample ran")) {
            per_sample.push(outcome);
            latencies.extend(lat);
        }
        let success_rate = success_rate(&per_sample)?;
        let mean_latency = if latencies.is_empty() {
            0.0
        } else {
            latencies.iter().sum::<f64>() / latencies.len() as f64
        };
        Ok(EvalReport {
            variant: self.variant,
            n: per_sample.len(),
            per_sample,
            success_rate,
            latencies,
            mean_latency,
            latency_is_physical: self.engine.gateway().mode() != Mode::Replay,
        })
    }

    /// Scores one prompt. Never fails: errors score 0 and are noted.
    pub fn sample(&self, prompt: &str) -> (SampleOutcome, Vec<f64>) {
        let recorder = CallRecorder::new();
        let gateway = self.engine.gateway().recording(recorder.clone());
        let outcome = match self.variant {
            PipelineVariant::Baseline | PipelineVariant::BaselineRag => self.single(prompt, &gateway),
            PipelineVariant::Segmentation => self.segmented(prompt, &gateway),
            PipelineVariant::Full => self.full(prompt, &gateway),
        };
        let latencies = recorder
            .take()
            .into_iter()
            .filter(|r| r.kind == CallKind::Chat)
            .map(|r| r.elapsed_secs)
            .collect();
        (outcome, latencies)
    }

    fn baseline_messages(&self, prompt: &str) -> Result<Vec<ChatMessage>, String> {
        let examples = match self.variant {
            PipelineVariant::Baseline => CANONICAL_TRIO
                .iter()
                .map(|id| {
                    self.engine
                        .rag()
                        .get(id)
                        .ok_or_else(|| format!("canonical example `{id}` is missing"))
                })
                .collect::<Result<Vec<_>, _>>()?,
            _ => self
                .engine
                .rag()
                .top_k_merged(prompt, self.engine.config().top_k)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|s| s.record)
                .collect(),
        };
        let mut messages = vec![ChatMessage::system(prompts::generator(ScriptCategory::Primitive))];
        for record in &examples {
            messages.extend(example_messages(record));
        }
        messages.push(ChatMessage::user(
            serde_json::to_string_pretty(&json!({ "Prompt": prompt })).expect("json"),
        ));
        Ok(messages)
    }

    fn single(&self, prompt: &str, gateway: &Gateway) -> SampleOutcome {
        let result = self.baseline_messages(prompt).and_then(|messages| {
            let raw = gateway
                .complete(&self.engine.config().generator_model, &messages)
                .map_err(|e| e.to_string())?;
            let out = parse_script_output(&raw).map_err(|e| e.to_string())?;
            sim::compile_check_with_limits(&out.source, out.category, &IndexMap::new(), self.engine.config().limits)
                .map(|()| out.category)
                .map_err(|e| e.to_string())
        });
        match result {
            Ok(category) => SampleOutcome {
                prompt: prompt.to_string(),
                m_i: 1,
                s_ij: vec![1],
                segments: vec![category],
                errors: Vec::new(),
            },
            Err(e) => SampleOutcome::failed(prompt, e),
        }
    }

    fn segmented(&self, prompt: &str, gateway: &Gateway) -> SampleOutcome {
        let helper = self.engine.helper(gateway.clone());
        let plan = match helper.segment(prompt, &HelperContext::default()) {
            Ok(plan) => plan,
            Err(e) => return SampleOutcome::failed(prompt, e.to_string()),
        };
        let instructions: Vec<(ScriptCategory, String, Option<ParameterSet>)> = ScriptCategory::ALL
            .into_iter()
            .filter_map(|c| plan.segment(c).map(|t| (c, t.to_string(), None)))
            .collect();
        self.generate_all(prompt, gateway, instructions)
    }

    fn full(&self, prompt: &str, gateway: &Gateway) -> SampleOutcome {
        let helper = self.engine.helper(gateway.clone());
        let out = match helper.run(prompt, &HelperContext::default(), &mut |_| {}) {
            Ok(out) => out,
            Err(e) => return SampleOutcome::failed(prompt, e.to_string()),
        };
        let instructions = out
            .instructions
            .iter()
            .map(|(c, t)| {
                let params = (c == ScriptCategory::Primitive).then(|| out.params.clone());
                (c, t.to_string(), params)
            })
            .collect();
        self.generate_all(prompt, gateway, instructions)
    }

    /// One generation and compile check per segment, primitive first so the
    /// others see its parameters. No regeneration.
    fn generate_all(
        &self,
        prompt: &str,
        gateway: &Gateway,
        segments: Vec<(ScriptCategory, String, Option<ParameterSet>)>,
    ) -> SampleOutcome {
        if segments.is_empty() {
            return SampleOutcome::failed(prompt, "no segments".into());
        }
        let generator: ScriptGenerator = self.engine.generator(gateway.clone());
        let limits = self.engine.config().limits;
        let mut memory = GeneratorMemory::default();
        let mut parent: IndexMap<String, f64> = IndexMap::new();
        let mut outcome = SampleOutcome {
            prompt: prompt.to_string(),
            m_i: segments.len(),
            s_ij: Vec::new(),
            segments: Vec::new(),
            errors: Vec::new(),
        };
        for (category, instruction, params) in segments {
            let mut req = GeneratorRequest::new(category, instruction);
            if let Some(p) = params {
                req = req.with_parameters(p);
            }
            if category != ScriptCategory::Primitive {
                req = req.with_parent(parent.clone());
            }
            let result = generator
                .generate(&req, &mut memory)
                .map_err(|e| e.to_string())
                .and_then(|a: ScriptArtifact| {
                    sim::compile_check_with_limits(&a.source, category, &parent, limits)
                        .map(|()| a)
                        .map_err(|e| e.to_string())
                });
            outcome.segments.push(category);
            match result {
                Ok(a) => {
                    if category == ScriptCategory::Primitive {
                        parent = a.parameters;
                    }
                    outcome.s_ij.push(1);
                }
                Err(e) => {
                    outcome.errors.push(format!("{category}: {e}"));
                    outcome.s_ij.push(0);
                }
            }
        }
        outcome
    }
}
