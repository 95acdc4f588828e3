//! Category-partitioned instruction → code examples with exact cosine top-k.

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{Gateway, GatewayError};
use crate::model::ScriptCategory;

/// Number of examples retrieved per generation.
pub const DEFAULT_TOP_K: usize = 3;

const SEED_PRIMITIVE: &str = include_str!("../resources/rag/primitive.jsonl");
const SEED_ANIMATION: &str = include_str!("../resources/rag/animation.jsonl");
const SEED_INTERACTION: &str = include_str!("../resources/rag/interaction.jsonl");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub category: ScriptCategory,
    pub instruction: String,
    /// The `message` field shown in the example's output.
    #[serde(default)]
    pub message: String,
    pub code: String,
    /// Parameters shown in the example's input: the primitive's own
    /// initial values, or the parentparams an animation/interaction edits.
    #[serde(default)]
    pub params: IndexMap<String, f64>,
    /// True for examples written for this project rather than taken from the reference set.
    #[serde(default)]
    pub original: bool,
    #[serde(default)]
    pub embedding: Vec<f32>,
}

/// Example content before embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct NewExample {
    pub id: Option<String>,
    pub instruction: String,
    pub message: String,
    pub code: String,
    pub params: IndexMap<String, f64>,
    pub original: bool,
}

impl NewExample {
    pub fn new(instruction: impl Into<String>, code: impl Into<String>) -> Self {
        Self {
            id: None,
            instruction: instruction.into(),
            message: String::new(),
            code: code.into(),
            params: IndexMap::new(),
            original: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum RagError {
    #[error("example instruction is empty")]
    EmptyInstruction,
    #[error("example code is empty")]
    EmptyCode,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("example id `{0}` already exists")]
    DuplicateId(String),
    #[error("embedding has dimension {found}, store uses {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("record `{id}` belongs to {found}, not {expected}")]
    WrongCategory {
        id: String,
        expected: ScriptCategory,
        found: ScriptCategory,
    },
    #[error("line {line}: {message}")]
    BadLine { line: usize, message: String },
    #[error(transparent)]
    Embedding(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A retrieved record with its similarity to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub record: ExampleRecord,
    pub similarity: f64,
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Three collections sharing one embedding model and dimension.
pub struct RagStore {
    gateway: Gateway,
    model: String,
    collections: [RwLock<Vec<ExampleRecord>>; 3],
    dim: Mutex<Option<usize>>,
}

impl std::fmt::Debug for RagStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RagStore")
            .field("model", &self.model)
            .field("sizes", &ScriptCategory::ALL.map(|c| self.len(c)))
            .finish()
    }
}

fn slot(category: ScriptCategory) -> usize {
    match category {
        ScriptCategory::Primitive => 0,
        ScriptCategory::Animation => 1,
        ScriptCategory::Interaction => 2,
    }
}

impl RagStore {
    pub fn new(gateway: Gateway, embedding_model: impl Into<String>) -> Self {
        Self {
            gateway,
            model: embedding_model.into(),
            collections: Default::default(),
            dim: Mutex::new(None),
        }
    }

    /// A store holding the bundled seed collections.
    pub fn seeded(gateway: Gateway, embedding_model: impl Into<String>) -> Result<Self, RagError> {
        let store = Self::new(gateway, embedding_model);
        for (category, text) in seed_sources() {
            store.load_lines(category, text.as_bytes())?;
        }
        Ok(store)
    }

    pub fn embedding_model(&self) -> &str {
        &self.model
    }

    pub fn len(&self, category: ScriptCategory) -> usize {
        self.read(category).len()
    }

    pub fn is_empty(&self) -> bool {
        ScriptCategory::ALL.iter().all(|c| self.len(*c) == 0)
    }

    pub fn records(&self, category: ScriptCategory) -> Vec<ExampleRecord> {
        self.read(category).clone()
    }

    pub fn get(&self, id: &str) -> Option<ExampleRecord> {
        ScriptCategory::ALL
            .iter()
            .find_map(|c| self.read(*c).iter().find(|r| r.id == id).cloned())
    }

    fn read(&self, category: ScriptCategory) -> std::sync::RwLockReadGuard<'_, Vec<ExampleRecord>> {
        self.collections[slot(category)]
            .read()
            .unwrap_or_else(|e| e.into_inner())
    }

    /// Embeds and appends one example with a fresh id.
    pub fn add_example(
        &self,
        category: ScriptCategory,
        instruction: &str,
        code: &str,
    ) -> Result<ExampleRecord, RagError> {
        self.add(category, NewExample::new(instruction, code))
    }

    pub fn add(&self, category: ScriptCategory, example: NewExample) -> Result<ExampleRecord, RagError> {
        if example.instruction.trim().is_empty() {
            return Err(RagError::EmptyInstruction);
        }
        if example.code.trim().is_empty() {
            return Err(RagError::EmptyCode);
        }
        let embedding = self.gateway.embed(&self.model, &example.instruction)?;
        let record = ExampleRecord {
            id: example
                .id
                .unwrap_or_else(|| format!("{category}-{}", uuid::Uuid::new_v4().simple())),
            category,
            instruction: example.instruction,
            message: example.message,
            code: example.code,
            params: example.params,
            original: example.original,
            embedding,
        };
        self.insert(record.clone())?;
        Ok(record)
    }

    /// Appends an already-embedded record.
    pub fn insert(&self, record: ExampleRecord) -> Result<(), RagError> {
        if record.instruction.trim().is_empty() {
            return Err(RagError::EmptyInstruction);
        }
        if record.code.trim().is_empty() {
            return Err(RagError::EmptyCode);
        }
        {
            let mut dim = self.dim.lock().unwrap_or_else(|e| e.into_inner());
            match *dim {
                Some(d) if d != record.embedding.len() => {
                    return Err(RagError::DimensionMismatch {
                        expected: d,
                        found: record.embedding.len(),
                    })
                }
                Some(_) => {}
                None => *dim = Some(record.embedding.len()),
            }
        }
        if self.get(&record.id).is_some() {
            return Err(RagError::DuplicateId(record.id));
        }
        self.collections[slot(record.category)]
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .push(record);
        Ok(())
    }

    /// Top `k` records of one collection by descending cosine similarity;
    /// ties keep insertion order.
    pub fn top_k(&self, category: ScriptCategory, query: &str, k: usize) -> Result<Vec<Scored>, RagError> {
        if k == 0 {
            return Err(RagError::ZeroK);
        }
        if self.len(category) == 0 {
            return Ok(Vec::new());
        }
        let q = self.gateway.embed(&self.model, query)?;
        Ok(rank(self.read(category).iter(), &q, k))
    }

    /// Top `k` over all three collections, primitive records first on ties.
    pub fn top_k_merged(&self, query: &str, k: usize) -> Result<Vec<Scored>, RagError> {
        if k == 0 {
            return Err(RagError::ZeroK);
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.gateway.embed(&self.model, query)?;
        let guards: Vec<_> = ScriptCategory::ALL.iter().map(|c| self.read(*c)).collect();
        Ok(rank(guards.iter().flat_map(|g| g.iter()), &q, k))
    }

    /// Reads JSON lines; records lacking an embedding (or embedded with a
    /// different dimension) are embedded with this store's model.
    pub fn load_jsonl(&self, category: ScriptCategory, path: &Path) -> Result<usize, RagError> {
        let file = fs::File::open(path)?;
        self.load_lines(category, io::BufReader::new(file))
    }

    fn load_lines(&self, category: ScriptCategory, reader: impl BufRead) -> Result<usize, RagError> {
        let mut count = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut record: ExampleRecord = serde_json::from_str(&line).map_err(|e| RagError::BadLine {
                line: i + 1,
                message: e.to_string(),
            })?;
            if record.category != category {
                return Err(RagError::WrongCategory {
                    id: record.id,
                    expected: category,
                    found: record.category,
                });
            }
            let expected = *self.dim.lock().unwrap_or_else(|e| e.into_inner());
            if record.embedding.is_empty() || expected.is_some_and(|d| d != record.embedding.len()) {
                record.embedding = self.gateway.embed(&self.model, &record.instruction)?;
            }
            self.insert(record)?;
            count += 1;
        }
        Ok(count)
    }

    pub fn save_jsonl(&self, category: ScriptCategory, path: &Path) -> Result<(), RagError> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        for record in self.read(category).iter() {
            serde_json::to_writer(&mut out, record).map_err(io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

fn rank<'a>(records: impl Iterator<Item = &'a ExampleRecord>, query: &[f32], k: usize) -> Vec<Scored> {
    let mut scored: Vec<(usize, f64, &ExampleRecord)> = records
        .enumerate()
        .map(|(i, r)| (i, cosine(query, &r.embedding), r))
        .collect();
    // Stable sort keeps insertion order among equal similarities.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored
        .into_iter()
        .take(k)
        .map(|(_, similarity, r)| Scored {
            record: r.clone(),
            similarity,
        })
        .collect()
}

/// The bundled seed collections as `(category, JSON lines)`.
pub fn seed_sources() -> [(ScriptCategory, &'static str); 3] {
    [
        (ScriptCategory::Primitive, SEED_PRIMITIVE),
        (ScriptCategory::Animation, SEED_ANIMATION),
        (ScriptCategory::Interaction, SEED_INTERACTION),
    ]
}
