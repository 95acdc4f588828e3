//! Append-only JSONL log of the commands that changed a session.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SessionId;
use crate::history::CardId;
use crate::sim::ButtonSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum LoggedCommand {
    #[serde(rename_all = "camelCase")]
    Prompt {
        text: String,
        created_at_ms: u64,
        fixture_keys: Vec<String>,
    },
    Param {
        name: String,
        value: f64,
    },
    Button {
        group: u32,
        pressed: bool,
    },
    Toggle {
        index: usize,
    },
    Rollback {
        card: CardId,
    },
    ButtonConfig {
        spec: ButtonSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LogEntry {
    pub session_id: SessionId,
    pub at_ms: u64,
    #[serde(flatten)]
    pub command: LoggedCommand,
}

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, entry: &LogEntry) -> io::Result<()> {
        let mut line = serde_json::to_string(entry).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }

    pub fn read(path: impl AsRef<Path>) -> io::Result<Vec<LogEntry>> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
            entries.push(entry);
        }
        Ok(entries)
    }
}
