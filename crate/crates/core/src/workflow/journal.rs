use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelDecision, ResolvedCandidate, SearchSelection, UnlabeledTag, WorkflowError};
use crate::corpus::Mention;
use crate::wapis::HostStatus;

/// One journal line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Empty for store-wide events.
    pub mention_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    /// Epoch milliseconds; never decreases along the journal.
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    Init {
        mention: Mention,
        subcategory: String,
    },
    ModelSuggestion {
        candidates: Vec<ResolvedCandidate>,
    },
    ModelDecision {
        decision: ModelDecision,
    },
    SearchResults {
        candidates: Vec<ResolvedCandidate>,
        per_host_status: Vec<(String, HostStatus)>,
    },
    SearchSelection {
        selection: SearchSelection,
    },
    Finalize,
    Tag {
        tag: UnlabeledTag,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Init { .. } => "init",
            EventKind::ModelSuggestion { .. } => "model_suggestion",
            EventKind::ModelDecision { .. } => "model_decision",
            EventKind::SearchResults { .. } => "search_results",
            EventKind::SearchSelection { .. } => "search_selection",
            EventKind::Finalize => "finalize",
            EventKind::Tag { .. } => "tag",
        }
    }

    /// Events that record a human decision.
    pub fn is_decision(&self) -> bool {
        matches!(
            self,
            EventKind::ModelDecision { .. }
                | EventKind::SearchSelection { .. }
                | EventKind::Tag { .. }
        )
    }
}

/// Append-only journal file; every event is flushed before the store
/// commits it.
pub struct JournalWriter {
    out: BufWriter<File>,
}

impl JournalWriter {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JournalWriter {
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, event: &Event) -> std::io::Result<()> {
        let line = serde_json::to_string(event).expect("event serializes");
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

pub fn read_journal(path: impl AsRef<Path>) -> Result<Vec<Event>, WorkflowError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| WorkflowError::CorruptJournal {
            line: n + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}
