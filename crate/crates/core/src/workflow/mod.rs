//! The annotation state machine.
//!
//! Every mutation is an [`Event`] appended to a journal; the [`Store`] is the
//! fold of its events, so replaying a journal rebuilds the exact state.
//!
//! ```text
//! Pending ──suggest──> ModelSuggested ──accept──> ModelAccepted*
//!    │                      └──reject──> ModelRejected
//!    │ (no usable model candidate)            │
//!    └───────────────┬────────────────────────┘
//!                    └──search hits──> SearchSuggested ──select──> SearchAccepted*
//!                                             └──no match──> Unlabeled*
//! finalize: every non-terminal record ──> Unlabeled*
//! ```

mod export;
mod journal;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::Candidate;
use crate::corpus::Mention;
use crate::resolver::ResolvedEntity;
use crate::wapis::HostStatus;

pub use export::{export_tsv, ExportRow, EXPORT_HEADER};
pub use journal::{read_journal, Event, EventKind, JournalWriter};
pub use store::{RequestEntry, Store, StoreSnapshot, JOURNAL_FILE, SNAPSHOT_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WorkflowState {
    Pending,
    ModelSuggested,
    ModelAccepted,
    ModelRejected,
    SearchSuggested,
    SearchAccepted,
    Unlabeled,
}

impl WorkflowState {
    pub const ALL: [WorkflowState; 7] = [
        WorkflowState::Pending,
        WorkflowState::ModelSuggested,
        WorkflowState::ModelAccepted,
        WorkflowState::ModelRejected,
        WorkflowState::SearchSuggested,
        WorkflowState::SearchAccepted,
        WorkflowState::Unlabeled,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            WorkflowState::ModelAccepted | WorkflowState::SearchAccepted | WorkflowState::Unlabeled
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WorkflowState::Pending => "Pending",
            WorkflowState::ModelSuggested => "ModelSuggested",
            WorkflowState::ModelAccepted => "ModelAccepted",
            WorkflowState::ModelRejected => "ModelRejected",
            WorkflowState::SearchSuggested => "SearchSuggested",
            WorkflowState::SearchAccepted => "SearchAccepted",
            WorkflowState::Unlabeled => "Unlabeled",
        }
    }
}

impl fmt::Display for WorkflowState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("unknown {} {s:?}", stringify!($name))),
                }
            }
        }
    };
}

string_enum!(UnlabeledCategory {
    Person => "person",
    FictionalCharacter => "fictional_character",
    InstitutionCompany => "institution_company",
    Location => "location",
    BookTitle => "book_title",
    Brand => "brand",
    Event => "event",
    Show => "show",
    Nomenclature => "nomenclature",
    Magazine => "magazine",
    Deity => "deity",
    Other => "other",
});

string_enum!(UnlabeledFactor {
    FirstNameOnly => "first_name_only",
    LastNameOnly => "last_name_only",
    Nickname => "nickname",
    NameInsertion => "name_insertion",
    Abbreviation => "abbreviation",
    NoContext => "no_context",
    InexactLocation => "inexact_location",
    TranslatedTitle => "translated_title",
    Misspelling => "misspelling",
    None => "none",
});

/// Why an unlabeled mention got no label: what it refers to, and what
/// likely misled the automatic steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlabeledTag {
    pub category: UnlabeledCategory,
    #[serde(default)]
    pub factors: BTreeSet<UnlabeledFactor>,
}

impl UnlabeledTag {
    pub fn new(
        category: UnlabeledCategory,
        factors: impl IntoIterator<Item = UnlabeledFactor>,
    ) -> Self {
        UnlabeledTag {
            category,
            factors: factors.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelDecision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchSelection {
    Index(usize),
    NoMatch,
}

/// A candidate together with its QID resolution, when it has one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedCandidate {
    pub candidate: Candidate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<ResolvedEntity>,
}

impl ResolvedCandidate {
    pub fn new(mut candidate: Candidate, entity: Option<ResolvedEntity>) -> Self {
        if let Some(e) = &entity {
            candidate.qid = Some(e.qid.clone());
        }
        ResolvedCandidate { candidate, entity }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionEntry {
    pub annotator_id: String,
    pub action: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowRecord {
    pub mention_id: String,
    pub mention: Mention,
    pub subcategory: String,
    pub state: WorkflowState,
    /// Set once the model round has run for this mention.
    pub model_done: bool,
    /// Set once search results have been attached.
    pub search_done: bool,
    /// Full model list, best-first; only the first is reviewed.
    pub model_candidates: Vec<ResolvedCandidate>,
    /// Resolved search candidates in presentation order.
    pub search_candidates: Vec<ResolvedCandidate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub search_status: Vec<(String, HostStatus)>,
    pub correct_wiki: Option<ResolvedEntity>,
    pub suggestion_wiki: Option<ResolvedEntity>,
    pub overlap: Option<bool>,
    pub decisions: Vec<DecisionEntry>,
    pub unlabeled_tag: Option<UnlabeledTag>,
}

impl WorkflowRecord {
    fn new(mention: Mention, subcategory: String) -> Self {
        WorkflowRecord {
            mention_id: mention.id.clone(),
            mention,
            subcategory,
            state: WorkflowState::Pending,
            model_done: false,
            search_done: false,
            model_candidates: Vec::new(),
            search_candidates: Vec::new(),
            search_status: Vec::new(),
            correct_wiki: None,
            suggestion_wiki: None,
            overlap: None,
            decisions: Vec::new(),
            unlabeled_tag: None,
        }
    }

    /// The model's reviewable suggestion: the first candidate, if resolved.
    pub fn model_top(&self) -> Option<&ResolvedEntity> {
        self.model_candidates
            .first()
            .and_then(|c| c.entity.as_ref())
    }

    /// The label this record ended up with, if any.
    pub fn label(&self) -> Option<&ResolvedEntity> {
        self.correct_wiki.as_ref().or(self.suggestion_wiki.as_ref())
    }

    /// Checks the per-state field invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let fail = |msg: &str| Err(format!("{}: {msg}", self.mention_id));
        match self.state {
            WorkflowState::ModelAccepted if self.correct_wiki.is_none() => {
                return fail("ModelAccepted without correct_wiki")
            }
            WorkflowState::SearchAccepted
                if self.suggestion_wiki.is_none() || self.correct_wiki.is_some() =>
            {
                return fail("SearchAccepted needs suggestion_wiki and no correct_wiki")
            }
            WorkflowState::Unlabeled
                if self.correct_wiki.is_some() || self.suggestion_wiki.is_some() =>
            {
                return fail("Unlabeled with a wiki label")
            }
            _ => {}
        }
        if self.unlabeled_tag.is_some() && self.state != WorkflowState::Unlabeled {
            return fail("taxonomy tag on a labeled record");
        }
        if self.overlap == Some(true) {
            let qid = self.correct_wiki.as_ref().map(|e| e.qid.as_str());
            let hit = self
                .search_candidates
                .iter()
                .any(|c| c.entity.as_ref().map(|e| e.qid.as_str()) == qid);
            if !hit {
                return fail("overlap without matching search QID");
            }
        }
        if self
            .decisions
            .windows(2)
            .any(|w| w[0].timestamp > w[1].timestamp)
        {
            return fail("decision timestamps not monotone");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("unknown mention {0:?}")]
    UnknownMention(String),
    #[error("duplicate mention id {0:?}")]
    DuplicateMention(String),
    #[error("{op} is not allowed for {mention_id} in state {state}")]
    Transition {
        mention_id: String,
        state: WorkflowState,
        op: &'static str,
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("store is not finalized")]
    NotFinalized,
    #[error("journal: {0}")]
    Journal(#[from] std::io::Error),
    #[error("corrupt journal at line {line}: {reason}")]
    CorruptJournal { line: usize, reason: String },
}
