//! Human review over the workflow store: leased work queues per stage,
//! decision submission and progress reporting. [`http`] exposes it as a
//! JSON API.
//!
//! Lock order is leases, then store. Every mutation holds both, so the store
//! keeps a single writer and a decision can never race its own lease.

pub mod http;
mod lease;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::corpus::NeType;
use crate::stats::{provisional_coverage, CoverageReport, Ratio};
use crate::workflow::{
    ModelDecision, ResolvedCandidate, SearchSelection, Store, UnlabeledTag, WorkflowError,
    WorkflowRecord, WorkflowState,
};

pub use lease::{Lease, LeaseTable};

pub const DEFAULT_LEASE_TTL: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ModelReview,
    SearchReview,
    Taxonomy,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::ModelReview, Stage::SearchReview, Stage::Taxonomy];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::ModelReview => "model_review",
            Stage::SearchReview => "search_review",
            Stage::Taxonomy => "taxonomy",
        }
    }

    /// Whether a record is waiting for this stage.
    pub fn wants(self, record: &WorkflowRecord) -> bool {
        match self {
            Stage::ModelReview => record.state == WorkflowState::ModelSuggested,
            Stage::SearchReview => record.state == WorkflowState::SearchSuggested,
            Stage::Taxonomy => {
                record.state == WorkflowState::Unlabeled && record.unlabeled_tag.is_none()
            }
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| ServiceError::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub mention_id: String,
    pub stage: Stage,
    pub surface: String,
    pub left_context: String,
    pub right_context: String,
    pub ne_type: NeType,
    /// Model stage: the single top candidate. Search stage: every resolved
    /// candidate, preferred languages first. Taxonomy: empty.
    pub candidates: Vec<ResolvedCandidate>,
    pub lease_token: String,
    pub expires_at: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum DecisionPayload {
    Accept,
    Reject,
    Select { index: usize },
    NoMatch,
    Tag { tag: UnlabeledTag },
}

impl DecisionPayload {
    pub fn stage(&self) -> Stage {
        match self {
            DecisionPayload::Accept | DecisionPayload::Reject => Stage::ModelReview,
            DecisionPayload::Select { .. } | DecisionPayload::NoMatch => Stage::SearchReview,
            DecisionPayload::Tag { .. } => Stage::Taxonomy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub token: String,
    /// Client-chosen id; re-posting the same id is acknowledged without a
    /// second journal event.
    #[serde(default)]
    pub request_id: Option<String>,
    pub decision: DecisionPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub mention_id: String,
    pub state: WorkflowState,
    pub journal_seq: u64,
    /// True when this was a retry of an already applied request.
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    /// Items waiting per review stage (leased or not).
    pub stages: BTreeMap<Stage, usize>,
    pub states: BTreeMap<WorkflowState, usize>,
    pub active_leases: usize,
    pub finalized: bool,
    /// The partition as it would be if the store were finalized now.
    pub coverage: CoverageReport,
    /// One-decimal display values for model / search / unlabeled shares.
    pub display: BTreeMap<String, String>,
    pub journal_seq: u64,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown stage {0:?}")]
    UnknownStage(String),
    #[error("lease conflict: {0}")]
    Conflict(String),
    #[error("unknown mention {0:?}")]
    NotFound(String),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
}

pub struct ReviewService {
    leases: Mutex<LeaseTable>,
    store: Mutex<Store>,
    clock: Arc<dyn Clock>,
    lease_ttl: Duration,
}

impl ReviewService {
    pub fn new(store: Store, clock: Arc<dyn Clock>, lease_ttl: Duration) -> Self {
        ReviewService {
            leases: Mutex::new(LeaseTable::default()),
            store: Mutex::new(store),
            clock,
            lease_ttl,
        }
    }

    pub fn into_store(self) -> Store {
        self.store.into_inner()
    }

    /// Runs `f` against the store under its lock.
    pub fn with_store<T>(&self, f: impl FnOnce(&Store) -> T) -> T {
        f(&self.store.lock())
    }

    fn new_token() -> String {
        uuid::Uuid::new_v4().simple().to_string()
    }

    /// Leases up to `n` items of `stage` to `annotator_id`, in store order.
    /// Items the annotator already holds are returned again with their
    /// existing tokens; items leased to anyone else are skipped.
    pub fn get_queue(&self, stage: Stage, annotator_id: &str, n: usize) -> Vec<ReviewItem> {
        let now = self.clock.now_millis();
        let expires_at = now + self.lease_ttl.as_millis() as i64;
        let mut leases = self.leases.lock();
        leases.purge_expired(now);
        let store = self.store.lock();
        let mut items = Vec::new();
        for record in store.records() {
            if items.len() >= n {
                break;
            }
            if !stage.wants(record) {
                continue;
            }
            let token = match leases.holder(&record.mention_id, now) {
                Some(l) if l.annotator_id == annotator_id && l.stage == stage => l.token.clone(),
                Some(_) => continue,
                None => {
                    let token = Self::new_token();
                    leases.grant(Lease {
                        mention_id: record.mention_id.clone(),
                        annotator_id: annotator_id.to_string(),
                        stage,
                        token: token.clone(),
                        expires_at,
                    });
                    token
                }
            };
            let lease_expiry = leases
                .by_token(&token)
                .map(|l| l.expires_at)
                .unwrap_or(expires_at);
            items.push(review_item(record, stage, token, lease_expiry));
        }
        items
    }

    pub fn renew(&self, token: &str) -> Result<i64, ServiceError> {
        let now = self.clock.now_millis();
        let mut leases = self.leases.lock();
        match leases.by_token(token) {
            Some(l) if l.expires_at > now => {}
            _ => return Err(ServiceError::Conflict("lease expired or unknown".into())),
        }
        let expires_at = now + self.lease_ttl.as_millis() as i64;
        leases.renew(token, expires_at);
        Ok(expires_at)
    }

    /// Applies a decision through the workflow and releases the lease.
    pub fn post_decision(
        &self,
        request: &DecisionRequest,
    ) -> Result<DecisionOutcome, ServiceError> {
        let now = self.clock.now_millis();
        let mut leases = self.leases.lock();
        let mut store = self.store.lock();

        if let Some(entry) = request
            .request_id
            .as_deref()
            .and_then(|r| store.request_entry(r))
        {
            let state = store
                .record(&entry.mention_id)
                .map(|r| r.state)
                .unwrap_or(WorkflowState::Pending);
            return Ok(DecisionOutcome {
                mention_id: entry.mention_id.clone(),
                state,
                journal_seq: entry.seq,
                duplicate: true,
            });
        }

        let lease = match leases.by_token(&request.token) {
            Some(l) if l.expires_at > now => l.clone(),
            Some(_) => {
                leases.release_token(&request.token);
                return Err(ServiceError::Conflict("lease expired".into()));
            }
            None => return Err(ServiceError::Conflict("unknown lease token".into())),
        };
        if lease.stage != request.decision.stage() {
            return Err(ServiceError::Conflict(format!(
                "{:?} is not a {} decision",
                request.decision, lease.stage
            )));
        }
        let id = lease.mention_id.as_str();
        let annotator = lease.annotator_id.as_str();
        let request_id = request.request_id.as_deref();
        let state = match &request.decision {
            DecisionPayload::Accept => store.apply_model_decision_with_request(
                id,
                ModelDecision::Accept,
                annotator,
                request_id,
            )?,
            DecisionPayload::Reject => store.apply_model_decision_with_request(
                id,
                ModelDecision::Reject,
                annotator,
                request_id,
            )?,
            DecisionPayload::Select { index } => store.apply_search_selection_with_request(
                id,
                SearchSelection::Index(*index),
                annotator,
                request_id,
            )?,
            DecisionPayload::NoMatch => store.apply_search_selection_with_request(
                id,
                SearchSelection::NoMatch,
                annotator,
                request_id,
            )?,
            DecisionPayload::Tag { tag } => {
                store.tag_unlabeled_with_request(id, tag.clone(), annotator, request_id)?
            }
        };
        leases.release_token(&request.token);
        Ok(DecisionOutcome {
            mention_id: lease.mention_id,
            state,
            journal_seq: store.last_seq(),
            duplicate: false,
        })
    }

    pub fn get_progress(&self) -> Progress {
        let now = self.clock.now_millis();
        let active_leases = self.leases.lock().active(now).count();
        let store = self.store.lock();
        let stages = Stage::ALL
            .iter()
            .map(|s| (*s, store.records().iter().filter(|r| s.wants(r)).count()))
            .collect();
        let coverage = provisional_coverage(&store);
        let show = |r: Option<Ratio>| {
            r.map(Ratio::display_percent)
                .unwrap_or_else(|| "0.0".into())
        };
        let display = BTreeMap::from([
            ("model".to_string(), show(coverage.model_share())),
            ("search".to_string(), show(coverage.search_share())),
            ("unlabeled".to_string(), show(coverage.unlabeled_share())),
        ]);
        Progress {
            stages,
            states: store.count_by_state(),
            active_leases,
            finalized: store.is_finalized(),
            coverage,
            display,
            journal_seq: store.last_seq(),
        }
    }

    pub fn get_mention(&self, mention_id: &str) -> Result<WorkflowRecord, ServiceError> {
        self.store
            .lock()
            .record(mention_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(mention_id.to_string()))
    }

    pub fn export_tsv(&self) -> Result<String, ServiceError> {
        let store = self.store.lock();
        let mut out = Vec::new();
        crate::workflow::export_tsv(&store, &mut out)?;
        Ok(String::from_utf8(out).expect("export is UTF-8"))
    }
}

fn review_item(
    record: &WorkflowRecord,
    stage: Stage,
    token: String,
    expires_at: i64,
) -> ReviewItem {
    let candidates = match stage {
        Stage::ModelReview => record.model_candidates.iter().take(1).cloned().collect(),
        Stage::SearchReview => record.search_candidates.clone(),
        Stage::Taxonomy => Vec::new(),
    };
    ReviewItem {
        mention_id: record.mention_id.clone(),
        stage,
        surface: record.mention.surface.clone(),
        left_context: record.mention.left_context.clone(),
        right_context: record.mention.right_context.clone(),
        ne_type: record.mention.ne_type,
        candidates,
        lease_token: token,
        expires_at,
    }
}
