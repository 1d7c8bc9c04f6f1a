use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::journal::{read_journal, Event, EventKind, JournalWriter};
use super::{
    DecisionEntry, ModelDecision, ResolvedCandidate, SearchSelection, UnlabeledTag, WorkflowError,
    WorkflowRecord, WorkflowState,
};
use crate::clock::{Clock, SystemClock};
use crate::corpus::{Document, Mention};
use crate::resolver::ResolvedEntity;
use crate::wapis::SearchResult;

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
const SYSTEM_ANNOTATOR: &str = "system";

/// The serializable part of a store. Two stores with equal snapshots are
/// indistinguishable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StoreSnapshot {
    pub last_seq: u64,
    pub last_timestamp: i64,
    pub finalized: bool,
    pub records: Vec<WorkflowRecord>,
    /// Client request id -> the event it produced.
    pub request_ids: BTreeMap<String, RequestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestEntry {
    pub seq: u64,
    pub mention_id: String,
}

/// Single-writer workflow store. Mutations go through the journal first.
pub struct Store {
    snap: StoreSnapshot,
    index: HashMap<String, usize>,
    sink: Option<JournalWriter>,
    dir: Option<PathBuf>,
    events_since_snapshot: usize,
    snapshot_every: usize,
    clock: Arc<dyn Clock>,
    preferred_languages: Vec<String>,
}

impl Default for Store {
    fn default() -> Self {
        Store::in_memory(Arc::new(SystemClock))
    }
}

impl Store {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Store {
            snap: StoreSnapshot::default(),
            index: HashMap::new(),
            sink: None,
            dir: None,
            events_since_snapshot: 0,
            snapshot_every: 0,
            clock,
            preferred_languages: vec!["is".to_string()],
        }
    }

    /// Opens a journal directory: loads the snapshot if present, replays
    /// journal events past it and appends new events to the journal.
    pub fn open(dir: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, WorkflowError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = Store::in_memory(clock);
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        if snapshot_path.exists() {
            let text = fs::read_to_string(&snapshot_path)?;
            let snap: StoreSnapshot =
                serde_json::from_str(&text).map_err(|e| WorkflowError::CorruptJournal {
                    line: 0,
                    reason: format!("snapshot: {e}"),
                })?;
            store.load_snapshot(snap);
        }
        let from = store.snap.last_seq;
        for event in read_journal(dir.join(JOURNAL_FILE))? {
            if event.seq > from {
                store.apply(&event)?;
            }
        }
        store.sink = Some(JournalWriter::open(dir.join(JOURNAL_FILE))?);
        store.dir = Some(dir);
        Ok(store)
    }

    /// Rebuilds a store from events alone.
    pub fn replay<'a>(
        events: impl IntoIterator<Item = &'a Event>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, WorkflowError> {
        let mut store = Store::in_memory(clock);
        for event in events {
            store.apply(event)?;
        }
        Ok(store)
    }

    /// Search candidates in these languages are presented first, in list order.
    pub fn set_preferred_languages(&mut self, languages: Vec<String>) {
        self.preferred_languages = languages;
    }

    /// Writes a snapshot every `n` events (0 disables).
    pub fn set_snapshot_every(&mut self, n: usize) {
        self.snapshot_every = n;
    }

    fn load_snapshot(&mut self, snap: StoreSnapshot) {
        self.index = snap
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.mention_id.clone(), i))
            .collect();
        self.snap = snap;
    }

    pub fn snapshot(&self) -> &StoreSnapshot {
        &self.snap
    }

    /// Deterministic serialization of the full state.
    pub fn snapshot_json(&self) -> String {
        serde_json::to_string(&self.snap).expect("snapshot serializes")
    }

    pub fn write_snapshot(&mut self) -> Result<(), WorkflowError> {
        if let Some(dir) = &self.dir {
            let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
            fs::write(&tmp, self.snapshot_json())?;
            fs::rename(tmp, dir.join(SNAPSHOT_FILE))?;
            self.events_since_snapshot = 0;
        }
        Ok(())
    }

    pub fn records(&self) -> &[WorkflowRecord] {
        &self.snap.records
    }

    pub fn record(&self, mention_id: &str) -> Option<&WorkflowRecord> {
        self.index.get(mention_id).map(|&i| &self.snap.records[i])
    }

    pub fn len(&self) -> usize {
        self.snap.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snap.records.is_empty()
    }

    pub fn is_finalized(&self) -> bool {
        self.snap.finalized
    }

    pub fn last_seq(&self) -> u64 {
        self.snap.last_seq
    }

    /// The event a client request id produced, if any.
    pub fn request_entry(&self, request_id: &str) -> Option<&RequestEntry> {
        self.snap.request_ids.get(request_id)
    }

    pub fn count_by_state(&self) -> BTreeMap<WorkflowState, usize> {
        let mut counts: BTreeMap<WorkflowState, usize> =
            WorkflowState::ALL.iter().map(|s| (*s, 0)).collect();
        for r in &self.snap.records {
            *counts.entry(r.state).or_default() += 1;
        }
        counts
    }

    fn get(&self, mention_id: &str) -> Result<&WorkflowRecord, WorkflowError> {
        self.record(mention_id)
            .ok_or_else(|| WorkflowError::UnknownMention(mention_id.to_string()))
    }

    fn next_event(
        &self,
        kind: EventKind,
        mention_id: &str,
        annotator: Option<&str>,
        request_id: Option<&str>,
    ) -> Event {
        Event {
            seq: self.snap.last_seq + 1,
            kind,
            mention_id: mention_id.to_string(),
            annotator: annotator.map(str::to_string),
            timestamp: self.clock.now_millis().max(self.snap.last_timestamp),
            request_id: request_id.map(str::to_string),
        }
    }

    /// Validates, journals, then applies.
    fn commit(&mut self, event: Event) -> Result<(), WorkflowError> {
        self.validate(&event)?;
        if let Some(sink) = &mut self.sink {
            sink.append(&event)?;
        }
        self.apply_unchecked(&event);
        self.events_since_snapshot += 1;
        if self.snapshot_every > 0 && self.events_since_snapshot >= self.snapshot_every {
            self.write_snapshot()?;
        }
        Ok(())
    }

    /// Applies a journaled event (used by replay).
    pub fn apply(&mut self, event: &Event) -> Result<(), WorkflowError> {
        if event.seq != self.snap.last_seq + 1 {
            return Err(WorkflowError::CorruptJournal {
                line: event.seq as usize,
                reason: format!(
                    "expected seq {}, found {}",
                    self.snap.last_seq + 1,
                    event.seq
                ),
            });
        }
        self.validate(event)?;
        self.apply_unchecked(event);
        Ok(())
    }

    fn transition_error(record: &WorkflowRecord, op: &'static str) -> WorkflowError {
        WorkflowError::Transition {
            mention_id: record.mention_id.clone(),
            state: record.state,
            op,
        }
    }

    fn validate(&self, event: &Event) -> Result<(), WorkflowError> {
        use WorkflowState::*;
        if let EventKind::Init { mention, .. } = &event.kind {
            if self.index.contains_key(&mention.id) {
                return Err(WorkflowError::DuplicateMention(mention.id.clone()));
            }
            if !mention.ne_type.is_linkable() {
                return Err(WorkflowError::Input(format!(
                    "{} has non-linkable type {}",
                    mention.id, mention.ne_type
                )));
            }
            return Ok(());
        }
        if let EventKind::Finalize = event.kind {
            return Ok(());
        }
        let record = self.get(&event.mention_id)?;
        match &event.kind {
            EventKind::ModelSuggestion { .. } => {
                if record.state != Pending || record.model_done {
                    return Err(Self::transition_error(record, "record_model_suggestion"));
                }
            }
            EventKind::ModelDecision { .. } => {
                if record.state != ModelSuggested {
                    return Err(Self::transition_error(record, "apply_model_decision"));
                }
            }
            EventKind::SearchResults { .. } => {
                let eligible = match record.state {
                    ModelAccepted | ModelRejected => true,
                    Pending => record.model_done,
                    _ => false,
                };
                if !eligible || record.search_done {
                    return Err(Self::transition_error(record, "attach_search_results"));
                }
            }
            EventKind::SearchSelection { selection } => {
                if record.state != SearchSuggested {
                    return Err(Self::transition_error(record, "apply_search_selection"));
                }
                if let SearchSelection::Index(i) = selection {
                    if *i >= record.search_candidates.len() {
                        return Err(WorkflowError::Input(format!(
                            "candidate index {i} out of range for {} candidates",
                            record.search_candidates.len()
                        )));
                    }
                }
            }
            EventKind::Tag { .. } => {
                if record.state != Unlabeled {
                    return Err(Self::transition_error(record, "tag_unlabeled"));
                }
            }
            EventKind::Init { .. } | EventKind::Finalize => unreachable!(),
        }
        Ok(())
    }

    fn apply_unchecked(&mut self, event: &Event) {
        use WorkflowState::*;
        self.snap.last_seq = event.seq;
        self.snap.last_timestamp = self.snap.last_timestamp.max(event.timestamp);
        if let Some(request_id) = &event.request_id {
            self.snap.request_ids.insert(
                request_id.clone(),
                RequestEntry {
                    seq: event.seq,
                    mention_id: event.mention_id.clone(),
                },
            );
        }
        match &event.kind {
            EventKind::Init {
                mention,
                subcategory,
            } => {
                self.index
                    .insert(mention.id.clone(), self.snap.records.len());
                self.snap
                    .records
                    .push(WorkflowRecord::new(mention.clone(), subcategory.clone()));
                return;
            }
            EventKind::Finalize => {
                for r in &mut self.snap.records {
                    if !r.state.is_terminal() {
                        r.state = Unlabeled;
                        r.correct_wiki = None;
                        r.suggestion_wiki = None;
                    }
                }
                self.snap.finalized = true;
                return;
            }
            _ => {}
        }

        let i = self.index[&event.mention_id];
        let record = &mut self.snap.records[i];
        let annotator = event
            .annotator
            .clone()
            .unwrap_or_else(|| SYSTEM_ANNOTATOR.into());
        match &event.kind {
            EventKind::ModelSuggestion { candidates } => {
                record.model_candidates = candidates.clone();
                record.model_done = true;
                if record.model_top().is_some() {
                    record.state = ModelSuggested;
                }
            }
            EventKind::ModelDecision { decision } => {
                match decision {
                    ModelDecision::Accept => {
                        record.correct_wiki = record.model_top().cloned();
                        record.state = ModelAccepted;
                    }
                    ModelDecision::Reject => record.state = ModelRejected,
                }
                record.decisions.push(DecisionEntry {
                    annotator_id: annotator,
                    action: format!(
                        "model_{}",
                        if *decision == ModelDecision::Accept {
                            "accept"
                        } else {
                            "reject"
                        }
                    ),
                    timestamp: event.timestamp,
                });
            }
            EventKind::SearchResults {
                candidates,
                per_host_status,
            } => {
                record.search_candidates = candidates.clone();
                record.search_status = per_host_status.clone();
                record.search_done = true;
                if record.state == ModelAccepted {
                    let accepted = record.correct_wiki.as_ref().map(|e| e.qid.clone());
                    record.overlap = Some(
                        candidates
                            .iter()
                            .any(|c| c.entity.as_ref().map(|e| &e.qid) == accepted.as_ref()),
                    );
                } else if !candidates.is_empty() {
                    record.state = SearchSuggested;
                }
            }
            EventKind::SearchSelection { selection } => {
                let action = match selection {
                    SearchSelection::Index(i) => {
                        record.suggestion_wiki = record.search_candidates[*i].entity.clone();
                        record.state = SearchAccepted;
                        format!("search_select_{i}")
                    }
                    SearchSelection::NoMatch => {
                        record.state = Unlabeled;
                        "search_no_match".to_string()
                    }
                };
                record.decisions.push(DecisionEntry {
                    annotator_id: annotator,
                    action,
                    timestamp: event.timestamp,
                });
            }
            EventKind::Tag { tag } => {
                record.unlabeled_tag = Some(tag.clone());
                record.decisions.push(DecisionEntry {
                    annotator_id: annotator,
                    action: format!("tag_{}", tag.category),
                    timestamp: event.timestamp,
                });
            }
            EventKind::Init { .. } | EventKind::Finalize => unreachable!(),
        }
    }

    /// Adds one Pending record per linkable mention. Non-linkable mentions
    /// are skipped; a duplicate id fails the whole call before anything is
    /// written.
    pub fn init(
        &mut self,
        docs: &[Document],
        mentions: &[Mention],
    ) -> Result<usize, WorkflowError> {
        let subcategories: HashMap<&str, &str> = docs
            .iter()
            .map(|d| (d.id.as_str(), d.subcategory.as_str()))
            .collect();
        let linkable: Vec<&Mention> = mentions
            .iter()
            .filter(|m| m.ne_type.is_linkable())
            .collect();
        let mut seen = std::collections::HashSet::new();
        for m in &linkable {
            if !seen.insert(m.id.as_str()) || self.index.contains_key(&m.id) {
                return Err(WorkflowError::DuplicateMention(m.id.clone()));
            }
        }
        for m in &linkable {
            let subcategory = subcategories
                .get(m.doc_id.as_str())
                .copied()
                .unwrap_or("unknown")
                .to_string();
            let event = self.next_event(
                EventKind::Init {
                    mention: (*m).clone(),
                    subcategory,
                },
                &m.id,
                None,
                None,
            );
            self.commit(event)?;
        }
        Ok(linkable.len())
    }

    /// Stores the model's candidates. A resolved top candidate moves the
    /// record to review; otherwise it waits for the search round.
    pub fn record_model_suggestion(
        &mut self,
        mention_id: &str,
        candidates: Vec<ResolvedCandidate>,
    ) -> Result<WorkflowState, WorkflowError> {
        let event = self.next_event(
            EventKind::ModelSuggestion { candidates },
            mention_id,
            None,
            None,
        );
        self.commit(event)?;
        Ok(self.get(mention_id)?.state)
    }

    pub fn apply_model_decision(
        &mut self,
        mention_id: &str,
        decision: ModelDecision,
        annotator_id: &str,
    ) -> Result<WorkflowState, WorkflowError> {
        self.apply_model_decision_with_request(mention_id, decision, annotator_id, None)
    }

    pub fn apply_model_decision_with_request(
        &mut self,
        mention_id: &str,
        decision: ModelDecision,
        annotator_id: &str,
        request_id: Option<&str>,
    ) -> Result<WorkflowState, WorkflowError> {
        let event = self.next_event(
            EventKind::ModelDecision { decision },
            mention_id,
            Some(annotator_id),
            request_id,
        );
        self.commit(event)?;
        Ok(self.get(mention_id)?.state)
    }

    /// Attaches search results. `resolutions` runs parallel to
    /// `result.candidates`; unresolved candidates are dropped and the rest
    /// ordered by language preference (stable). For accepted model labels
    /// only the overlap flag is computed.
    pub fn attach_search_results(
        &mut self,
        mention_id: &str,
        result: &SearchResult,
        resolutions: Vec<Option<ResolvedEntity>>,
    ) -> Result<WorkflowState, WorkflowError> {
        if resolutions.len() != result.candidates.len() {
            return Err(WorkflowError::Input(format!(
                "{} resolutions for {} candidates",
                resolutions.len(),
                result.candidates.len()
            )));
        }
        let mut candidates: Vec<ResolvedCandidate> = result
            .candidates
            .iter()
            .cloned()
            .zip(resolutions)
            .filter(|(_, e)| e.is_some())
            .map(|(c, e)| ResolvedCandidate::new(c, e))
            .collect();
        let rank = |c: &ResolvedCandidate| {
            self.preferred_languages
                .iter()
                .position(|l| *l == c.candidate.language)
                .unwrap_or(self.preferred_languages.len())
        };
        candidates.sort_by_key(rank);
        let event = self.next_event(
            EventKind::SearchResults {
                candidates,
                per_host_status: result.per_host_status.clone(),
            },
            mention_id,
            None,
            None,
        );
        self.commit(event)?;
        Ok(self.get(mention_id)?.state)
    }

    pub fn apply_search_selection(
        &mut self,
        mention_id: &str,
        selection: SearchSelection,
        annotator_id: &str,
    ) -> Result<WorkflowState, WorkflowError> {
        self.apply_search_selection_with_request(mention_id, selection, annotator_id, None)
    }

    pub fn apply_search_selection_with_request(
        &mut self,
        mention_id: &str,
        selection: SearchSelection,
        annotator_id: &str,
        request_id: Option<&str>,
    ) -> Result<WorkflowState, WorkflowError> {
        let event = self.next_event(
            EventKind::SearchSelection { selection },
            mention_id,
            Some(annotator_id),
            request_id,
        );
        self.commit(event)?;
        Ok(self.get(mention_id)?.state)
    }

    /// Every non-terminal record becomes Unlabeled. A no-op on a store that
    /// is already finalized.
    pub fn finalize(&mut self) -> Result<(), WorkflowError> {
        if self.snap.finalized && self.snap.records.iter().all(|r| r.state.is_terminal()) {
            return Ok(());
        }
        let event = self.next_event(EventKind::Finalize, "", None, None);
        self.commit(event)
    }

    pub fn tag_unlabeled(
        &mut self,
        mention_id: &str,
        tag: UnlabeledTag,
        annotator_id: &str,
    ) -> Result<WorkflowState, WorkflowError> {
        self.tag_unlabeled_with_request(mention_id, tag, annotator_id, None)
    }

    pub fn tag_unlabeled_with_request(
        &mut self,
        mention_id: &str,
        tag: UnlabeledTag,
        annotator_id: &str,
        request_id: Option<&str>,
    ) -> Result<WorkflowState, WorkflowError> {
        let event = self.next_event(
            EventKind::Tag { tag },
            mention_id,
            Some(annotator_id),
            request_id,
        );
        self.commit(event)?;
        Ok(self.get(mention_id)?.state)
    }
}
