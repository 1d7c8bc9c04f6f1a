//! Drives the automatic rounds against a store: model suggestions and the
//! wiki search fallback. Human review happens in between (see `review`).

use log::{info, warn};

use crate::candidate::{run_batch, BackendError, BatchOptions, GeneratorBackend};
use crate::corpus::Mention;
use crate::resolver::Resolver;
use crate::wapis::{SearchQuery, WikiSearch};
use crate::workflow::{ResolvedCandidate, Store, WorkflowError, WorkflowState};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error("invalid search settings: {0}")]
    Search(#[from] crate::wapis::QueryError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundSummary {
    pub attempted: usize,
    /// Records that now await review.
    pub suggested: usize,
    /// Records with nothing to review (sent on to the next round).
    pub empty: usize,
    /// Records left untouched for a later retry.
    pub deferred: usize,
}

/// Asks the backend about every Pending record the model round has not
/// seen, resolves each top candidate to a QID and records the result.
/// Records whose request or resolution failed stay untouched so a rerun
/// retries them.
pub fn run_model_round(
    store: &mut Store,
    backend: &dyn GeneratorBackend,
    resolver: &Resolver,
    options: &BatchOptions,
) -> Result<RoundSummary, PipelineError> {
    let mentions: Vec<Mention> = store
        .records()
        .iter()
        .filter(|r| r.state == WorkflowState::Pending && !r.model_done)
        .map(|r| r.mention.clone())
        .collect();
    let batch = run_batch(&mentions, backend, options)?;
    let mut summary = RoundSummary {
        attempted: mentions.len(),
        ..Default::default()
    };
    for mention in &mentions {
        if batch.errors.contains_key(&mention.id) {
            summary.deferred += 1;
            continue;
        }
        let candidates = &batch.candidates[&mention.id];
        let mut resolved: Vec<ResolvedCandidate> = Vec::with_capacity(candidates.len());
        let mut failed = false;
        for (i, c) in candidates.iter().enumerate() {
            let entity = if i == 0 {
                match resolver.resolve(&c.language, &c.title) {
                    Ok(r) => r.into_entity(),
                    Err(e) => {
                        warn!(
                            "resolving {}:{} for {}: {e}",
                            c.language, c.title, mention.id
                        );
                        failed = true;
                        None
                    }
                }
            } else {
                None
            };
            resolved.push(ResolvedCandidate::new(c.clone(), entity));
        }
        if failed {
            summary.deferred += 1;
            continue;
        }
        match store.record_model_suggestion(&mention.id, resolved)? {
            WorkflowState::ModelSuggested => summary.suggested += 1,
            _ => summary.empty += 1,
        }
    }
    info!(
        "model round: {} attempted, {} suggested, {} empty, {} deferred",
        summary.attempted, summary.suggested, summary.empty, summary.deferred
    );
    Ok(summary)
}

/// Runs the verbatim-text search for every record that finished the model
/// round (accepted, rejected or without a usable suggestion) and has no
/// search results yet. Searches where every host failed are deferred.
pub fn run_search_round(
    store: &mut Store,
    search: &WikiSearch,
    resolver: &Resolver,
    hosts: &[String],
    limit: usize,
) -> Result<RoundSummary, PipelineError> {
    let targets: Vec<(String, String)> = store
        .records()
        .iter()
        .filter(|r| !r.search_done)
        .filter(|r| match r.state {
            WorkflowState::ModelAccepted | WorkflowState::ModelRejected => true,
            WorkflowState::Pending => r.model_done,
            _ => false,
        })
        .map(|r| (r.mention_id.clone(), r.mention.surface.clone()))
        .collect();
    let mut summary = RoundSummary {
        attempted: targets.len(),
        ..Default::default()
    };
    for (mention_id, surface) in targets {
        let query = SearchQuery::new(surface, hosts.to_vec(), limit)?;
        let result = search.search(&query);
        if result.all_failed() {
            warn!("search for {mention_id} failed on every host; deferring");
            summary.deferred += 1;
            continue;
        }
        let pairs: Vec<(String, String)> = result
            .candidates
            .iter()
            .map(|c| (c.language.clone(), c.title.clone()))
            .collect();
        let resolutions = resolver
            .batch_resolve(&pairs)
            .entries
            .into_iter()
            .map(|(_, r)| r.ok().and_then(|r| r.into_entity()))
            .collect();
        match store.attach_search_results(&mention_id, &result, resolutions)? {
            WorkflowState::SearchSuggested => summary.suggested += 1,
            _ => summary.empty += 1,
        }
    }
    info!(
        "search round: {} attempted, {} with candidates, {} without, {} deferred",
        summary.attempted, summary.suggested, summary.empty, summary.deferred
    );
    Ok(summary)
}
