//! Fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use elboot_core::candidate::Candidate;
use elboot_core::clock::{Clock, ManualClock};
use elboot_core::corpus::{Mention, NeType};
use elboot_core::net::{Fetcher, FixtureTransport, RateLimiter, ResponseCache, DEFAULT_TTL};
use elboot_core::resolver::{ResolvedEntity, Resolver};
use elboot_core::wapis::{HostStatus, SearchResult, WikiSearch};
use elboot_core::workflow::{
    ModelDecision, ResolvedCandidate, SearchSelection, Store, UnlabeledCategory, UnlabeledFactor,
    UnlabeledTag, WorkflowState,
};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(1_700_000_000_000))
}

pub fn entity(qid: &str, lang: &str) -> ResolvedEntity {
    ResolvedEntity {
        qid: qid.into(),
        canonical_title: format!("Title {qid}"),
        language: lang.into(),
        redirected_from: None,
    }
}

pub fn mention(id: &str, ne_type: NeType) -> Mention {
    Mention {
        id: id.into(),
        doc_id: "d1".into(),
        sentence_index: 0,
        token_span: 0..1,
        surface: format!("Surface {id}"),
        ne_type,
        left_context: "vinstri".into(),
        right_context: "hægri".into(),
        morph_tags: vec![Some("nken-s".into())],
    }
}

pub fn mentions(n: usize) -> Vec<Mention> {
    (0..n)
        .map(|i| mention(&format!("m{i:05}"), NeType::Person))
        .collect()
}

/// What happens to one record before the store is finalized.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    /// Model top candidate accepted; `overlap` controls whether the search
    /// round also finds the same entity.
    ModelAccept { lang: String, overlap: bool },
    /// Model rejected, search candidate selected.
    RejectThenSearch { lang: String },
    /// No model suggestion, search candidate selected.
    SearchOnly { lang: String },
    /// Search candidates shown, annotator found no match.
    NoMatch { tag: Option<UnlabeledTag> },
    /// Model rejected and search found nothing.
    NothingFound { tag: Option<UnlabeledTag> },
    /// Still waiting for review when the store is finalized.
    Abandoned { tag: Option<UnlabeledTag> },
}

impl Plan {
    pub fn model(lang: &str, overlap: bool) -> Self {
        Plan::ModelAccept {
            lang: lang.into(),
            overlap,
        }
    }

    pub fn search(lang: &str) -> Self {
        Plan::SearchOnly { lang: lang.into() }
    }

    pub fn unlabeled(tag: Option<UnlabeledTag>) -> Self {
        Plan::NoMatch { tag }
    }

    pub fn tag(&self) -> Option<&UnlabeledTag> {
        match self {
            Plan::NoMatch { tag } | Plan::NothingFound { tag } | Plan::Abandoned { tag } => {
                tag.as_ref()
            }
            _ => None,
        }
    }
}

pub fn search_result(cands: &[(&str, &str)]) -> (SearchResult, Vec<Option<ResolvedEntity>>) {
    let result = SearchResult {
        candidates: cands
            .iter()
            .map(|(lang, qid)| Candidate::search(*lang, format!("Title {qid}")))
            .collect(),
        per_host_status: vec![
            ("is.wikipedia.org".into(), HostStatus::Ok),
            ("en.wikipedia.org".into(), HostStatus::Ok),
        ],
    };
    let resolved = cands
        .iter()
        .map(|(lang, qid)| Some(entity(qid, lang)))
        .collect();
    (result, resolved)
}

fn model_suggestion(qid: &str, lang: &str) -> Vec<ResolvedCandidate> {
    vec![
        ResolvedCandidate::new(
            Candidate::model(lang, format!("Title {qid}"), Some(0.9)),
            Some(entity(qid, lang)),
        ),
        ResolvedCandidate::new(Candidate::model(lang, "Runner up", Some(0.1)), None),
    ]
}

/// Drives one record through the store's operations according to `plan`.
pub fn drive(store: &mut Store, id: &str, plan: &Plan) {
    let qid = format!("Q{}", 1000 + id.bytes().map(u64::from).sum::<u64>());
    match plan {
        Plan::ModelAccept { lang, overlap } => {
            store
                .record_model_suggestion(id, model_suggestion(&qid, lang))
                .unwrap();
            store
                .apply_model_decision(id, ModelDecision::Accept, "ann")
                .unwrap();
            let other = format!("{qid}9");
            let (r, e) = if *overlap {
                search_result(&[("is", &other), (lang, &qid)])
            } else {
                search_result(&[("is", &other)])
            };
            store.attach_search_results(id, &r, e).unwrap();
        }
        Plan::RejectThenSearch { lang } => {
            store
                .record_model_suggestion(id, model_suggestion(&qid, "is"))
                .unwrap();
            store
                .apply_model_decision(id, ModelDecision::Reject, "ann")
                .unwrap();
            let (r, e) = search_result(&[(lang, &format!("{qid}7"))]);
            store.attach_search_results(id, &r, e).unwrap();
            store
                .apply_search_selection(id, SearchSelection::Index(0), "ann")
                .unwrap();
        }
        Plan::SearchOnly { lang } => {
            store.record_model_suggestion(id, vec![]).unwrap();
            let (r, e) = search_result(&[(lang, &qid)]);
            store.attach_search_results(id, &r, e).unwrap();
            store
                .apply_search_selection(id, SearchSelection::Index(0), "ann")
                .unwrap();
        }
        Plan::NoMatch { .. } => {
            store.record_model_suggestion(id, vec![]).unwrap();
            let (r, e) = search_result(&[("is", &qid), ("en", &qid)]);
            store.attach_search_results(id, &r, e).unwrap();
            store
                .apply_search_selection(id, SearchSelection::NoMatch, "ann")
                .unwrap();
        }
        Plan::NothingFound { .. } => {
            store
                .record_model_suggestion(id, model_suggestion(&qid, "is"))
                .unwrap();
            store
                .apply_model_decision(id, ModelDecision::Reject, "ann")
                .unwrap();
            let (r, e) = search_result(&[]);
            store.attach_search_results(id, &r, e).unwrap();
        }
        Plan::Abandoned { .. } => {
            store
                .record_model_suggestion(id, model_suggestion(&qid, "is"))
                .unwrap();
        }
    }
}

/// An in-memory store with one record per plan, finalized, with taxonomy
/// tags applied afterwards.
pub fn build_store(plans: &[Plan], subcategory_of: impl Fn(usize) -> &'static str) -> Store {
    let clock: Arc<dyn Clock> = clock();
    let mut store = Store::in_memory(clock);
    let ms: Vec<Mention> = (0..plans.len())
        .map(|i| {
            let mut m = mention(&format!("m{i:05}"), NeType::ALL[i % 4]);
            m.doc_id = subcategory_of(i).to_string();
            m
        })
        .collect();
    let docs: Vec<_> = ms
        .iter()
        .map(|m| elboot_core::corpus::Document {
            id: m.doc_id.clone(),
            subcategory: m.doc_id.clone(),
            sentences: vec![],
        })
        .collect();
    store.init(&docs, &ms).unwrap();
    for (m, plan) in ms.iter().zip(plans) {
        drive(&mut store, &m.id, plan);
    }
    store.finalize().unwrap();
    for (m, plan) in ms.iter().zip(plans) {
        if let Some(tag) = plan.tag() {
            let state = store.tag_unlabeled(&m.id, tag.clone(), "ann").unwrap();
            assert_eq!(state, WorkflowState::Unlabeled);
        }
    }
    store
}

/// 466 model labels (236 also found by search), 73 search labels and 461
/// unlabeled mentions, interleaved.
pub fn partition_plans(model: usize, search: usize, unlabeled: usize, overlap: usize) -> Vec<Plan> {
    let mut plans = Vec::with_capacity(model + search + unlabeled);
    plans.extend((0..model).map(|i| Plan::model("is", i < overlap)));
    plans.extend((0..search).map(|i| {
        if i % 2 == 0 {
            Plan::search("is")
        } else {
            Plan::RejectThenSearch { lang: "en".into() }
        }
    }));
    plans.extend((0..unlabeled).map(|i| match i % 3 {
        0 => Plan::unlabeled(None),
        1 => Plan::NothingFound { tag: None },
        _ => Plan::Abandoned { tag: None },
    }));
    // deterministic interleave so outcomes are not grouped by position
    let n = plans.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|i| (i * 7919) % n);
    order.into_iter().map(|i| plans[i].clone()).collect()
}

/// Search and resolver clients answering from the recorded fixtures, on a
/// virtual clock so rate limiting costs no wall time.
pub struct Recorded {
    pub clock: Arc<ManualClock>,
    pub transport: Arc<FixtureTransport>,
    pub search: WikiSearch,
    pub resolver: Resolver,
}

pub fn recorded() -> Recorded {
    let mut entries: Vec<serde_json::Value> =
        serde_json::from_str(&read_fixture("search_recorded.json")).unwrap();
    let resolve: Vec<serde_json::Value> =
        serde_json::from_str(&read_fixture("resolve_recorded.json")).unwrap();
    entries.extend(resolve);
    let transport =
        Arc::new(FixtureTransport::from_json(&serde_json::to_string(&entries).unwrap()).unwrap());
    let clock = clock();
    let dyn_clock: Arc<dyn Clock> = clock.clone();
    let limiter = Arc::new(RateLimiter::new(2.0, 1, dyn_clock.clone()));
    let fetcher = || Fetcher::new(transport.clone(), limiter.clone(), dyn_clock.clone());
    let search = WikiSearch::new(
        fetcher(),
        Arc::new(ResponseCache::in_memory(DEFAULT_TTL, dyn_clock.clone())),
    );
    let resolver = Resolver::new(
        fetcher(),
        Arc::new(ResponseCache::in_memory(DEFAULT_TTL, dyn_clock.clone())),
    );
    Recorded {
        clock,
        transport,
        search,
        resolver,
    }
}

pub fn default_hosts() -> Vec<String> {
    elboot_core::wapis::DEFAULT_HOSTS
        .iter()
        .map(|h| h.to_string())
        .collect()
}

/// 1000 labeled mentions across five label languages plus 20 unlabeled.
pub fn language_plans() -> Vec<Plan> {
    let counts = [("is", 813), ("en", 62), ("da", 50), ("de", 40), ("sv", 35)];
    counts
        .iter()
        .flat_map(|(lang, n)| {
            (0..*n).map(move |i| match i % 3 {
                0 => Plan::search(lang),
                _ => Plan::model(lang, i % 2 == 0),
            })
        })
        .chain((0..20).map(|_| Plan::unlabeled(None)))
        .collect()
}

/// 18402 tagged unlabeled mentions over eight categories.
pub fn taxonomy_plans() -> Vec<Plan> {
    let counts = [
        (UnlabeledCategory::Person, 7236),
        (UnlabeledCategory::FictionalCharacter, 2706),
        (UnlabeledCategory::InstitutionCompany, 3000),
        (UnlabeledCategory::Location, 2000),
        (UnlabeledCategory::BookTitle, 1000),
        (UnlabeledCategory::Other, 1000),
        (UnlabeledCategory::Brand, 800),
        (UnlabeledCategory::Event, 660),
    ];
    counts
        .iter()
        .flat_map(|(cat, n)| {
            (0..*n).map(move |i| {
                let factors: Vec<UnlabeledFactor> = match i % 4 {
                    0 => vec![],
                    1 => vec![UnlabeledFactor::FirstNameOnly],
                    2 => vec![UnlabeledFactor::Nickname, UnlabeledFactor::NoContext],
                    _ => vec![UnlabeledFactor::Misspelling],
                };
                let tag = Some(UnlabeledTag::new(*cat, factors));
                if i % 2 == 0 {
                    Plan::NoMatch { tag }
                } else {
                    Plan::Abandoned { tag }
                }
            })
        })
        .collect()
}
