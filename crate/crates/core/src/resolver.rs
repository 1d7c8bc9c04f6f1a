//! (language, page title) -> Wikidata QID, through the wiki's own query API
//! with redirects followed.

use std::collections::HashMap;
use std::sync::Arc;

use log::debug;
use percent_encoding::utf8_percent_encode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::is_qid;
use crate::net::{FetchError, Fetcher, ResponseCache};
use crate::wapis::QUERY_COMPONENT;

pub const DEFAULT_HOST_TEMPLATE: &str = "{lang}.wikipedia.org";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResolvedEntity {
    pub qid: String,
    pub canonical_title: String,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redirected_from: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Found(ResolvedEntity),
    NotFound,
}

impl Resolution {
    pub fn entity(&self) -> Option<&ResolvedEntity> {
        match self {
            Resolution::Found(e) => Some(e),
            Resolution::NotFound => None,
        }
    }

    pub fn into_entity(self) -> Option<ResolvedEntity> {
        match self {
            Resolution::Found(e) => Some(e),
            Resolution::NotFound => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResolveError {
    #[error("empty title")]
    EmptyTitle,
    #[error("fetch failed: {0}")]
    Fetch(#[from] FetchError),
    #[error("malformed query response: {0}")]
    Malformed(String),
}

/// Spaces for underscores, collapsed and trimmed, first character
/// upper-cased.
pub fn normalize_title(title: &str) -> String {
    let spaced = title.replace('_', " ");
    let collapsed = spaced.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut chars = collapsed.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn build_query_url(host: &str, title: &str) -> String {
    format!(
        "https://{host}/w/api.php?action=query&prop=pageprops&ppprop=wikibase_item&redirects=1&format=json&formatversion=2&titles={}",
        utf8_percent_encode(title, QUERY_COMPONENT)
    )
}

#[derive(Deserialize)]
struct QueryResponse {
    query: Option<QueryBody>,
}

#[derive(Deserialize)]
struct QueryBody {
    #[serde(default)]
    redirects: Vec<Redirect>,
    #[serde(default)]
    pages: Pages,
}

#[derive(Deserialize)]
struct Redirect {
    from: String,
    to: String,
}

// formatversion=2 gives a list; the legacy format a map keyed by page id.
#[derive(Deserialize)]
#[serde(untagged)]
enum Pages {
    List(Vec<Page>),
    Map(HashMap<String, Page>),
}

impl Default for Pages {
    fn default() -> Self {
        Pages::List(Vec::new())
    }
}

#[derive(Deserialize)]
struct Page {
    title: String,
    #[serde(default)]
    missing: serde_json::Value,
    #[serde(default)]
    invalid: serde_json::Value,
    #[serde(default)]
    pageprops: Option<PageProps>,
}

#[derive(Deserialize)]
struct PageProps {
    wikibase_item: Option<String>,
}

fn flag_set(v: &serde_json::Value) -> bool {
    !matches!(v, serde_json::Value::Null | serde_json::Value::Bool(false))
}

/// Interprets a pageprops query response for a single title.
pub fn parse_query_response(language: &str, body: &str) -> Result<Resolution, ResolveError> {
    let parsed: QueryResponse =
        serde_json::from_str(body).map_err(|e| ResolveError::Malformed(e.to_string()))?;
    let Some(query) = parsed.query else {
        return Ok(Resolution::NotFound);
    };
    let pages: Vec<Page> = match query.pages {
        Pages::List(p) => p,
        Pages::Map(m) => m.into_values().collect(),
    };
    let Some(page) = pages.into_iter().next() else {
        return Ok(Resolution::NotFound);
    };
    if flag_set(&page.missing) || flag_set(&page.invalid) {
        return Ok(Resolution::NotFound);
    }
    let Some(qid) = page.pageprops.and_then(|p| p.wikibase_item) else {
        return Ok(Resolution::NotFound);
    };
    if !is_qid(&qid) {
        return Err(ResolveError::Malformed(format!(
            "bad wikibase_item {qid:?}"
        )));
    }
    let redirected_from = query
        .redirects
        .iter()
        .find(|r| r.to == page.title)
        .or(query.redirects.first())
        .map(|r| r.from.clone());
    Ok(Resolution::Found(ResolvedEntity {
        qid,
        canonical_title: page.title,
        language: language.to_string(),
        redirected_from,
    }))
}

pub type ResolvePair = (String, String);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchResolution {
    /// One entry per input pair, in input order.
    pub entries: Vec<(ResolvePair, Result<Resolution, ResolveError>)>,
}

impl BatchResolution {
    pub fn get(&self, language: &str, title: &str) -> Option<&Result<Resolution, ResolveError>> {
        self.entries
            .iter()
            .find(|((l, t), _)| l == language && t == title)
            .map(|(_, r)| r)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub struct Resolver {
    fetcher: Fetcher,
    cache: Arc<ResponseCache>,
    host_template: String,
}

impl Resolver {
    pub fn new(fetcher: Fetcher, cache: Arc<ResponseCache>) -> Self {
        Resolver {
            fetcher,
            cache,
            host_template: DEFAULT_HOST_TEMPLATE.to_string(),
        }
    }

    pub fn with_host_template(mut self, template: impl Into<String>) -> Self {
        self.host_template = template.into();
        self
    }

    pub fn host_for(&self, language: &str) -> String {
        self.host_template.replace("{lang}", language)
    }

    /// NotFound is a value; only transport failures (after retries) and
    /// undecodable bodies are errors.
    pub fn resolve(&self, language: &str, title: &str) -> Result<Resolution, ResolveError> {
        let title = normalize_title(title);
        if title.is_empty() {
            return Err(ResolveError::EmptyTitle);
        }
        let host = self.host_for(language);
        let body = match self.cache.get(&host, &title) {
            Some(body) => body,
            None => {
                let response = self.fetcher.get(&host, &build_query_url(&host, &title))?;
                let resolution = parse_query_response(language, &response.body)?;
                if let Err(e) = self.cache.put(&host, &title, &response.body) {
                    debug!("resolver cache write failed: {e}");
                }
                return Ok(resolution);
            }
        };
        parse_query_response(language, &body)
    }

    /// Resolves every pair, fetching each distinct (language, normalized
    /// title) once.
    pub fn batch_resolve(&self, pairs: &[ResolvePair]) -> BatchResolution {
        let mut seen: HashMap<(String, String), Result<Resolution, ResolveError>> = HashMap::new();
        let mut entries = Vec::with_capacity(pairs.len());
        for (language, title) in pairs {
            let key = (language.clone(), normalize_title(title));
            let outcome = seen
                .entry(key)
                .or_insert_with(|| self.resolve(language, title))
                .clone();
            entries.push(((language.clone(), title.clone()), outcome));
        }
        BatchResolution { entries }
    }
}
