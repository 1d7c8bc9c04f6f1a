//! Wiki search fallback: the mention's verbatim surface is run through
//! MediaWiki's `opensearch` suggestion endpoint on each configured host,
//! and the suggested page titles become search candidates.

use std::sync::Arc;

use log::debug;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::Candidate;
use crate::net::{FetchError, Fetcher, ResponseCache};

pub const DEFAULT_HOSTS: [&str; 2] = ["is.wikipedia.org", "en.wikipedia.org"];
pub const DEFAULT_LIMIT: usize = 10;

/// RFC 3986 unreserved characters stay literal; everything else is
/// percent-encoded byte by byte.
pub const QUERY_COMPONENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("search text is empty")]
    EmptyText,
    #[error("no hosts configured")]
    NoHosts,
    #[error("limit must be at least 1")]
    ZeroLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchQuery {
    text: String,
    hosts: Vec<String>,
    limit: usize,
}

impl SearchQuery {
    /// `text` is used exactly as given: no lemmatization, trimming or context.
    pub fn new(
        text: impl Into<String>,
        hosts: Vec<String>,
        limit: usize,
    ) -> Result<Self, QueryError> {
        let text = text.into();
        if text.is_empty() {
            return Err(QueryError::EmptyText);
        }
        if hosts.is_empty() {
            return Err(QueryError::NoHosts);
        }
        if limit == 0 {
            return Err(QueryError::ZeroLimit);
        }
        Ok(SearchQuery { text, hosts, limit })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn hosts(&self) -> &[String] {
        &self.hosts
    }

    pub fn limit(&self) -> usize {
        self.limit
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum HostStatus {
    Ok,
    HttpError(u16),
    Timeout,
    /// Transport failure or an unparseable body.
    Failed(String),
}

impl HostStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, HostStatus::Ok)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Host order first, then the API's own rank within a host.
    pub candidates: Vec<Candidate>,
    /// One entry per queried host, in query order.
    pub per_host_status: Vec<(String, HostStatus)>,
}

impl SearchResult {
    pub fn all_failed(&self) -> bool {
        !self.per_host_status.is_empty() && self.per_host_status.iter().all(|(_, s)| !s.is_ok())
    }
}

pub fn build_search_url(text: &str, host: &str, limit: usize) -> String {
    format!(
        "https://{host}/w/api.php?action=opensearch&search={}&limit={limit}&namespace=0&format=json",
        utf8_percent_encode(text, QUERY_COMPONENT)
    )
}

/// `is.wikipedia.org` -> `is`.
pub fn language_of_host(host: &str) -> String {
    host.split('.').next().unwrap_or(host).to_string()
}

/// Titles from the 4-element opensearch array `[query, titles, descriptions, urls]`.
pub fn parse_opensearch(body: &str) -> Result<Vec<String>, String> {
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let array = value.as_array().ok_or("opensearch body is not an array")?;
    if array.len() < 2 {
        return Err(format!("opensearch array has {} elements", array.len()));
    }
    let titles = array[1]
        .as_array()
        .ok_or("opensearch titles are not an array")?;
    titles
        .iter()
        .map(|t| {
            t.as_str()
                .map(str::to_string)
                .ok_or_else(|| "non-string title".to_string())
        })
        .collect()
}

pub struct WikiSearch {
    fetcher: Fetcher,
    cache: Arc<ResponseCache>,
}

impl WikiSearch {
    pub fn new(fetcher: Fetcher, cache: Arc<ResponseCache>) -> Self {
        WikiSearch { fetcher, cache }
    }

    /// Queries each host in order (cache first). A failing host is recorded
    /// in `per_host_status` and never fails the search as a whole.
    pub fn search(&self, query: &SearchQuery) -> SearchResult {
        let mut result = SearchResult::default();
        for host in query.hosts() {
            let language = language_of_host(host);
            let status = match self.fetch(host, query) {
                Ok(body) => match parse_opensearch(&body) {
                    Ok(titles) => {
                        result.candidates.extend(
                            titles
                                .into_iter()
                                .filter(|t| !t.is_empty())
                                .map(|t| Candidate::search(language.clone(), t)),
                        );
                        HostStatus::Ok
                    }
                    Err(e) => HostStatus::Failed(e),
                },
                Err(FetchError::Status(code)) => HostStatus::HttpError(code),
                Err(FetchError::Timeout) => HostStatus::Timeout,
                Err(FetchError::Transport(e)) => HostStatus::Failed(e),
            };
            result.per_host_status.push((host.clone(), status));
        }
        result
    }

    fn fetch(&self, host: &str, query: &SearchQuery) -> Result<String, FetchError> {
        if let Some(body) = self.cache.get(host, query.text()) {
            return Ok(body);
        }
        let url = build_search_url(query.text(), host, query.limit());
        let response = self.fetcher.get(host, &url)?;
        if parse_opensearch(&response.body).is_ok() {
            if let Err(e) = self.cache.put(host, query.text(), &response.body) {
                debug!("cache write failed for {host}: {e}");
            }
        }
        Ok(response.body)
    }
}
