use std::collections::{HashMap, VecDeque};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::Deserialize;
use thiserror::Error;

use crate::clock::Clock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("{0}")]
    Io(String),
}

pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(user_agent: &str, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(user_agent)
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError> {
        let response = self.client.get(url).send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Io(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureReply {
    Response { status: u16, body: String },
    Timeout,
}

impl FixtureReply {
    pub fn ok(body: impl Into<String>) -> Self {
        FixtureReply::Response {
            status: 200,
            body: body.into(),
        }
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        FixtureReply::Response {
            status,
            body: body.into(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct FixtureEntry {
    url: String,
    #[serde(flatten)]
    reply: FixtureReply,
}

/// Replays recorded responses by exact URL. Each URL holds a queue of
/// replies; the last one repeats. Unknown URLs answer 404.
#[derive(Default)]
pub struct FixtureTransport {
    replies: Mutex<HashMap<String, VecDeque<FixtureReply>>>,
    calls: Mutex<Vec<(String, i64)>>,
    clock: Option<Arc<dyn Clock>>,
}

impl FixtureTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stamps every call with the clock's time, for schedule assertions.
    pub fn with_clock(clock: Arc<dyn Clock>) -> Self {
        FixtureTransport {
            clock: Some(clock),
            ..Default::default()
        }
    }

    /// Loads a JSON array of `{"url", "kind": "response", "status", "body"}`
    /// or `{"url", "kind": "timeout"}` records.
    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let entries: Vec<FixtureEntry> = serde_json::from_str(json)?;
        let transport = FixtureTransport::new();
        for entry in entries {
            transport
                .replies
                .lock()
                .entry(entry.url)
                .or_default()
                .push_back(entry.reply);
        }
        Ok(transport)
    }

    pub fn insert(&self, url: impl Into<String>, reply: FixtureReply) {
        self.replies
            .lock()
            .insert(url.into(), VecDeque::from([reply]));
    }

    pub fn script(&self, url: impl Into<String>, replies: Vec<FixtureReply>) {
        self.replies.lock().insert(url.into(), replies.into());
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().iter().map(|(u, _)| u.clone()).collect()
    }

    pub fn stamped_calls(&self) -> Vec<(String, i64)> {
        self.calls.lock().clone()
    }
}

impl Transport for FixtureTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError> {
        let at = self.clock.as_ref().map(|c| c.now_millis()).unwrap_or(0);
        self.calls.lock().push((url.to_string(), at));
        let reply = {
            let mut replies = self.replies.lock();
            match replies.get_mut(url) {
                Some(queue) if queue.len() > 1 => queue.pop_front(),
                Some(queue) => queue.front().cloned(),
                None => None,
            }
        };
        match reply {
            Some(FixtureReply::Response { status, body }) => Ok(HttpResponse { status, body }),
            Some(FixtureReply::Timeout) => Err(TransportError::Timeout),
            None => Ok(HttpResponse {
                status: 404,
                body: String::new(),
            }),
        }
    }
}
