//! Candidate generation through an external model backend.
//!
//! The backend speaks a newline-delimited JSON protocol (version 1), either
//! over a child process's stdin/stdout or as a POST endpoint:
//!
//! ```text
//! -> {"v":1,"id":"d1:0:3","left":"...","mention":"Halldór Laxness","right":"...","k":10}
//! <- {"v":1,"id":"d1:0:3","candidates":[{"lang":"is","title":"Halldór Laxness","score":0.97}]}
//! ```
//!
//! Responses may come back in any order and are matched by `id`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use log::{debug, warn};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Mention;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_FAN_OUT: usize = 4;
pub const DEFAULT_MAX_CANDIDATES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CandidateSource {
    Model,
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub source: CandidateSource,
    pub language: String,
    /// Wiki page title, with spaces rather than underscores.
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qid: Option<String>,
}

impl Candidate {
    pub fn model(
        language: impl Into<String>,
        title: impl Into<String>,
        score: Option<f64>,
    ) -> Self {
        Candidate {
            source: CandidateSource::Model,
            language: language.into(),
            title: title.into(),
            score,
            qid: None,
        }
    }

    pub fn search(language: impl Into<String>, title: impl Into<String>) -> Self {
        Candidate {
            source: CandidateSource::Search,
            language: language.into(),
            title: title.into(),
            score: None,
            qid: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.title.is_empty() {
            return Err("candidate title is empty".into());
        }
        if self.language.is_empty() {
            return Err("candidate language is empty".into());
        }
        if let Some(score) = self.score {
            if !(0.0..=1.0).contains(&score) {
                return Err(format!("candidate score {score} outside [0, 1]"));
            }
        }
        if let Some(qid) = &self.qid {
            if !is_qid(qid) {
                return Err(format!("malformed QID {qid:?}"));
            }
        }
        Ok(())
    }
}

/// `Q` followed by one or more ASCII digits.
pub fn is_qid(s: &str) -> bool {
    s.len() > 1 && s.starts_with('Q') && s[1..].bytes().all(|b| b.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub mention_id: String,
    pub left_context: String,
    pub mention: String,
    pub right_context: String,
    pub max_candidates: usize,
}

pub fn encode_request(mention: &Mention, max_candidates: usize) -> GeneratorRequest {
    GeneratorRequest {
        mention_id: mention.id.clone(),
        left_context: mention.left_context.clone(),
        mention: mention.surface.clone(),
        right_context: mention.right_context.clone(),
        max_candidates,
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("invalid record: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend disconnected")]
    Disconnected,
    #[error("backend reported an error: {0}")]
    Remote(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRequest {
    v: u32,
    id: String,
    left: String,
    mention: String,
    right: String,
    k: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireCandidate {
    lang: String,
    title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireResponse {
    v: u32,
    id: String,
    #[serde(default)]
    candidates: Vec<WireCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// One response record, decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorResponse {
    pub id: String,
    pub result: Result<Vec<Candidate>, String>,
}

pub fn encode_request_line(request: &GeneratorRequest) -> String {
    serde_json::to_string(&WireRequest {
        v: PROTOCOL_VERSION,
        id: request.mention_id.clone(),
        left: request.left_context.clone(),
        mention: request.mention.clone(),
        right: request.right_context.clone(),
        k: request.max_candidates,
    })
    .expect("request serializes")
}

pub fn decode_request_line(line: &str) -> Result<GeneratorRequest, ProtocolError> {
    let wire: WireRequest = serde_json::from_str(line)?;
    if wire.v != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(wire.v));
    }
    if wire.mention.is_empty() {
        return Err(ProtocolError::Invalid("empty mention".into()));
    }
    if wire.k == 0 {
        return Err(ProtocolError::Invalid("k must be at least 1".into()));
    }
    Ok(GeneratorRequest {
        mention_id: wire.id,
        left_context: wire.left,
        mention: wire.mention,
        right_context: wire.right,
        max_candidates: wire.k,
    })
}

pub fn encode_response_line(id: &str, candidates: &[Candidate]) -> String {
    serde_json::to_string(&WireResponse {
        v: PROTOCOL_VERSION,
        id: id.to_string(),
        candidates: candidates
            .iter()
            .map(|c| WireCandidate {
                lang: c.language.clone(),
                title: c.title.clone(),
                score: c.score,
            })
            .collect(),
        error: None,
    })
    .expect("response serializes")
}

pub fn encode_error_line(id: &str, message: &str) -> String {
    serde_json::to_string(&WireResponse {
        v: PROTOCOL_VERSION,
        id: id.to_string(),
        candidates: Vec::new(),
        error: Some(message.to_string()),
    })
    .expect("response serializes")
}

pub fn decode_response_line(line: &str) -> Result<GeneratorResponse, ProtocolError> {
    let wire: WireResponse = serde_json::from_str(line)?;
    if wire.v != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(wire.v));
    }
    if let Some(error) = wire.error {
        return Ok(GeneratorResponse {
            id: wire.id,
            result: Err(error),
        });
    }
    let candidates = wire
        .candidates
        .into_iter()
        .map(|c| Candidate::model(c.lang, c.title, c.score))
        .collect::<Vec<_>>();
    for c in &candidates {
        c.validate().map_err(ProtocolError::Invalid)?;
    }
    Ok(GeneratorResponse {
        id: wire.id,
        result: Ok(candidates),
    })
}

/// Serves protocol requests from `input`, answering each with `handler`,
/// until end of input. Malformed request lines get an error response.
pub fn serve_lines<R, W, F>(input: R, mut output: W, mut handler: F) -> std::io::Result<usize>
where
    R: BufRead,
    W: Write,
    F: FnMut(&GeneratorRequest) -> Vec<Candidate>,
{
    let mut served = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match decode_request_line(&line) {
            Ok(request) => encode_response_line(&request.mention_id, &handler(&request)),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_str()).map(str::to_string))
                    .unwrap_or_default();
                encode_error_line(&id, &e.to_string())
            }
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
        served += 1;
    }
    Ok(served)
}

pub trait GeneratorBackend: Send + Sync {
    /// Fails when the backend cannot be reached at all.
    fn check(&self) -> Result<(), BackendError>;

    fn generate(
        &self,
        request: &GeneratorRequest,
        timeout: Duration,
    ) -> Result<Vec<Candidate>, BackendError>;
}

/// Test double for the model: answers from a fixed map, round-tripping every
/// exchange through the wire encoding.
#[derive(Debug, Default, Clone)]
pub struct ScriptedBackend {
    fixture: HashMap<String, Vec<Candidate>>,
    silent: HashSet<String>,
    calls: Arc<AtomicUsize>,
}

impl ScriptedBackend {
    pub fn new(fixture: HashMap<String, Vec<Candidate>>) -> Self {
        ScriptedBackend {
            fixture,
            ..Default::default()
        }
    }

    /// Requests for these ids never get an answer and hit the timeout.
    pub fn with_silent<I: IntoIterator<Item = String>>(mut self, ids: I) -> Self {
        self.silent.extend(ids);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn answer(&self, request: &GeneratorRequest) -> Vec<Candidate> {
        self.fixture
            .get(&request.mention_id)
            .map(|c| c.iter().take(request.max_candidates).cloned().collect())
            .unwrap_or_default()
    }

    pub fn handle_line(&self, line: &str) -> String {
        match decode_request_line(line) {
            Ok(request) => encode_response_line(&request.mention_id, &self.answer(&request)),
            Err(e) => encode_error_line("", &e.to_string()),
        }
    }
}

impl GeneratorBackend for ScriptedBackend {
    fn check(&self) -> Result<(), BackendError> {
        Ok(())
    }

    fn generate(
        &self,
        request: &GeneratorRequest,
        timeout: Duration,
    ) -> Result<Vec<Candidate>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.silent.contains(&request.mention_id) {
            return Err(BackendError::Timeout(timeout));
        }
        let reply = self.handle_line(&encode_request_line(request));
        let response = decode_response_line(&reply)?;
        response.result.map_err(BackendError::Remote)
    }
}

type Pending = Arc<Mutex<HashMap<String, mpsc::Sender<Result<Vec<Candidate>, BackendError>>>>>;

/// Protocol client over a pair of byte streams. A reader thread routes
/// responses to waiting requests by id.
pub struct StreamBackend {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Pending,
    closed: Arc<AtomicBool>,
}

impl StreamBackend {
    pub fn new<R, W>(reader: R, writer: W) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let pending: Pending = Arc::default();
        let closed = Arc::new(AtomicBool::new(false));
        let routes = pending.clone();
        let closed_flag = closed.clone();
        std::thread::spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                match decode_response_line(&line) {
                    Ok(response) => {
                        let waiter = routes.lock().remove(&response.id);
                        match waiter {
                            Some(tx) => {
                                let _ = tx.send(response.result.map_err(BackendError::Remote));
                            }
                            None => debug!("response for unknown id {:?}", response.id),
                        }
                    }
                    Err(e) => warn!("undecodable backend response: {e}"),
                }
            }
            closed_flag.store(true, Ordering::SeqCst);
            for (_, tx) in routes.lock().drain() {
                let _ = tx.send(Err(BackendError::Disconnected));
            }
        });
        StreamBackend {
            writer: Mutex::new(Box::new(writer)),
            pending,
            closed,
        }
    }
}

impl GeneratorBackend for StreamBackend {
    fn check(&self) -> Result<(), BackendError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(BackendError::Unreachable("stream closed".into()));
        }
        Ok(())
    }

    fn generate(
        &self,
        request: &GeneratorRequest,
        timeout: Duration,
    ) -> Result<Vec<Candidate>, BackendError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(BackendError::Disconnected);
        }
        let (tx, rx) = mpsc::channel();
        self.pending.lock().insert(request.mention_id.clone(), tx);
        let line = encode_request_line(request);
        {
            let mut writer = self.writer.lock();
            let sent = writeln!(writer, "{line}").and_then(|_| writer.flush());
            if let Err(e) = sent {
                self.pending.lock().remove(&request.mention_id);
                return Err(e.into());
            }
        }
        match rx.recv_timeout(timeout) {
            Ok(result) => result,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                self.pending.lock().remove(&request.mention_id);
                Err(BackendError::Timeout(timeout))
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(BackendError::Disconnected),
        }
    }
}

/// A backend running as a child process speaking the protocol on its
/// standard streams.
pub struct ProcessBackend {
    child: Mutex<Child>,
    stream: StreamBackend,
}

impl ProcessBackend {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, BackendError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Unreachable(format!("{program}: {e}")))?;
        let stdin: ChildStdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(ProcessBackend {
            child: Mutex::new(child),
            stream: StreamBackend::new(BufReader::new(stdout), stdin),
        })
    }
}

impl GeneratorBackend for ProcessBackend {
    fn check(&self) -> Result<(), BackendError> {
        if let Ok(Some(status)) = self.child.lock().try_wait() {
            return Err(BackendError::Unreachable(format!(
                "backend exited with {status}"
            )));
        }
        self.stream.check()
    }

    fn generate(
        &self,
        request: &GeneratorRequest,
        timeout: Duration,
    ) -> Result<Vec<Candidate>, BackendError> {
        self.stream.generate(request, timeout)
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        let mut child = self.child.lock();
        let _ = child.kill();
        let _ = child.wait();
    }
}

/// A backend behind a POST endpoint: one request record per call, one
/// response record back.
pub struct HttpBackend {
    url: reqwest::Url,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(url: &str) -> Result<Self, BackendError> {
        let url = reqwest::Url::parse(url).map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        Ok(HttpBackend { url, client })
    }
}

impl GeneratorBackend for HttpBackend {
    fn check(&self) -> Result<(), BackendError> {
        let host = self
            .url
            .host_str()
            .ok_or_else(|| BackendError::Unreachable("url has no host".into()))?;
        let port = self.url.port_or_known_default().unwrap_or(80);
        let addr = (host, port)
            .to_socket_addrs()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?
            .next()
            .ok_or_else(|| BackendError::Unreachable(format!("{host} did not resolve")))?;
        TcpStream::connect_timeout(&addr, Duration::from_secs(5))
            .map(|_| ())
            .map_err(|e| BackendError::Unreachable(e.to_string()))
    }

    fn generate(
        &self,
        request: &GeneratorRequest,
        timeout: Duration,
    ) -> Result<Vec<Candidate>, BackendError> {
        let response = self
            .client
            .post(self.url.clone())
            .timeout(timeout)
            .header("content-type", "application/x-ndjson")
            .body(encode_request_line(request) + "\n")
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout(timeout)
                } else {
                    BackendError::Unreachable(e.to_string())
                }
            })?;
        if !response.status().is_success() {
            return Err(BackendError::Remote(format!("HTTP {}", response.status())));
        }
        let body = response
            .text()
            .map_err(|e| BackendError::Remote(e.to_string()))?;
        let line = body.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let decoded = decode_response_line(line)?;
        if decoded.id != request.mention_id {
            return Err(ProtocolError::Invalid(format!(
                "response id {:?} does not match request {:?}",
                decoded.id, request.mention_id
            ))
            .into());
        }
        decoded.result.map_err(BackendError::Remote)
    }
}

/// Picks a backend from a `--backend` argument: http(s) URLs become
/// [`HttpBackend`], anything else is run as a command line.
pub fn backend_from_spec(spec: &str) -> Result<Box<dyn GeneratorBackend>, BackendError> {
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Box::new(HttpBackend::new(spec)?));
    }
    let mut parts = spec.split_whitespace().map(str::to_string);
    let program = parts
        .next()
        .ok_or_else(|| BackendError::Unreachable("empty backend command".into()))?;
    let args: Vec<String> = parts.collect();
    Ok(Box::new(ProcessBackend::spawn(&program, &args)?))
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub max_candidates: usize,
    pub timeout: Duration,
    pub fan_out: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            max_candidates: DEFAULT_MAX_CANDIDATES,
            timeout: DEFAULT_TIMEOUT,
            fan_out: DEFAULT_FAN_OUT,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchResult {
    /// Every input mention id, with its candidates best-first as the backend sent them.
    pub candidates: BTreeMap<String, Vec<Candidate>>,
    /// Diagnostics for mentions whose request failed; their candidate list is empty.
    pub errors: BTreeMap<String, String>,
}

/// Sends every mention to the backend with at most `fan_out` requests in
/// flight. Individual failures become empty candidate lists.
pub fn run_batch(
    mentions: &[Mention],
    backend: &dyn GeneratorBackend,
    options: &BatchOptions,
) -> Result<BatchResult, BackendError> {
    backend.check()?;
    let requests: Vec<GeneratorRequest> = mentions
        .iter()
        .map(|m| encode_request(m, options.max_candidates.max(1)))
        .collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let workers = options.fan_out.max(1).min(requests.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let requests = &requests;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(request) = requests.get(i) else {
                    break;
                };
                let outcome = backend.generate(request, options.timeout);
                if tx.send((request.mention_id.clone(), outcome)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);

    let mut result = BatchResult::default();
    for (id, outcome) in rx {
        match outcome {
            Ok(candidates) => {
                result.candidates.insert(id, candidates);
            }
            Err(e) => {
                warn!("generator request {id} failed: {e}");
                result.errors.insert(id.clone(), e.to_string());
                result.candidates.insert(id, Vec::new());
            }
        }
    }
    Ok(result)
}
