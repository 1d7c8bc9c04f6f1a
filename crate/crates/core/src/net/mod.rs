//! Plumbing shared by the wiki search client and the QID resolver:
//! a pluggable HTTP transport, a per-host token-bucket limiter, a persistent
//! response cache and a retrying fetch with exponential backoff.

mod cache;
mod limiter;
mod transport;

use std::sync::Arc;
use std::time::Duration;

use log::debug;
use thiserror::Error;

pub use cache::{CacheRecord, ResponseCache, DEFAULT_TTL};
pub use limiter::{RateLimiter, DEFAULT_RATE};
pub use transport::{
    FixtureReply, FixtureTransport, HttpResponse, HttpTransport, Transport, TransportError,
};

use crate::clock::Clock;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("request timed out")]
    Timeout,
    #[error("transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_backoff: Duration::from_secs(1),
        }
    }
}

/// Everything needed to issue polite GET requests against wiki hosts.
#[derive(Clone)]
pub struct Fetcher {
    pub transport: Arc<dyn Transport>,
    pub limiter: Arc<RateLimiter>,
    pub clock: Arc<dyn Clock>,
    pub retry: RetryPolicy,
}

impl Fetcher {
    pub fn new(
        transport: Arc<dyn Transport>,
        limiter: Arc<RateLimiter>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Fetcher {
            transport,
            limiter,
            clock,
            retry: RetryPolicy::default(),
        }
    }

    /// GET `url` on `host`, waiting for the limiter before every attempt and
    /// backing off exponentially on 429, 5xx and timeouts.
    pub fn get(&self, host: &str, url: &str) -> Result<HttpResponse, FetchError> {
        let mut attempt = 0;
        loop {
            self.limiter.acquire(host);
            let error = match self.transport.get(url) {
                Ok(response) if is_retryable(response.status) => {
                    FetchError::Status(response.status)
                }
                Ok(response) if (200..300).contains(&response.status) => return Ok(response),
                Ok(response) => return Err(FetchError::Status(response.status)),
                Err(TransportError::Timeout) => FetchError::Timeout,
                Err(TransportError::Io(e)) => FetchError::Transport(e),
            };
            if attempt >= self.retry.max_retries {
                return Err(error);
            }
            let backoff = self.retry.base_backoff * 2u32.pow(attempt);
            debug!("{url}: {error}, retrying in {backoff:?}");
            self.clock.sleep(backoff);
            attempt += 1;
        }
    }
}

fn is_retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn fetcher(transport: FixtureTransport, clock: Arc<ManualClock>) -> Fetcher {
        let limiter = Arc::new(RateLimiter::new(1000.0, 1, clock.clone()));
        Fetcher::new(Arc::new(transport), limiter, clock)
    }

    #[test]
    fn retries_429_then_succeeds() {
        let clock = Arc::new(ManualClock::new(0));
        let transport = FixtureTransport::new();
        transport.script(
            "u",
            vec![
                FixtureReply::status(429, ""),
                FixtureReply::status(503, ""),
                FixtureReply::ok("fine"),
            ],
        );
        let f = fetcher(transport, clock.clone());
        assert_eq!(f.get("h", "u").unwrap().body, "fine");
        // 1 s + 2 s of backoff plus limiter spacing
        assert!(clock.now_millis() >= 3_000);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let clock = Arc::new(ManualClock::new(0));
        let transport = FixtureTransport::new();
        transport.script("u", vec![FixtureReply::Timeout]);
        let f = fetcher(transport, clock);
        assert_eq!(f.get("h", "u").unwrap_err(), FetchError::Timeout);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let clock = Arc::new(ManualClock::new(0));
        let transport = Arc::new(FixtureTransport::new());
        transport.script("u", vec![FixtureReply::status(404, "")]);
        let limiter = Arc::new(RateLimiter::new(1000.0, 1, clock.clone()));
        let f = Fetcher::new(transport.clone(), limiter, clock);
        assert_eq!(f.get("h", "u").unwrap_err(), FetchError::Status(404));
        assert_eq!(transport.calls().len(), 1);
    }
}
