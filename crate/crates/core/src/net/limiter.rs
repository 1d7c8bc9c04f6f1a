use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use crate::clock::Clock;

/// Requests per second per host.
pub const DEFAULT_RATE: f64 = 2.0;

/// Per-host token bucket (GCRA form). Shared by all requesters; the
/// schedule is computed under a lock and the wait happens outside it.
pub struct RateLimiter {
    interval_micros: i64,
    burst: u32,
    clock: Arc<dyn Clock>,
    // host -> theoretical arrival time of the next conforming request, in µs
    next: Mutex<HashMap<String, i64>>,
}

impl RateLimiter {
    pub fn new(rate_per_sec: f64, burst: u32, clock: Arc<dyn Clock>) -> Self {
        assert!(rate_per_sec > 0.0, "rate must be positive");
        RateLimiter {
            interval_micros: (1_000_000.0 / rate_per_sec).round() as i64,
            burst: burst.max(1),
            clock,
            next: Mutex::new(HashMap::new()),
        }
    }

    pub fn interval(&self) -> Duration {
        Duration::from_micros(self.interval_micros as u64)
    }

    /// Reserves the next slot for `host` and returns its time in µs since
    /// the epoch, without waiting.
    pub fn reserve(&self, host: &str) -> i64 {
        let now = self.clock.now_millis() * 1_000;
        let mut next = self.next.lock();
        let tat = next.get(host).copied().unwrap_or(now).max(now);
        let earliest = tat - (self.burst as i64 - 1) * self.interval_micros;
        let send_at = now.max(earliest);
        next.insert(host.to_string(), tat + self.interval_micros);
        send_at
    }

    /// Blocks (on the clock) until `host` may be queried again.
    pub fn acquire(&self, host: &str) {
        let send_at = self.reserve(host);
        let now = self.clock.now_millis() * 1_000;
        if send_at > now {
            self.clock
                .sleep(Duration::from_micros((send_at - now) as u64));
        }
    }
}
