use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimiterConfig {
    /// In-flight request cap.
    pub max_concurrency: usize,
    /// Token-bucket refill rate; `None` disables rate limiting.
    pub requests_per_second: Option<f64>,
    pub burst: u32,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        Self { max_concurrency: 8, requests_per_second: Some(4.0), burst: 8 }
    }
}

impl LimiterConfig {
    pub fn unlimited() -> Self {
        Self { max_concurrency: usize::MAX, requests_per_second: None, burst: 1 }
    }
}

struct State {
    in_flight: usize,
    tokens: f64,
    refilled: Instant,
}

/// Concurrency cap plus token bucket. Admission is serialized through one
/// mutex so waiters are served without starvation of the bucket.
pub struct Limiter {
    config: LimiterConfig,
    state: Mutex<State>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.limiter.state.lock().unwrap_or_else(|e| e.into_inner());
        st.in_flight -= 1;
        drop(st);
        self.limiter.freed.notify_one();
    }
}

impl Limiter {
    pub fn new(config: LimiterConfig) -> Self {
        let tokens = config.burst.max(1) as f64;
        Self {
            config,
            state: Mutex::new(State { in_flight: 0, tokens, refilled: Instant::now() }),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while st.in_flight >= self.config.max_concurrency.max(1) {
            st = self.freed.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        if let Some(rate) = self.config.requests_per_second.filter(|r| *r > 0.0) {
            let cap = self.config.burst.max(1) as f64;
            loop {
                let now = Instant::now();
                let elapsed = now.duration_since(st.refilled).as_secs_f64();
                st.tokens = (st.tokens + elapsed * rate).min(cap);
                st.refilled = now;
                if st.tokens >= 1.0 {
                    st.tokens -= 1.0;
                    break;
                }
                let wait = Duration::from_secs_f64((1.0 - st.tokens) / rate);
                // Sleeping while holding the lock keeps admission ordered.
                std::thread::sleep(wait);
            }
        }
        st.in_flight += 1;
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).in_flight
    }
}
