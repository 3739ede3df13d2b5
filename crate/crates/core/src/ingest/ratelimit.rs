//! Token-bucket rate limiting over an injectable clock.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};

/// Time source for limiter waits, retry backoff and query-log stamps.
pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn elapsed(&self) -> Duration;
    fn sleep(&self, d: Duration);
    fn utc_now(&self) -> DateTime<Utc>;
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }

    fn utc_now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when slept on. Records every sleep.
#[derive(Debug)]
pub struct ManualClock {
    nanos: AtomicU64,
    start: DateTime<Utc>,
    sleeps: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self {
            nanos: AtomicU64::new(0),
            start,
            sleeps: Mutex::new(Vec::new()),
        }
    }

    pub fn advance(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().expect("clock mutex poisoned").clone()
    }
}

impl Clock for ManualClock {
    fn elapsed(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }

    fn sleep(&self, d: Duration) {
        self.sleeps.lock().expect("clock mutex poisoned").push(d);
        self.advance(d);
    }

    fn utc_now(&self) -> DateTime<Utc> {
        self.start + chrono::Duration::from_std(self.elapsed()).unwrap_or_default()
    }
}

#[derive(Debug)]
struct BucketState {
    tokens: f64,
    last: Duration,
}

/// Shared token bucket. `acquire` blocks on the clock until a token is free.
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<BucketState>,
    clock: Arc<dyn Clock>,
}

impl TokenBucket {
    /// `capacity` tokens at most, refilled at `refill_per_sec`. The bucket
    /// starts full.
    pub fn new(capacity: f64, refill_per_sec: f64, clock: Arc<dyn Clock>) -> Self {
        let last = clock.elapsed();
        Self {
            capacity,
            refill_per_sec,
            state: Mutex::new(BucketState { tokens: capacity, last }),
            clock,
        }
    }

    /// `n` requests per minute with a burst of one.
    pub fn per_minute(n: u32, clock: Arc<dyn Clock>) -> Self {
        Self::new(1.0, f64::from(n) / 60.0, clock)
    }

    pub fn unlimited() -> Self {
        Self::new(f64::INFINITY, f64::INFINITY, Arc::new(SystemClock::default()))
    }

    fn refill(&self, state: &mut BucketState) {
        let now = self.clock.elapsed();
        let dt = now.saturating_sub(state.last).as_secs_f64();
        if dt > 0.0 {
            state.tokens = (state.tokens + dt * self.refill_per_sec).min(self.capacity);
        }
        state.last = now;
    }

    pub fn try_acquire(&self) -> bool {
        let mut state = self.state.lock().expect("rate limiter mutex poisoned");
        self.refill(&mut state);
        if state.tokens >= 1.0 {
            state.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter mutex poisoned");
                self.refill(&mut state);
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.tokens) / self.refill_per_sec)
            };
            self.clock.sleep(wait.max(Duration::from_millis(1)));
        }
    }
}
