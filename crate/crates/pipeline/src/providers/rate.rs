use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::Sleeper;

/// Token bucket shared by every client of one provider. Holds at most
/// `burst` tokens and refills at `requests_per_minute / 60` per second.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(requests_per_minute: f64, burst: u32) -> Self {
        assert!(requests_per_minute > 0.0 && burst > 0, "rate and burst must be positive");
        RateLimiter {
            per_second: requests_per_minute / 60.0,
            burst: burst as f64,
            state: Mutex::new((burst as f64, Instant::now())),
        }
    }

    /// Blocks until a token is available and takes it.
    pub fn acquire(&self, sleeper: &dyn Sleeper) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let refilled = state.0 + now.duration_since(state.1).as_secs_f64() * self.per_second;
                state.0 = refilled.min(self.burst);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.0) / self.per_second)
            };
            sleeper.sleep(wait);
        }
    }
}
