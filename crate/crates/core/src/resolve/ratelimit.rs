use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Sliding-window admission control: at most `permits` admissions in any
/// window of `window` length. Callers block until admitted.
#[derive(Debug)]
pub struct RateLimiter {
    permits: usize,
    window: Duration,
    admitted: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    /// `per_second` requests per second. The window carries a small guard so
    /// requests admitted a second apart are still a second apart on arrival.
    pub fn per_second(per_second: u32) -> Self {
        Self::new(per_second.max(1) as usize, Duration::from_millis(1_020))
    }

    pub fn new(permits: usize, window: Duration) -> Self {
        RateLimiter {
            permits: permits.max(1),
            window,
            admitted: Mutex::new(VecDeque::with_capacity(permits)),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut q = self.admitted.lock().unwrap_or_else(|e| e.into_inner());
                let now = Instant::now();
                while q.front().is_some_and(|&t| now.duration_since(t) >= self.window) {
                    q.pop_front();
                }
                if q.len() < self.permits {
                    q.push_back(now);
                    return;
                }
                self.window - now.duration_since(q[0])
            };
            std::thread::sleep(wait);
        }
    }
}
