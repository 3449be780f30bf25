use std::sync::Mutex;
use std::time::Duration;

/// Abstracts waiting between retries so tests can run without real delays.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Records requested delays instead of sleeping.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    delays: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.delays.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, duration: Duration) {
        self.delays.lock().unwrap().push(duration);
    }
}

/// Exponential backoff: 1 s, 2 s, 4 s, ... for retry 0, 1, 2, ...
pub fn backoff_delay(retry: u32) -> Duration {
    Duration::from_secs(1u64 << retry.min(16))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_doubles() {
        let secs: Vec<u64> = (0..3).map(|r| backoff_delay(r).as_secs()).collect();
        assert_eq!(secs, vec![1, 2, 4]);
    }
}
