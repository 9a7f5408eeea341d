//! Time sources for the engine.

use chrono::{DateTime, Duration, TimeZone, Utc};
use parking_lot::Mutex;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock that advances by a fixed step on every reading.
/// Used for reproducible replays; never for production traffic.
#[derive(Debug)]
pub struct LogicalClock {
    next: Mutex<DateTime<Utc>>,
    step: Duration,
}

impl LogicalClock {
    pub fn new(start: DateTime<Utc>, step: Duration) -> Self {
        LogicalClock { next: Mutex::new(start), step }
    }

    /// The default origin for logical time.
    pub fn origin() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).single().expect("valid origin")
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> DateTime<Utc> {
        let mut next = self.next.lock();
        let now = *next;
        *next = now + self.step;
        now
    }
}
