//! Outbound notifications.
//!
//! [`Notifier`] hands events to a [`DeliveryAdapter`] at most once per
//! `dedup_key`, keeps failed events in a retry queue and reports every final
//! outcome. [`Dispatcher`] runs a notifier on a background thread behind a
//! bounded queue so request handlers only pay for queue admission.

mod adapters;
mod dispatcher;

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::content::is_valid_email;

pub use adapters::{MemorySink, NullAdapter, OutboxFile, SmtpAdapter, SmtpSettings};
pub use dispatcher::Dispatcher;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationKind {
    PendingSubmission,
    EditorLink,
    Remoderation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationEvent {
    pub event_id: String,
    pub kind: NotificationKind,
    pub recipient: String,
    pub subject_line: String,
    pub body: String,
    pub dedup_key: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DeliveryRecord {
    Delivered {
        dedup_key: String,
        attempts: u32,
    },
    SuppressedDuplicate {
        dedup_key: String,
    },
    /// `will_retry` is false once the attempt budget is spent.
    Failed {
        dedup_key: String,
        reason: String,
        attempts: u32,
        will_retry: bool,
    },
}

impl DeliveryRecord {
    pub fn dedup_key(&self) -> &str {
        match self {
            DeliveryRecord::Delivered { dedup_key, .. }
            | DeliveryRecord::SuppressedDuplicate { dedup_key }
            | DeliveryRecord::Failed { dedup_key, .. } => dedup_key,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NotifyError {
    #[error("invalid recipient address `{0}`")]
    InvalidRecipient(String),
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct AdapterError(pub String);

pub trait DeliveryAdapter: Send + Sync {
    fn deliver(&self, event: &NotificationEvent) -> Result<(), AdapterError>;

    /// Keys this adapter delivered in an earlier process lifetime.
    fn delivered_keys(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Where the engine hands events; implementations must not block for long.
pub trait NotificationSink: Send + Sync {
    fn enqueue(&self, event: NotificationEvent);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, backoff_base: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    /// Delay after the `attempts`-th failed attempt: base, 2*base, 4*base, ...
    pub fn backoff_after(&self, attempts: u32) -> Duration {
        self.backoff_base.saturating_mul(1u32 << attempts.saturating_sub(1).min(16))
    }
}

struct Retry {
    event: NotificationEvent,
    attempts: u32,
    due: Instant,
}

#[derive(Default)]
struct State {
    delivered: HashSet<String>,
    queued: HashSet<String>,
    retries: VecDeque<Retry>,
    outcomes: Vec<DeliveryRecord>,
}

pub struct Notifier {
    adapter: Arc<dyn DeliveryAdapter>,
    policy: RetryPolicy,
    state: Mutex<State>,
}

impl Notifier {
    pub fn new(adapter: Arc<dyn DeliveryAdapter>, policy: RetryPolicy) -> Self {
        let state = State { delivered: adapter.delivered_keys().into_iter().collect(), ..State::default() };
        Notifier { adapter, policy, state: Mutex::new(state) }
    }

    pub fn policy(&self) -> RetryPolicy {
        self.policy
    }

    /// Attempts delivery once. A failure leaves the event in the retry queue
    /// (unless the attempt budget is already spent) and is reported as
    /// `Failed { will_retry: true }`.
    pub fn notify(&self, event: NotificationEvent) -> Result<DeliveryRecord, NotifyError> {
        if !is_valid_email(&event.recipient) {
            return Err(NotifyError::InvalidRecipient(event.recipient));
        }
        {
            let mut state = self.state.lock();
            if state.delivered.contains(&event.dedup_key) || state.queued.contains(&event.dedup_key) {
                let record = DeliveryRecord::SuppressedDuplicate { dedup_key: event.dedup_key };
                state.outcomes.push(record.clone());
                return Ok(record);
            }
            state.queued.insert(event.dedup_key.clone());
        }
        Ok(self.attempt(event, 0))
    }

    fn attempt(&self, event: NotificationEvent, previous_attempts: u32) -> DeliveryRecord {
        let attempts = previous_attempts + 1;
        let result = self.adapter.deliver(&event);
        let mut state = self.state.lock();
        match result {
            Ok(()) => {
                state.queued.remove(&event.dedup_key);
                state.delivered.insert(event.dedup_key.clone());
                let record = DeliveryRecord::Delivered { dedup_key: event.dedup_key, attempts };
                state.outcomes.push(record.clone());
                record
            }
            Err(AdapterError(reason)) => {
                let will_retry = attempts < self.policy.max_attempts;
                let record =
                    DeliveryRecord::Failed { dedup_key: event.dedup_key.clone(), reason, attempts, will_retry };
                if will_retry {
                    let due = Instant::now() + self.policy.backoff_after(attempts);
                    state.retries.push_back(Retry { event, attempts, due });
                } else {
                    tracing::warn!(dedup_key = %event.dedup_key, attempts, "notification dropped after retries");
                    state.queued.remove(&event.dedup_key);
                    state.outcomes.push(record.clone());
                }
                record
            }
        }
    }

    /// Retries every queued event whose backoff has elapsed.
    pub fn retry_due(&self) {
        loop {
            let next = {
                let mut state = self.state.lock();
                let now = Instant::now();
                match state.retries.iter().position(|r| r.due <= now) {
                    Some(i) => state.retries.remove(i),
                    None => None,
                }
            };
            match next {
                Some(retry) => {
                    self.attempt(retry.event, retry.attempts);
                }
                None => return,
            }
        }
    }

    /// Empties the retry queue, sleeping out backoff delays, and returns every
    /// final outcome recorded since the previous drain in dispatch order.
    pub fn drain(&self) -> Vec<DeliveryRecord> {
        loop {
            let next = {
                let mut state = self.state.lock();
                let earliest = state.retries.iter().enumerate().min_by_key(|(_, r)| r.due).map(|(i, _)| i);
                earliest.and_then(|i| state.retries.remove(i))
            };
            let Some(retry) = next else { break };
            let wait = retry.due.saturating_duration_since(Instant::now());
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
            self.attempt(retry.event, retry.attempts);
        }
        std::mem::take(&mut self.state.lock().outcomes)
    }

    pub fn pending_retries(&self) -> usize {
        self.state.lock().retries.len()
    }

    pub fn next_retry_due(&self) -> Option<Instant> {
        self.state.lock().retries.iter().map(|r| r.due).min()
    }
}

impl NotificationSink for Notifier {
    fn enqueue(&self, event: NotificationEvent) {
        let key = event.dedup_key.clone();
        match self.notify(event) {
            Ok(DeliveryRecord::Failed { reason, .. }) => {
                tracing::warn!(dedup_key = %key, %reason, "notification delivery failed")
            }
            Ok(_) => {}
            Err(e) => tracing::warn!(dedup_key = %key, error = %e, "notification rejected"),
        }
    }
}
