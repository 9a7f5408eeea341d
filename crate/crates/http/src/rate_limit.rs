//! Per-client token buckets for the public submission endpoint.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLimitConfig {
    /// Largest burst a client may send.
    pub capacity: u32,
    /// Tokens returned to a bucket per minute.
    pub refill_per_minute: u32,
}

impl Default for RateLimitConfig {
    fn default() -> Self {
        RateLimitConfig { capacity: 10, refill_per_minute: 5 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Bucket {
    tokens: f64,
    updated: Instant,
}

/// Buckets that have refilled completely are forgotten once the map grows
/// past this size.
const PRUNE_ABOVE: usize = 10_000;

/// Absorbs rounding when a client is paced exactly at the refill rate.
const EPSILON: f64 = 1e-9;

#[derive(Debug)]
pub struct RateLimiter {
    config: RateLimitConfig,
    buckets: Mutex<HashMap<String, Bucket>>,
}

impl RateLimiter {
    pub fn new(config: RateLimitConfig) -> Self {
        RateLimiter { config, buckets: Mutex::new(HashMap::new()) }
    }

    pub fn config(&self) -> RateLimitConfig {
        self.config
    }

    fn refill_per_sec(&self) -> f64 {
        f64::from(self.config.refill_per_minute) / 60.0
    }

    fn refilled(&self, bucket: Bucket, now: Instant) -> f64 {
        let elapsed = now.saturating_duration_since(bucket.updated).as_secs_f64();
        (bucket.tokens + elapsed * self.refill_per_sec()).min(f64::from(self.config.capacity))
    }

    /// Takes one token from `client`'s bucket. On refusal returns how long
    /// until a token is available.
    pub fn check(&self, client: &str, now: Instant) -> Result<(), Duration> {
        let capacity = f64::from(self.config.capacity);
        let mut buckets = self.buckets.lock();
        if buckets.len() > PRUNE_ABOVE {
            buckets.retain(|_, b| self.refilled(*b, now) < capacity);
        }
        let bucket = buckets.entry(client.to_owned()).or_insert(Bucket { tokens: capacity, updated: now });
        let tokens = self.refilled(*bucket, now);
        if tokens >= 1.0 - EPSILON {
            *bucket = Bucket { tokens: (tokens - 1.0).max(0.0), updated: now };
            Ok(())
        } else {
            *bucket = Bucket { tokens, updated: now };
            let rate = self.refill_per_sec();
            if rate <= 0.0 {
                return Err(Duration::from_secs(u64::from(u32::MAX)));
            }
            Err(Duration::from_secs_f64((1.0 - tokens) / rate))
        }
    }
}
