//! The open-input state machine.
//!
//! Submissions start `pending`, or `accepted` for owners and trusted users.
//! Pending and declined elements never appear in public listings. Owners
//! resolve the queue with accept/decline decisions and may later reverse
//! them. Every element mutation is a compare-and-set on the element record,
//! committed together with its audit event.

mod catalog;
mod model;
mod stats;
mod submission;

use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::Mutex;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::clock::{Clock, LogicalClock, SystemClock};
use crate::content::{is_valid_email, SemanticType, TypeRegistry};
use crate::error::{Error, Result};
use crate::notify::{NotificationEvent, NotificationKind, NotificationSink, Notifier, NullAdapter, RetryPolicy};
use crate::store::{Key, Mutation, Namespace, Record, ScanOrder, Store, StoreError};

pub use catalog::{NewSection, SectionUpdate};
pub use model::*;
pub use submission::{Submission, SubmitOutcome};

/// Attempts made by a compare-and-set loop before reporting [`Error::Conflict`].
pub const MAX_CAS_ATTEMPTS: usize = 3;

pub struct Engine {
    pub(crate) store: Arc<Store>,
    pub(crate) registry: TypeRegistry,
    notifications: Arc<dyn NotificationSink>,
    base_url: String,
    clock: Arc<dyn Clock>,
    rng: Mutex<ChaCha20Rng>,
    stamps: Mutex<Stamps>,
    seed: Option<u64>,
    /// Deterministic mode without an explicit clock: time is derived from
    /// the store's commit count.
    epoch_clock: bool,
}

struct Stamps {
    last: DateTime<Utc>,
    audit_seq: u64,
    base: DateTime<Utc>,
    tick: i64,
}

/// Logical seconds between two commits in deterministic mode. Operations
/// read the clock far fewer times than this.
const EPOCH_SECONDS: i64 = 1000;

fn seeded_rng(seed: u64, commit_seq: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed ^ commit_seq.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn epoch_start(commit_seq: u64) -> DateTime<Utc> {
    LogicalClock::origin() + Duration::seconds(EPOCH_SECONDS.saturating_mul(commit_seq as i64))
}

fn last_audit_seq(store: &Store) -> u64 {
    store.last_id(Namespace::Audit).and_then(|id| id.strip_prefix("ev").and_then(|n| n.parse().ok())).unwrap_or(0)
}

pub struct EngineBuilder {
    pub(crate) store: Arc<Store>,
    notifications: Option<Arc<dyn NotificationSink>>,
    base_url: String,
    seed: Option<u64>,
    clock: Option<Arc<dyn Clock>>,
}

impl EngineBuilder {
    /// Public base URL used in editor links and moderation mail.
    pub fn base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into().trim_end_matches('/').to_owned();
        self
    }

    pub fn notifications(mut self, sink: Arc<dyn NotificationSink>) -> Self {
        self.notifications = Some(sink);
        self
    }

    /// Reproducible identifiers, tokens and timestamps. Every mutating
    /// operation reseeds from the seed and the store's commit count, so the
    /// same operations against the same store state produce the same records
    /// whether they run in one process or in many. Tokens become predictable
    /// from the seed and concurrent operations may collide: never use this in
    /// production.
    pub fn deterministic(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn build(self) -> Result<Engine> {
        let registry = TypeRegistry::with_builtins();
        for record in self.store.scan(Namespace::Type, |_| true, ScanOrder::Ascending) {
            let spec: SemanticType = decode(&record)?;
            registry.insert(spec).map_err(|e| StoreError::Corrupt(format!("stored type {}: {e}", record.id)))?;
        }

        let (last, audit_seq) = scan_stamps(&self.store);
        let seq = self.store.commit_seq();
        let rng = match self.seed {
            Some(seed) => seeded_rng(seed, seq),
            None => ChaCha20Rng::from_os_rng(),
        };
        let epoch_clock = self.seed.is_some() && self.clock.is_none();
        let clock = self.clock.unwrap_or_else(|| Arc::new(SystemClock));
        let notifications = self
            .notifications
            .unwrap_or_else(|| Arc::new(Notifier::new(Arc::new(NullAdapter), RetryPolicy::default())));

        Ok(Engine {
            store: self.store,
            registry,
            notifications,
            base_url: self.base_url,
            clock,
            rng: Mutex::new(rng),
            stamps: Mutex::new(Stamps {
                last: last.unwrap_or(DateTime::UNIX_EPOCH),
                audit_seq,
                base: epoch_start(seq),
                tick: 0,
            }),
            seed: self.seed,
            epoch_clock,
        })
    }
}

/// Latest timestamp and highest audit sequence number found in the store.
fn scan_stamps(store: &Store) -> (Option<DateTime<Utc>>, u64) {
    let mut latest: Option<DateTime<Utc>> = None;
    let mut audit_seq = 0;
    for namespace in Namespace::ALL {
        for record in store.scan(namespace, |_| true, ScanOrder::Ascending) {
            for field in ["created_at", "decided_at", "issued_at", "at"] {
                if let Some(t) = record.str_field(field).and_then(|s| DateTime::parse_from_rfc3339(s).ok()) {
                    let t = t.with_timezone(&Utc);
                    latest = Some(latest.map_or(t, |l| l.max(t)));
                }
            }
            if namespace == Namespace::Audit {
                if let Some(seq) = record.id.strip_prefix("ev").and_then(|n| n.parse::<u64>().ok()) {
                    audit_seq = audit_seq.max(seq);
                }
            }
        }
    }
    (latest, audit_seq)
}

impl Engine {
    pub fn builder(store: Arc<Store>) -> EngineBuilder {
        EngineBuilder {
            store,
            notifications: None,
            base_url: "http://localhost:8080".to_owned(),
            seed: None,
            clock: None,
        }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn registry(&self) -> &TypeRegistry {
        &self.registry
    }

    /// Current time, never earlier than any time handed out before.
    pub(crate) fn now(&self) -> DateTime<Utc> {
        let mut stamps = self.stamps.lock();
        let reading = if self.epoch_clock {
            stamps.tick += 1;
            stamps.base + Duration::seconds(stamps.tick - 1)
        } else {
            self.clock.now()
        };
        let now = reading.max(stamps.last);
        stamps.last = now;
        now
    }

    /// Marks the start of a mutating operation. In deterministic mode this
    /// resets the id stream, the clock and the audit sequence from the
    /// store, making results independent of what earlier operations in this
    /// process drew.
    pub(crate) fn begin_op(&self) {
        let Some(seed) = self.seed else { return };
        let seq = self.store.commit_seq();
        *self.rng.lock() = seeded_rng(seed, seq);
        let mut stamps = self.stamps.lock();
        stamps.audit_seq = last_audit_seq(&self.store);
        stamps.base = epoch_start(seq);
        stamps.tick = 0;
    }

    pub(crate) fn new_id(&self) -> String {
        let mut bytes = [0u8; 16];
        self.rng.lock().fill_bytes(&mut bytes);
        uuid::Builder::from_random_bytes(bytes).into_uuid().hyphenated().to_string()
    }

    pub(crate) fn random_bytes(&self) -> [u8; 16] {
        let mut bytes = [0u8; 16];
        self.rng.lock().fill_bytes(&mut bytes);
        bytes
    }

    pub(crate) fn audit(
        &self,
        element: &Element,
        action: AuditAction,
        actor: &SubmitterIdentity,
        at: DateTime<Utc>,
    ) -> Result<Mutation> {
        let event_id = {
            let mut stamps = self.stamps.lock();
            stamps.audit_seq += 1;
            format!("ev{:012}", stamps.audit_seq)
        };
        let event = AuditEvent {
            event_id: event_id.clone(),
            element_id: element.element_id.clone(),
            site_id: element.site_id.clone(),
            action,
            actor: actor.clone(),
            at,
        };
        Ok(Mutation::Insert { key: Key::new(Namespace::Audit, event_id), body: encode(&event)? })
    }

    pub(crate) fn notify(
        &self,
        kind: NotificationKind,
        recipient: &str,
        subject_line: String,
        body: String,
        dedup_key: String,
    ) {
        let event = NotificationEvent {
            event_id: self.new_id(),
            kind,
            recipient: recipient.to_owned(),
            subject_line,
            body,
            dedup_key,
            created_at: self.now(),
        };
        self.notifications.enqueue(event);
    }

    pub(crate) fn load<T: DeserializeOwned>(&self, namespace: Namespace, id: &str) -> Result<Option<(T, u64)>> {
        match self.store.get(&Key::new(namespace, id)) {
            Some(record) => Ok(Some((decode(&record)?, record.version))),
            None => Ok(None),
        }
    }

    pub(crate) fn load_element(&self, element_id: &str) -> Result<(Element, u64)> {
        self.load(Namespace::Element, element_id)?.ok_or_else(|| Error::UnknownElement(element_id.to_owned()))
    }

    pub fn element(&self, element_id: &str) -> Result<Element> {
        Ok(self.load_element(element_id)?.0)
    }

    /// Audit trail of one element in commit order.
    pub fn audit_trail(&self, element_id: &str) -> Result<Vec<AuditEvent>> {
        let records =
            self.store.scan(Namespace::Audit, |r| r.str_field("element_id") == Some(element_id), ScanOrder::Ascending);
        records.iter().map(decode).collect()
    }

    // -- sites -------------------------------------------------------------

    pub fn create_site(&self, new: NewSite) -> Result<Site> {
        self.begin_op();
        if !crate::content::schema_identifier(&new.site_id) {
            return Err(Error::InvalidSite(format!("site id `{}` must be 1-64 characters of [a-z0-9_-]", new.site_id)));
        }
        if !is_valid_email(&new.owner_email) {
            return Err(Error::InvalidEmail);
        }
        let site = Site {
            name: if new.name.trim().is_empty() { new.site_id.clone() } else { new.name },
            site_id: new.site_id,
            owner_email: new.owner_email,
            remoderate_on_edit: new.remoderate_on_edit,
            trusted_subjects: Default::default(),
            created_at: self.now(),
        };
        match self.store.put_new(Key::new(Namespace::Site, &site.site_id), encode(&site)?) {
            Ok(_) => Ok(site),
            Err(StoreError::AlreadyExists(_)) => Err(Error::SiteExists(site.site_id)),
            Err(e) => Err(e.into()),
        }
    }

    pub fn site(&self, site_id: &str) -> Result<Site> {
        Ok(self.load::<Site>(Namespace::Site, site_id)?.ok_or_else(|| Error::UnknownSite(site_id.to_owned()))?.0)
    }

    pub fn sites(&self) -> Result<Vec<Site>> {
        self.store.scan(Namespace::Site, |_| true, ScanOrder::Ascending).iter().map(decode).collect()
    }

    /// Flags (or unflags) a registered subject as trusted on a site.
    pub fn set_trusted(&self, site_id: &str, subject: &str, trusted: bool, actor: &SubmitterIdentity) -> Result<Site> {
        self.begin_op();
        self.update_site(site_id, actor, |site| {
            if trusted {
                site.trusted_subjects.insert(subject.to_owned());
            } else {
                site.trusted_subjects.remove(subject);
            }
        })
    }

    pub fn set_remoderate_on_edit(&self, site_id: &str, enabled: bool, actor: &SubmitterIdentity) -> Result<Site> {
        self.begin_op();
        self.update_site(site_id, actor, |site| site.remoderate_on_edit = enabled)
    }

    fn update_site(&self, site_id: &str, actor: &SubmitterIdentity, mut change: impl FnMut(&mut Site)) -> Result<Site> {
        for _ in 0..MAX_CAS_ATTEMPTS {
            let (mut site, version) =
                self.load::<Site>(Namespace::Site, site_id)?.ok_or_else(|| Error::UnknownSite(site_id.to_owned()))?;
            authorize_owner(actor, site_id)?;
            change(&mut site);
            match self.store.compare_and_set(Key::new(Namespace::Site, site_id), version, encode(&site)?) {
                Ok(_) => return Ok(site),
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::Conflict)
    }

    /// Identity for a registered user of `site_id`, upgraded to
    /// `registered_trusted` when the owner has flagged the subject.
    pub fn registered_identity(&self, site_id: &str, subject: &str) -> Result<SubmitterIdentity> {
        let site = self.site(site_id)?;
        Ok(if site.trusted_subjects.contains(subject) {
            SubmitterIdentity::trusted(subject)
        } else {
            SubmitterIdentity::registered(subject)
        })
    }

    pub(crate) fn queue_url(&self, site_id: &str, element_id: &str) -> String {
        format!("{}/admin/sites/{site_id}/queue?element={element_id}", self.base_url)
    }

    pub(crate) fn edit_url(&self, token: &str) -> String {
        format!("{}/edit/{token}", self.base_url)
    }
}

pub(crate) fn authorize_owner(actor: &SubmitterIdentity, site_id: &str) -> Result<()> {
    if actor.is_owner_of(site_id) {
        Ok(())
    } else {
        Err(Error::NotAuthorized)
    }
}

pub(crate) fn decode<T: DeserializeOwned>(record: &Record) -> Result<T> {
    T::deserialize(&*record.body).map_err(|e| StoreError::Corrupt(format!("record {}: {e}", record.key())).into())
}

pub(crate) fn encode<T: Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value).map_err(|e| StoreError::Codec(e).into())
}
