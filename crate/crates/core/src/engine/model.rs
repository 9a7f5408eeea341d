use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::content::{ElementPayload, PolicyTier};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub site_id: String,
    pub name: String,
    pub owner_email: String,
    /// Edits through an editor link send accepted content back to the queue.
    pub remoderate_on_edit: bool,
    /// Registered subjects the owner lets bypass the confirmation queue.
    #[serde(default)]
    pub trusted_subjects: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewSite {
    pub site_id: String,
    #[serde(default)]
    pub name: String,
    pub owner_email: String,
    #[serde(default = "yes")]
    pub remoderate_on_edit: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityClass {
    Owner,
    RegisteredTrusted,
    Registered,
    ExternalAuthenticated,
    Anonymous,
}

impl IdentityClass {
    pub const ALL: [IdentityClass; 5] = [
        IdentityClass::Owner,
        IdentityClass::RegisteredTrusted,
        IdentityClass::Registered,
        IdentityClass::ExternalAuthenticated,
        IdentityClass::Anonymous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IdentityClass::Owner => "owner",
            IdentityClass::RegisteredTrusted => "registered_trusted",
            IdentityClass::Registered => "registered",
            IdentityClass::ExternalAuthenticated => "external_authenticated",
            IdentityClass::Anonymous => "anonymous",
        }
    }

    fn rank(self) -> u8 {
        match self {
            IdentityClass::Anonymous => 0,
            IdentityClass::ExternalAuthenticated => 1,
            IdentityClass::Registered | IdentityClass::RegisteredTrusted => 2,
            IdentityClass::Owner => 3,
        }
    }

    /// Whether this class may submit into a section with `tier`.
    pub fn satisfies(self, tier: PolicyTier) -> bool {
        let needed = match tier {
            PolicyTier::Anyone => 0,
            PolicyTier::ExternalAuthenticated => 1,
            PolicyTier::RegisteredUsers => 2,
            PolicyTier::OwnerOnly => 3,
        };
        self.rank() >= needed
    }

    /// Status a fresh submission from this class starts in.
    pub fn initial_status(self) -> ElementStatus {
        match self {
            IdentityClass::Owner | IdentityClass::RegisteredTrusted => ElementStatus::Accepted,
            IdentityClass::Registered | IdentityClass::ExternalAuthenticated | IdentityClass::Anonymous => {
                ElementStatus::Pending
            }
        }
    }
}

impl fmt::Display for IdentityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IdentityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IdentityClass::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown identity class `{s}`"))
    }
}

/// Who is acting. Owners carry their site id as the subject.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubmitterIdentity {
    pub class: IdentityClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl SubmitterIdentity {
    pub fn anonymous(client_hash: Option<String>) -> Self {
        SubmitterIdentity { class: IdentityClass::Anonymous, subject: client_hash }
    }

    pub fn owner(site_id: impl Into<String>) -> Self {
        SubmitterIdentity { class: IdentityClass::Owner, subject: Some(site_id.into()) }
    }

    pub fn registered(subject: impl Into<String>) -> Self {
        SubmitterIdentity { class: IdentityClass::Registered, subject: Some(subject.into()) }
    }

    pub fn trusted(subject: impl Into<String>) -> Self {
        SubmitterIdentity { class: IdentityClass::RegisteredTrusted, subject: Some(subject.into()) }
    }

    pub fn external(subject: impl Into<String>) -> Self {
        SubmitterIdentity { class: IdentityClass::ExternalAuthenticated, subject: Some(subject.into()) }
    }

    pub fn is_owner_of(&self, site_id: &str) -> bool {
        self.class == IdentityClass::Owner && self.subject.as_deref() == Some(site_id)
    }
}

/// Salted digest of a client address, so raw addresses are never stored.
pub fn anonymize_client(salt: &str, addr: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt.as_bytes());
    hasher.update([0u8]);
    hasher.update(addr.as_bytes());
    let digest = hasher.finalize();
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementStatus {
    Pending,
    Accepted,
    Declined,
}

impl ElementStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementStatus::Pending => "pending",
            ElementStatus::Accepted => "accepted",
            ElementStatus::Declined => "declined",
        }
    }
}

impl fmt::Display for ElementStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub element_id: String,
    pub site_id: String,
    pub section_id: String,
    pub type_id: String,
    pub payload: ElementPayload,
    pub status: ElementStatus,
    pub submitter: SubmitterIdentity,
    pub submitter_email: Option<String>,
    pub created_at: DateTime<Utc>,
    pub decided_at: Option<DateTime<Utc>>,
    pub version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Decline,
}

impl Decision {
    pub fn target_status(self) -> ElementStatus {
        match self {
            Decision::Accept => ElementStatus::Accepted,
            Decision::Decline => ElementStatus::Declined,
        }
    }
}

impl FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accept" => Ok(Decision::Accept),
            "decline" => Ok(Decision::Decline),
            other => Err(format!("unknown decision `{other}` (expected accept or decline)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Submitted,
    Accepted,
    Declined,
    Edited,
    Deleted,
    LinkIssued,
}

impl AuditAction {
    /// Actions that bump the element's version.
    pub fn changes_element(self) -> bool {
        matches!(self, AuditAction::Accepted | AuditAction::Declined | AuditAction::Edited)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    /// Zero-padded sequence number; sorts in commit order.
    pub event_id: String,
    pub element_id: String,
    pub site_id: String,
    pub action: AuditAction,
    pub actor: SubmitterIdentity,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    #[default]
    NewestFirst,
    OldestFirst,
}

impl FromStr for SortOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "newest_first" => Ok(SortOrder::NewestFirst),
            "oldest_first" => Ok(SortOrder::OldestFirst),
            other => Err(format!("unknown sort `{other}` (expected newest_first or oldest_first)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageRequest {
    /// Zero-based page index.
    pub page: u32,
    pub page_size: u32,
    pub sort: SortOrder,
}

impl PageRequest {
    pub const DEFAULT_PAGE_SIZE: u32 = 20;
    pub const MAX_PAGE_SIZE: u32 = 100;

    pub fn new(page: u32, page_size: u32, sort: SortOrder) -> Self {
        PageRequest { page, page_size: page_size.clamp(1, Self::MAX_PAGE_SIZE), sort }
    }
}

impl Default for PageRequest {
    fn default() -> Self {
        PageRequest::new(0, Self::DEFAULT_PAGE_SIZE, SortOrder::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub page: u32,
    pub page_size: u32,
    pub total: u64,
    pub total_pages: u64,
}

impl<T> Page<T> {
    pub(crate) fn slice(all: Vec<T>, request: PageRequest) -> Page<T> {
        let total = all.len() as u64;
        let size = u64::from(request.page_size);
        let skip = (u64::from(request.page) * size).min(total) as usize;
        let items = all.into_iter().skip(skip).take(size as usize).collect();
        Page { items, page: request.page, page_size: request.page_size, total, total_pages: total.div_ceil(size) }
    }

    pub fn map<U>(self, f: impl FnMut(T) -> U) -> Page<U> {
        Page {
            items: self.items.into_iter().map(f).collect(),
            page: self.page,
            page_size: self.page_size,
            total: self.total,
            total_pages: self.total_pages,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeTally {
    pub submitted: u64,
    pub accepted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub total_submitted: u64,
    pub accepted: u64,
    pub declined: u64,
    pub pending: u64,
    /// `accepted / max(total_submitted, 1)`.
    pub acceptance_rate: f64,
    pub per_type: BTreeMap<String, TypeTally>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteTally {
    pub site_id: String,
    pub submitted: u64,
    pub accepted: u64,
}
