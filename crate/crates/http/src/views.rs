//! Response bodies. Public views never carry submitter details.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use open_intake_core::engine::{Element, ElementStatus, Page, QueueStats, SiteTally};
use open_intake_core::links::{Capability, EditorLink, LinkAction};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicElement {
    pub element_id: String,
    pub section_id: String,
    pub type_id: String,
    pub values: BTreeMap<String, Value>,
    pub status: ElementStatus,
    pub created_at: DateTime<Utc>,
}

impl From<Element> for PublicElement {
    fn from(e: Element) -> Self {
        PublicElement {
            element_id: e.element_id,
            section_id: e.section_id,
            type_id: e.type_id,
            values: e.payload.values,
            status: e.status,
            created_at: e.created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageView<T> {
    pub items: Vec<T>,
    pub page: u32,
    pub page_size: u32,
    pub total: u64,
    pub total_pages: u64,
}

impl<T> PageView<T> {
    pub fn from_page<U: Into<T>>(page: Page<U>) -> Self {
        let page = page.map(Into::into);
        PageView {
            items: page.items,
            page: page.page,
            page_size: page.page_size,
            total: page.total,
            total_pages: page.total_pages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub element_id: String,
    pub status: ElementStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub editor_link_url: Option<String>,
}

/// What a link holder sees: their element and what they may do with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditorView {
    pub element: EditableElement,
    pub actions: Vec<LinkAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditableElement {
    pub element_id: String,
    pub section_id: String,
    pub type_id: String,
    pub values: BTreeMap<String, Value>,
    pub status: ElementStatus,
    pub created_at: DateTime<Utc>,
    pub decided_at: Option<DateTime<Utc>>,
    pub version: u64,
}

impl From<Element> for EditableElement {
    fn from(e: Element) -> Self {
        EditableElement {
            element_id: e.element_id,
            section_id: e.section_id,
            type_id: e.type_id,
            values: e.payload.values,
            status: e.status,
            created_at: e.created_at,
            decided_at: e.decided_at,
            version: e.version,
        }
    }
}

impl From<Capability> for EditorView {
    fn from(c: Capability) -> Self {
        EditorView { element: c.element.into(), actions: c.actions }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkIssued {
    pub element_id: String,
    pub email: String,
    pub editor_link_url: String,
    pub issued_at: DateTime<Utc>,
}

impl From<EditorLink> for LinkIssued {
    fn from(l: EditorLink) -> Self {
        LinkIssued { element_id: l.element_id, email: l.email, editor_link_url: l.url, issued_at: l.issued_at }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revoked {
    pub revoked: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deleted {
    pub deleted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    #[serde(flatten)]
    pub stats: QueueStats,
    pub top_sites: Vec<SiteTally>,
}
