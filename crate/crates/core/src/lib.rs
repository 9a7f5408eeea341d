//! Core of the open-intake service.
//!
//! Website owners open chosen sections of a site to public, typed content
//! submission. Untrusted submissions land in a confirmation queue that the
//! owner moderates with single accept/decline decisions, and submitters who
//! leave an email receive a capability "editor link" for later edits.
//!
//! The crate is organised by concern:
//!
//! - [`content`]: semantic types, field schemas, payload validation, sections.
//! - [`engine`]: the submission state machine, moderation, listings, statistics.
//! - [`links`]: editor-link issuance and redemption (implemented on [`Engine`]).
//! - [`store`]: journaled, versioned record store with compare-and-set.
//! - [`notify`]: deduplicated outbound notifications with retry.
//! - [`fixture`]: line-delimited operation scripts and their replay.

pub mod clock;
pub mod content;
pub mod engine;
pub mod error;
pub mod fixture;
pub mod links;
pub mod notify;
pub mod store;

pub use content::{ElementPayload, FieldSpec, SemanticType, TypeKind, ValidationReport, ValueKind};
pub use engine::{Engine, EngineBuilder};
pub use error::{Error, Result};
