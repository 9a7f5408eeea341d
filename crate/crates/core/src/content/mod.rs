//! Content model: semantic types, their field schemas, payload validation and
//! the section tree that carries per-section allow-lists and policies.

mod builtin;
mod schema;
mod section;
mod validate;

pub use builtin::{builtin_types, BUILTIN_TYPE_IDS};
pub(crate) use schema::is_identifier as schema_identifier;
pub use schema::{ElementPayload, FieldSpec, SemanticType, TypeKind, TypeRegistry, ValueKind};
pub use section::{build_tree, would_form_cycle, PolicyTier, Section, SectionNode, SubmissionPolicy};
pub use validate::{
    is_valid_email, is_valid_url, validate_values, FieldError, FieldErrorCode, ValidationReport, MAX_URL_LENGTH,
};
