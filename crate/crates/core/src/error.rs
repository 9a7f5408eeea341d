use crate::content::ValidationReport;
use crate::store::StoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("type `{0}` is already registered")]
    DuplicateTypeId(String),
    #[error("type schema declares no fields")]
    EmptySchema,
    #[error("invalid type schema: {0}")]
    InvalidSchema(String),
    #[error("unknown site `{0}`")]
    UnknownSite(String),
    #[error("site `{0}` already exists")]
    SiteExists(String),
    #[error("invalid site: {0}")]
    InvalidSite(String),
    #[error("unknown section `{0}`")]
    UnknownSection(String),
    #[error("unknown parent section `{0}`")]
    UnknownParent(String),
    #[error("section `{0}` already exists")]
    SectionExists(String),
    #[error("invalid section: {0}")]
    InvalidSection(String),
    #[error("parent link would form a cycle")]
    CycleWouldForm,
    #[error("open input needs at least one allowed type")]
    NoAllowedTypes,
    #[error("section `{0}` still holds child sections or elements")]
    SectionNotEmpty(String),
    #[error("type `{0}` is not accepted by this section")]
    TypeNotAllowed(String),
    #[error("payload failed validation ({} field error(s))", .0.errors.len())]
    ValidationFailed(ValidationReport),
    #[error("submitter does not meet the section's submission policy")]
    PolicyDenied,
    #[error("open input is disabled for this section")]
    InputDisabled,
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("actor is not the owner of this site")]
    NotAuthorized,
    #[error("concurrent modification; retries exhausted")]
    Conflict,
    #[error("unknown editor link")]
    UnknownToken,
    #[error("editor link has been revoked")]
    Revoked,
    #[error("element no longer exists")]
    ElementGone,
    #[error("the element type cannot be changed")]
    TypeChangeForbidden,
    #[error("invalid email address")]
    InvalidEmail,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl Error {
    /// Stable, machine-readable error code used on the wire and by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownType(_) => "unknown_type",
            Error::DuplicateTypeId(_) => "duplicate_type_id",
            Error::EmptySchema => "empty_schema",
            Error::InvalidSchema(_) => "invalid_schema",
            Error::UnknownSite(_) => "unknown_site",
            Error::SiteExists(_) => "site_exists",
            Error::InvalidSite(_) => "invalid_site",
            Error::UnknownSection(_) => "unknown_section",
            Error::UnknownParent(_) => "unknown_parent",
            Error::SectionExists(_) => "section_exists",
            Error::InvalidSection(_) => "invalid_section",
            Error::CycleWouldForm => "cycle_would_form",
            Error::NoAllowedTypes => "no_allowed_types",
            Error::SectionNotEmpty(_) => "section_not_empty",
            Error::TypeNotAllowed(_) => "type_not_allowed",
            Error::ValidationFailed(_) => "validation_failed",
            Error::PolicyDenied => "policy_denied",
            Error::InputDisabled => "input_disabled",
            Error::UnknownElement(_) => "unknown_element",
            Error::NotAuthorized => "not_authorized",
            Error::Conflict => "conflict",
            Error::UnknownToken => "unknown_token",
            Error::Revoked => "revoked",
            Error::ElementGone => "element_gone",
            Error::TypeChangeForbidden => "type_change_forbidden",
            Error::InvalidEmail => "invalid_email",
            Error::InvalidRequest(_) => "invalid_request",
            Error::Store(e) => e.code(),
        }
    }
}
