use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use open_intake_core::content::FieldError;
use open_intake_core::store::StoreError;
use open_intake_core::Error;
use serde::{Deserialize, Serialize};

/// Wire shape of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<FieldError>>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
    pub retry_after: Option<Duration>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody { code: code.to_owned(), message: message.into(), fields: None },
            retry_after: None,
        }
    }

    pub fn unauthorized() -> Self {
        ApiError::new(StatusCode::UNAUTHORIZED, "not_authorized", "missing or invalid X-Owner-Key")
    }

    pub fn not_found(what: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no such {what}"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn rate_limited(retry_after: Duration) -> Self {
        let mut error = ApiError::new(StatusCode::TOO_MANY_REQUESTS, "rate_limited", "too many submissions; slow down");
        error.retry_after = Some(retry_after);
        error
    }
}

pub fn status_for(error: &Error) -> StatusCode {
    match error {
        Error::UnknownType(_)
        | Error::UnknownSite(_)
        | Error::UnknownSection(_)
        | Error::UnknownElement(_)
        | Error::UnknownToken
        | Error::ElementGone => StatusCode::NOT_FOUND,
        Error::ValidationFailed(_)
        | Error::InvalidEmail
        | Error::TypeChangeForbidden
        | Error::EmptySchema
        | Error::InvalidSchema(_)
        | Error::InvalidSite(_)
        | Error::InvalidSection(_)
        | Error::UnknownParent(_)
        | Error::NoAllowedTypes
        | Error::CycleWouldForm
        | Error::InvalidRequest(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::PolicyDenied | Error::TypeNotAllowed(_) | Error::InputDisabled => StatusCode::FORBIDDEN,
        Error::NotAuthorized => StatusCode::UNAUTHORIZED,
        Error::Conflict
        | Error::DuplicateTypeId(_)
        | Error::SiteExists(_)
        | Error::SectionExists(_)
        | Error::SectionNotEmpty(_) => StatusCode::CONFLICT,
        Error::Revoked => StatusCode::GONE,
        Error::Store(StoreError::VersionConflict { .. }) => StatusCode::CONFLICT,
        Error::Store(StoreError::Locked(_) | StoreError::Poisoned) => StatusCode::SERVICE_UNAVAILABLE,
        Error::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(error: Error) -> Self {
        let status = status_for(&error);
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %error, "request failed");
        }
        let fields = match &error {
            Error::ValidationFailed(report) => Some(report.errors.clone()),
            _ => None,
        };
        ApiError {
            status,
            body: ErrorBody { code: error.code().to_owned(), message: error.to_string(), fields },
            retry_after: None,
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        ApiError::new(rejection.status(), "invalid_body", rejection.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(rejection: QueryRejection) -> Self {
        ApiError::bad_request(rejection.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut response = (self.status, Json(self.body)).into_response();
        if let Some(wait) = self.retry_after {
            let secs = wait.as_secs() + u64::from(wait.subsec_nanos() > 0);
            if let Ok(value) = HeaderValue::from_str(&secs.max(1).to_string()) {
                response.headers_mut().insert(header::RETRY_AFTER, value);
            }
        }
        response
    }
}
