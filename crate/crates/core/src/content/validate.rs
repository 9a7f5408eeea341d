use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::schema::{FieldSpec, SemanticType, ValueKind};

pub const MAX_URL_LENGTH: usize = 2048;
const MAX_IMAGE_LIST_ENTRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldErrorCode {
    MissingField,
    InvalidValue,
    TooLong,
    UnknownField,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub code: FieldErrorCode,
    pub message: String,
}

/// Every violation found in a payload; empty means the payload is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<FieldError>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn push(&mut self, field: &str, code: FieldErrorCode, message: impl Into<String>) {
        self.errors.push(FieldError { field: field.to_owned(), code, message: message.into() });
    }
}

/// Validates `values` against `ty`.
///
/// Errors are reported in schema field order followed by unknown fields in
/// name order, so the report does not depend on how the caller built the map.
/// `null` counts as absent; blank strings and empty lists count as absent for
/// required fields and are accepted for optional ones.
pub fn validate_values(ty: &SemanticType, values: &BTreeMap<String, Value>) -> ValidationReport {
    let mut report = ValidationReport::default();

    for spec in &ty.fields {
        match values.get(&spec.name) {
            None | Some(Value::Null) => {
                if spec.required {
                    report.push(&spec.name, FieldErrorCode::MissingField, "required field is missing");
                }
            }
            Some(value) if is_blank(value) => {
                if spec.required {
                    report.push(&spec.name, FieldErrorCode::MissingField, "required field is empty");
                }
            }
            Some(value) => check_value(spec, value, &mut report),
        }
    }

    for name in values.keys() {
        if ty.field(name).is_none() {
            report.push(name, FieldErrorCode::UnknownField, format!("`{}` has no such field", ty.type_id));
        }
    }

    report
}

fn is_blank(value: &Value) -> bool {
    match value {
        Value::String(s) => s.trim().is_empty(),
        Value::Array(items) => items.is_empty(),
        _ => false,
    }
}

fn check_value(spec: &FieldSpec, value: &Value, report: &mut ValidationReport) {
    let max = spec.max_length as usize;
    match spec.value_kind {
        ValueKind::ShortText | ValueKind::LongText => match value.as_str() {
            Some(s) => check_length(spec, s, max, report),
            None => report.push(&spec.name, FieldErrorCode::InvalidValue, "expected a string"),
        },
        ValueKind::Url => match value.as_str() {
            Some(s) if s.chars().count() > max.min(MAX_URL_LENGTH) => report.push(
                &spec.name,
                FieldErrorCode::TooLong,
                format!("longer than {} characters", max.min(MAX_URL_LENGTH)),
            ),
            Some(s) if is_valid_url(s) => {}
            _ => report.push(&spec.name, FieldErrorCode::InvalidValue, "expected an http(s) URL with a host"),
        },
        ValueKind::Date => match value.as_str() {
            Some(s) if is_iso_date(s) => {}
            _ => report.push(&spec.name, FieldErrorCode::InvalidValue, "expected a YYYY-MM-DD date"),
        },
        ValueKind::IntegerRating => match value.as_i64() {
            Some(1..=5) => {}
            _ => report.push(&spec.name, FieldErrorCode::InvalidValue, "expected an integer from 1 to 5"),
        },
        ValueKind::ImageRef => match value.as_str() {
            Some(s) if is_image_ref(s) => check_length(spec, s, max, report),
            _ => report.push(&spec.name, FieldErrorCode::InvalidValue, "expected an image reference"),
        },
        ValueKind::ImageList => {
            let Some(items) = value.as_array() else {
                report.push(&spec.name, FieldErrorCode::InvalidValue, "expected a list of image references");
                return;
            };
            if items.len() > MAX_IMAGE_LIST_ENTRIES {
                report.push(&spec.name, FieldErrorCode::TooLong, format!("more than {MAX_IMAGE_LIST_ENTRIES} images"));
                return;
            }
            let refs: Option<Vec<&str>> = items.iter().map(|v| v.as_str().filter(|s| is_image_ref(s))).collect();
            match refs {
                None => report.push(&spec.name, FieldErrorCode::InvalidValue, "expected a list of image references"),
                Some(refs) if refs.iter().any(|r| r.chars().count() > max) => report.push(
                    &spec.name,
                    FieldErrorCode::TooLong,
                    format!("an entry is longer than {max} characters"),
                ),
                Some(_) => {}
            }
        }
    }
}

fn check_length(spec: &FieldSpec, s: &str, max: usize, report: &mut ValidationReport) {
    if s.chars().count() > max {
        report.push(&spec.name, FieldErrorCode::TooLong, format!("longer than {max} characters"));
    }
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
        && NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
}

fn is_image_ref(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c.is_control())
}

/// URL grammar for link-like fields: an explicit `http://` or `https://`
/// scheme, a non-empty host, no whitespace, at most 2048 characters.
pub fn is_valid_url(s: &str) -> bool {
    if s.len() > MAX_URL_LENGTH || s.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return false;
    }
    let lower = s.get(..8).unwrap_or(s).to_ascii_lowercase();
    let rest = if lower.starts_with("https://") {
        &s[8..]
    } else if lower.starts_with("http://") {
        &s[7..]
    } else {
        return false;
    };
    // the parser would treat `https:///x` as host `x`
    if rest.starts_with(['/', '\\', '?', '#']) {
        return false;
    }
    match url::Url::parse(s) {
        Ok(parsed) => matches!(parsed.scheme(), "http" | "https") && parsed.host_str().is_some_and(|h| !h.is_empty()),
        Err(_) => false,
    }
}

/// Deliberately small address check: one `@`, non-empty local part, a dotted
/// domain of letters, digits, hyphens, no whitespace, at most 254 bytes.
pub fn is_valid_email(s: &str) -> bool {
    if s.len() > 254 || s.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return false;
    }
    let Some((local, domain)) = s.split_once('@') else {
        return false;
    };
    if local.is_empty() || local.len() > 64 || domain.contains('@') {
        return false;
    }
    let labels: Vec<&str> = domain.split('.').collect();
    labels.len() >= 2
        && labels.iter().all(|l| {
            !l.is_empty()
                && !l.starts_with('-')
                && !l.ends_with('-')
                && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
        })
}
