use axum::http::HeaderMap;
use open_intake_core::engine::SubmitterIdentity;
use subtle::ConstantTimeEq;

use crate::error::ApiError;
use crate::ApiConfig;

pub const OWNER_KEY_HEADER: &str = "x-owner-key";

fn presented_key(headers: &HeaderMap) -> Option<&str> {
    headers.get(OWNER_KEY_HEADER).and_then(|v| v.to_str().ok()).filter(|k| !k.is_empty())
}

fn key_matches(expected: &str, presented: &str) -> bool {
    bool::from(expected.as_bytes().ct_eq(presented.as_bytes()))
}

/// Site whose owner key was presented. Every configured key is compared so
/// timing does not reveal which site a near miss belongs to.
pub fn owner_from_headers(config: &ApiConfig, headers: &HeaderMap) -> Result<SubmitterIdentity, ApiError> {
    let presented = presented_key(headers).ok_or_else(ApiError::unauthorized)?;
    let mut found = None;
    for (site, key) in &config.owner_keys {
        if key_matches(key, presented) && found.is_none() {
            found = Some(site.clone());
        }
    }
    found.map(SubmitterIdentity::owner).ok_or_else(ApiError::unauthorized)
}

/// Owner identity for `site`; any other key, or none, is refused.
pub fn owner_of(config: &ApiConfig, headers: &HeaderMap, site: &str) -> Result<SubmitterIdentity, ApiError> {
    let presented = presented_key(headers).ok_or_else(ApiError::unauthorized)?;
    match config.owner_keys.get(site) {
        Some(key) if key_matches(key, presented) => Ok(SubmitterIdentity::owner(site)),
        _ => Err(ApiError::unauthorized()),
    }
}

/// On public routes a key is optional; a wrong one is still an error.
pub fn optional_owner(
    config: &ApiConfig,
    headers: &HeaderMap,
    site: &str,
) -> Result<Option<SubmitterIdentity>, ApiError> {
    if presented_key(headers).is_none() {
        return Ok(None);
    }
    owner_of(config, headers, site).map(Some)
}

/// Operator routes accept only the configured operator key.
pub fn operator(config: &ApiConfig, headers: &HeaderMap) -> Result<(), ApiError> {
    let presented = presented_key(headers).ok_or_else(ApiError::unauthorized)?;
    match &config.operator_key {
        Some(key) if !key.is_empty() && key_matches(key, presented) => Ok(()),
        _ => Err(ApiError::unauthorized()),
    }
}
