use std::time::Instant;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::get;
use axum::{Json, Router};
use open_intake_core::content::{Section, SectionNode, SemanticType};
use open_intake_core::engine::{anonymize_client, PageRequest, SortOrder, Submission, SubmitterIdentity};
use open_intake_core::links::{Capability, LinkAction};
use open_intake_core::{ElementPayload, Error};
use serde::Deserialize;
use serde_json::Value;
use std::collections::BTreeMap;

use crate::auth::optional_owner;
use crate::error::ApiError;
use crate::views::{Deleted, EditorView, PageView, PublicElement, SubmitResponse};
use crate::{AppState, PeerAddr};

pub(crate) fn routes() -> Router<AppState> {
    Router::new()
        .route("/types", get(list_types))
        .route("/types/{type_id}", get(get_type))
        .route("/sites/{site}/sections", get(section_tree))
        .route("/sites/{site}/sections/{section}", get(get_section))
        .route("/sites/{site}/sections/{section}/elements", get(list_elements).post(submit))
        .route("/edit/{token}", get(redeem).put(edit).delete(delete))
}

async fn list_types(State(state): State<AppState>) -> Result<Json<Vec<SemanticType>>, ApiError> {
    Ok(Json(state.run(|e| Ok(e.types())).await?))
}

async fn get_type(State(state): State<AppState>, Path(type_id): Path<String>) -> Result<Json<SemanticType>, ApiError> {
    Ok(Json(state.run(move |e| e.type_schema(&type_id)).await?))
}

async fn section_tree(
    State(state): State<AppState>,
    Path(site): Path<String>,
) -> Result<Json<Vec<SectionNode>>, ApiError> {
    Ok(Json(state.run(move |e| e.section_tree(&site)).await?))
}

/// The section, provided it belongs to `site`.
pub(crate) async fn site_section(state: &AppState, site: String, section: String) -> Result<Section, ApiError> {
    state
        .run(move |e| {
            let s = e.section(&section)?;
            if s.site_id != site {
                return Err(Error::UnknownSection(section));
            }
            Ok(s)
        })
        .await
}

async fn get_section(
    State(state): State<AppState>,
    Path((site, section)): Path<(String, String)>,
) -> Result<Json<Section>, ApiError> {
    Ok(Json(site_section(&state, site, section).await?))
}

#[derive(Debug, Deserialize)]
pub(crate) struct ListParams {
    page: Option<u32>,
    page_size: Option<u32>,
    sort: Option<String>,
}

async fn list_elements(
    State(state): State<AppState>,
    Path((site, section)): Path<(String, String)>,
    query: Result<Query<ListParams>, QueryRejection>,
) -> Result<Json<PageView<PublicElement>>, ApiError> {
    let Query(params) = query?;
    let sort = match params.sort.as_deref() {
        None => SortOrder::default(),
        Some(s) => s.parse().map_err(ApiError::bad_request)?,
    };
    let request =
        PageRequest::new(params.page.unwrap_or(0), params.page_size.unwrap_or(PageRequest::DEFAULT_PAGE_SIZE), sort);
    let section = site_section(&state, site, section).await?.section_id;
    let page = state.run(move |e| e.list_public(&section, request)).await?;
    Ok(Json(PageView::from_page(page)))
}

#[derive(Debug, Deserialize)]
pub(crate) struct SubmitBody {
    type_id: String,
    #[serde(default)]
    values: BTreeMap<String, Value>,
    #[serde(default)]
    email: Option<String>,
}

fn client_addr(state: &AppState, headers: &HeaderMap, peer: &PeerAddr) -> String {
    if state.config.trust_forwarded_for {
        let forwarded = headers
            .get("x-forwarded-for")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.split(',').next())
            .map(str::trim)
            .filter(|v| !v.is_empty());
        if let Some(addr) = forwarded {
            return addr.to_owned();
        }
    }
    peer.0.map(|a| a.ip().to_string()).unwrap_or_else(|| "unknown".to_owned())
}

async fn submit(
    State(state): State<AppState>,
    Path((site, section)): Path<(String, String)>,
    headers: HeaderMap,
    peer: PeerAddr,
    body: Result<Json<SubmitBody>, JsonRejection>,
) -> Result<(StatusCode, Json<SubmitResponse>), ApiError> {
    let owner = optional_owner(&state.config, &headers, &site)?;
    let Json(body) = body?;
    let section = site_section(&state, site, section).await?.section_id;
    let identity = match owner {
        Some(owner) => owner,
        None => {
            let client = anonymize_client(&state.config.client_salt, &client_addr(&state, &headers, &peer));
            state.limiter.check(&client, Instant::now()).map_err(ApiError::rate_limited)?;
            SubmitterIdentity::anonymous(Some(client))
        }
    };
    let submission = Submission {
        section_id: section,
        payload: ElementPayload { type_id: body.type_id, values: body.values },
        identity,
        email: body.email,
    };
    let outcome = state.run(move |e| e.submit(submission)).await?;
    Ok((
        StatusCode::CREATED,
        Json(SubmitResponse {
            element_id: outcome.element.element_id,
            status: outcome.element.status,
            editor_link_url: outcome.link.map(|l| l.url),
        }),
    ))
}

async fn redeem(State(state): State<AppState>, Path(token): Path<String>) -> Result<Json<EditorView>, ApiError> {
    Ok(Json(state.run(move |e| e.redeem(&token)).await?.into()))
}

#[derive(Debug, Deserialize)]
pub(crate) struct EditBody {
    #[serde(default)]
    type_id: Option<String>,
    values: BTreeMap<String, Value>,
}

async fn edit(
    State(state): State<AppState>,
    Path(token): Path<String>,
    body: Result<Json<EditBody>, JsonRejection>,
) -> Result<Json<EditorView>, ApiError> {
    let Json(body) = body?;
    let view = state
        .run(move |e| {
            let type_id = match body.type_id {
                Some(t) => t,
                None => e.redeem(&token)?.element.type_id,
            };
            let element = e.edit_via_link(&token, ElementPayload { type_id, values: body.values })?;
            Ok(Capability { element, actions: vec![LinkAction::Edit, LinkAction::Delete] })
        })
        .await?;
    Ok(Json(view.into()))
}

async fn delete(State(state): State<AppState>, Path(token): Path<String>) -> Result<Json<Deleted>, ApiError> {
    let id = state
        .run(move |e| {
            let id = e.redeem(&token)?.element.element_id;
            e.delete_via_link(&token)?;
            Ok(id)
        })
        .await?;
    Ok(Json(Deleted { deleted: id }))
}
