use std::collections::{BTreeMap, BTreeSet};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use open_intake_core::content::{PolicyTier, Section, SemanticType};
use open_intake_core::engine::{
    AuditEvent, Decision, Element, NewSection, NewSite, QueueStats, SectionUpdate, Site, SubmitterIdentity,
};
use open_intake_core::links::RevokeTarget;
use serde::Deserialize;
use serde_json::Value;

use crate::auth::{operator, owner_from_headers, owner_of};
use crate::error::ApiError;
use crate::views::{Deleted, GlobalStats, LinkIssued, Revoked};
use crate::AppState;

pub(crate) fn routes() -> Router<AppState> {
    Router::new()
        .route("/admin/types", post(register_type))
        .route("/admin/stats", get(global_stats))
        .route("/admin/sites", get(list_sites).post(create_site))
        .route("/admin/sites/{site}", get(get_site).patch(update_site))
        .route("/admin/sites/{site}/queue", get(queue))
        .route("/admin/sites/{site}/stats", get(stats))
        .route("/admin/sites/{site}/trusted", post(set_trusted))
        .route("/admin/sites/{site}/sections", post(create_section))
        .route("/admin/sites/{site}/sections/{section}", axum::routing::patch(update_section).delete(delete_section))
        .route("/admin/elements/{id}", get(get_element).put(edit_element).delete(delete_element))
        .route("/admin/elements/{id}/audit", get(audit))
        .route("/admin/elements/{id}/decision", post(decide))
        .route("/admin/elements/{id}/editor-link", post(issue_link))
        .route("/admin/elements/{id}/editor-link/revoke", post(revoke_element_links))
        .route("/admin/editor-links/{token}", delete(revoke_token))
}

async fn register_type(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<SemanticType>, JsonRejection>,
) -> Result<(StatusCode, Json<SemanticType>), ApiError> {
    owner_from_headers(&state.config, &headers)?;
    let Json(spec) = body?;
    let spec = state
        .run(move |e| {
            let id = e.register_type(spec)?;
            e.type_schema(&id)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(spec)))
}

async fn list_sites(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<Vec<Site>>, ApiError> {
    operator(&state.config, &headers)?;
    Ok(Json(state.run(|e| e.sites()).await?))
}

async fn create_site(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<NewSite>, JsonRejection>,
) -> Result<(StatusCode, Json<Site>), ApiError> {
    operator(&state.config, &headers)?;
    let Json(new) = body?;
    Ok((StatusCode::CREATED, Json(state.run(move |e| e.create_site(new)).await?)))
}

async fn get_site(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(site): Path<String>,
) -> Result<Json<Site>, ApiError> {
    owner_of(&state.config, &headers, &site)?;
    Ok(Json(state.run(move |e| e.site(&site)).await?))
}

#[derive(Debug, Deserialize)]
struct SiteSettings {
    remoderate_on_edit: Option<bool>,
}

async fn update_site(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(site): Path<String>,
    body: Result<Json<SiteSettings>, JsonRejection>,
) -> Result<Json<Site>, ApiError> {
    let owner = owner_of(&state.config, &headers, &site)?;
    let Json(settings) = body?;
    let site = state
        .run(move |e| match settings.remoderate_on_edit {
            Some(flag) => e.set_remoderate_on_edit(&site, flag, &owner),
            None => e.site(&site),
        })
        .await?;
    Ok(Json(site))
}

async fn queue(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(site): Path<String>,
) -> Result<Json<Vec<Element>>, ApiError> {
    let owner = owner_of(&state.config, &headers, &site)?;
    Ok(Json(state.run(move |e| e.pending_queue(&site, &owner)).await?))
}

async fn stats(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(site): Path<String>,
) -> Result<Json<QueueStats>, ApiError> {
    owner_of(&state.config, &headers, &site)?;
    Ok(Json(state.run(move |e| e.stats(Some(&site))).await?))
}

#[derive(Debug, Deserialize)]
struct TopParams {
    top: Option<usize>,
}

async fn global_stats(
    State(state): State<AppState>,
    headers: HeaderMap,
    query: Result<axum::extract::Query<TopParams>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<GlobalStats>, ApiError> {
    operator(&state.config, &headers)?;
    let axum::extract::Query(params) = query?;
    let top = params.top.unwrap_or(0);
    let view = state.run(move |e| Ok(GlobalStats { stats: e.stats(None)?, top_sites: e.top_sites(top)? })).await?;
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
struct TrustBody {
    subject: String,
    trusted: bool,
}

async fn set_trusted(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(site): Path<String>,
    body: Result<Json<TrustBody>, JsonRejection>,
) -> Result<Json<Site>, ApiError> {
    let owner = owner_of(&state.config, &headers, &site)?;
    let Json(body) = body?;
    Ok(Json(state.run(move |e| e.set_trusted(&site, &body.subject, body.trusted, &owner)).await?))
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
struct SectionBody {
    #[serde(default)]
    section_id: Option<String>,
    #[serde(default)]
    parent_id: Option<String>,
    name: String,
    #[serde(default)]
    description: String,
    allowed_types: BTreeSet<String>,
    policy: PolicyTier,
    #[serde(default = "yes")]
    open_input_enabled: bool,
}

async fn create_section(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(site): Path<String>,
    body: Result<Json<SectionBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Section>), ApiError> {
    let owner = owner_of(&state.config, &headers, &site)?;
    let Json(body) = body?;
    let new = NewSection {
        site_id: site,
        section_id: body.section_id,
        parent_id: body.parent_id,
        name: body.name,
        description: body.description,
        allowed_types: body.allowed_types,
        policy: body.policy,
        open_input_enabled: body.open_input_enabled,
    };
    let section = state.run(move |e| e.create_section(new, &owner)).await?;
    Ok((StatusCode::CREATED, Json(section)))
}

#[derive(Debug, Deserialize)]
struct SectionPatch {
    name: Option<String>,
    description: Option<String>,
    /// Present and null moves the section to the top level.
    #[serde(default, deserialize_with = "present")]
    parent_id: Option<Option<String>>,
    allowed_types: Option<BTreeSet<String>>,
    policy: Option<PolicyTier>,
    open_input_enabled: Option<bool>,
}

fn present<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Option<String>>, D::Error> {
    Option::<String>::deserialize(d).map(Some)
}

async fn owned_section(
    state: &AppState,
    headers: &HeaderMap,
    site: &str,
    section: String,
) -> Result<SubmitterIdentity, ApiError> {
    let owner = owner_of(&state.config, headers, site)?;
    crate::public::site_section(state, site.to_owned(), section).await?;
    Ok(owner)
}

async fn update_section(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path((site, section)): Path<(String, String)>,
    body: Result<Json<SectionPatch>, JsonRejection>,
) -> Result<Json<Section>, ApiError> {
    let owner = owned_section(&state, &headers, &site, section.clone()).await?;
    let Json(patch) = body?;
    let update = SectionUpdate {
        name: patch.name,
        description: patch.description,
        parent_id: patch.parent_id,
        allowed_types: patch.allowed_types,
        policy: patch.policy,
        open_input_enabled: patch.open_input_enabled,
    };
    Ok(Json(state.run(move |e| e.update_section(&section, update, &owner)).await?))
}

async fn delete_section(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path((site, section)): Path<(String, String)>,
) -> Result<Json<Deleted>, ApiError> {
    let owner = owned_section(&state, &headers, &site, section.clone()).await?;
    let id = section.clone();
    state.run(move |e| e.delete_section(&section, &owner)).await?;
    Ok(Json(Deleted { deleted: id }))
}

/// Loads an element the presented key's site owns.
async fn owned_element(
    state: &AppState,
    headers: &HeaderMap,
    id: String,
) -> Result<(SubmitterIdentity, Element), ApiError> {
    let owner = owner_from_headers(&state.config, headers)?;
    let element = state.run(move |e| e.element(&id)).await?;
    if !owner.is_owner_of(&element.site_id) {
        return Err(ApiError::unauthorized());
    }
    Ok((owner, element))
}

async fn get_element(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Element>, ApiError> {
    Ok(Json(owned_element(&state, &headers, id).await?.1))
}

#[derive(Debug, Deserialize)]
struct ValuesBody {
    values: BTreeMap<String, Value>,
}

async fn edit_element(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Result<Json<ValuesBody>, JsonRejection>,
) -> Result<Json<Element>, ApiError> {
    let owner = owner_from_headers(&state.config, &headers)?;
    let Json(body) = body?;
    Ok(Json(state.run(move |e| e.edit_element(&id, body.values, &owner)).await?))
}

async fn delete_element(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Deleted>, ApiError> {
    let owner = owner_from_headers(&state.config, &headers)?;
    let deleted = id.clone();
    state.run(move |e| e.delete_element(&id, &owner)).await?;
    Ok(Json(Deleted { deleted }))
}

async fn audit(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Vec<AuditEvent>>, ApiError> {
    owned_element(&state, &headers, id.clone()).await?;
    Ok(Json(state.run(move |e| e.audit_trail(&id)).await?))
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    decision: Decision,
}

async fn decide(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<Json<Element>, ApiError> {
    let owner = owner_from_headers(&state.config, &headers)?;
    let Json(body) = body?;
    Ok(Json(state.run(move |e| e.decide(&id, body.decision, &owner)).await?))
}

#[derive(Debug, Deserialize)]
struct EmailBody {
    email: String,
}

async fn issue_link(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Result<Json<EmailBody>, JsonRejection>,
) -> Result<(StatusCode, Json<LinkIssued>), ApiError> {
    let owner = owner_from_headers(&state.config, &headers)?;
    let Json(body) = body?;
    let link = state.run(move |e| e.issue_link(&id, &body.email, &owner)).await?;
    Ok((StatusCode::CREATED, Json(link.into())))
}

async fn revoke_element_links(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Revoked>, ApiError> {
    let owner = owner_from_headers(&state.config, &headers)?;
    let revoked = state.run(move |e| e.revoke_link(RevokeTarget::Element(id), &owner)).await?;
    Ok(Json(Revoked { revoked }))
}

async fn revoke_token(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(token): Path<String>,
) -> Result<Json<Revoked>, ApiError> {
    let owner = owner_from_headers(&state.config, &headers)?;
    let revoked = state.run(move |e| e.revoke_link(RevokeTarget::Token(token), &owner)).await?;
    Ok(Json(Revoked { revoked }))
}
