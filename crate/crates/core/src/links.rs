//! Capability links that let a submitter edit or delete an element without
//! an account. The token is the only credential. Only its SHA-256 digest is
//! stored, so a leaked store does not leak working links.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use uuid::Uuid;

use crate::content::{is_valid_email, ElementPayload};
use crate::engine::MAX_CAS_ATTEMPTS;
use crate::engine::{authorize_owner, encode, AuditAction, Element, ElementStatus, Engine, SubmitterIdentity};
use crate::error::{Error, Result};
use crate::notify::NotificationKind;
use crate::store::{Key, Mutation, Namespace, ScanOrder, StoreError};

/// A freshly issued link. The plain token is only available here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditorLink {
    pub token: String,
    pub element_id: String,
    pub email: String,
    pub issued_at: DateTime<Utc>,
    pub revoked: bool,
    pub url: String,
}

/// What the store keeps for a link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredLink {
    pub token_hash: String,
    pub element_id: String,
    pub site_id: String,
    pub email: String,
    pub issued_at: DateTime<Utc>,
    pub revoked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkAction {
    Edit,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capability {
    pub element: Element,
    pub actions: Vec<LinkAction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevokeTarget {
    Token(String),
    /// Every link issued for the element.
    Element(String),
}

/// Digest under which a token is stored. Tokens that are not GUIDs have no
/// digest and can never match.
pub fn token_hash(token: &str) -> Option<String> {
    let canonical = Uuid::parse_str(token.trim()).ok()?.hyphenated().to_string();
    let digest = Sha256::digest(canonical.as_bytes());
    Some(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl Engine {
    pub(crate) fn prepare_link(
        &self,
        element: &Element,
        email: &str,
        at: DateTime<Utc>,
    ) -> Result<(EditorLink, Mutation)> {
        let token = Uuid::from_bytes(self.random_bytes()).hyphenated().to_string();
        let hash = token_hash(&token).expect("a rendered uuid parses");
        let stored = StoredLink {
            token_hash: hash.clone(),
            element_id: element.element_id.clone(),
            site_id: element.site_id.clone(),
            email: email.to_owned(),
            issued_at: at,
            revoked: false,
        };
        let link = EditorLink {
            url: self.edit_url(&token),
            token,
            element_id: element.element_id.clone(),
            email: email.to_owned(),
            issued_at: at,
            revoked: false,
        };
        Ok((link, Mutation::Insert { key: Key::new(Namespace::Link, hash), body: encode(&stored)? }))
    }

    pub(crate) fn notify_link(&self, link: &EditorLink) {
        self.notify(
            NotificationKind::EditorLink,
            &link.email,
            "Your editor link".to_owned(),
            format!("Use this link to edit or delete what you published:\n\n{}\n", link.url),
            format!("editor_link:{}", token_hash(&link.token).unwrap_or_default()),
        );
    }

    /// Issues a link on the owner's request for an existing element.
    pub fn issue_link(&self, element_id: &str, email: &str, actor: &SubmitterIdentity) -> Result<EditorLink> {
        self.begin_op();
        let element = self.element(element_id)?;
        authorize_owner(actor, &element.site_id)?;
        let email = email.trim();
        if !is_valid_email(email) {
            return Err(Error::InvalidEmail);
        }
        let now = self.now();
        let (link, insert) = self.prepare_link(&element, email, now)?;
        let batch = vec![insert, self.audit(&element, AuditAction::LinkIssued, actor, now)?];
        self.store.commit(batch)?;
        self.notify_link(&link);
        Ok(link)
    }

    fn find_link(&self, token: &str) -> Result<(StoredLink, u64)> {
        let hash = token_hash(token).ok_or(Error::UnknownToken)?;
        let (link, version) = self.load::<StoredLink>(Namespace::Link, &hash)?.ok_or(Error::UnknownToken)?;
        if !bool::from(link.token_hash.as_bytes().ct_eq(hash.as_bytes())) {
            return Err(Error::UnknownToken);
        }
        Ok((link, version))
    }

    fn live_link(&self, token: &str) -> Result<(StoredLink, Element, u64)> {
        let (link, _) = self.find_link(token)?;
        if link.revoked {
            return Err(Error::Revoked);
        }
        let (element, version) = self.load(Namespace::Element, &link.element_id)?.ok_or(Error::ElementGone)?;
        Ok((link, element, version))
    }

    pub fn redeem(&self, token: &str) -> Result<Capability> {
        let (_, element, _) = self.live_link(token)?;
        Ok(Capability { element, actions: vec![LinkAction::Edit, LinkAction::Delete] })
    }

    /// Replaces the element's values. Accepted elements go back to the queue
    /// when the site asks for remoderation.
    pub fn edit_via_link(&self, token: &str, payload: ElementPayload) -> Result<Element> {
        self.begin_op();
        for _ in 0..MAX_CAS_ATTEMPTS {
            let (_, mut element, version) = self.live_link(token)?;
            if payload.type_id != element.type_id {
                return Err(Error::TypeChangeForbidden);
            }
            let report = self.registry().validate(&payload)?;
            if !report.is_ok() {
                return Err(Error::ValidationFailed(report));
            }
            let site = self.site(&element.site_id)?;
            let remoderate = element.status == ElementStatus::Accepted && site.remoderate_on_edit;
            let now = self.now();
            element.payload = payload.clone();
            element.version = version + 1;
            if remoderate {
                element.status = ElementStatus::Pending;
                element.decided_at = None;
            }
            let actor = element.submitter.clone();
            let batch = vec![
                Mutation::Update {
                    key: Key::new(Namespace::Element, &element.element_id),
                    expected_version: version,
                    body: encode(&element)?,
                },
                self.audit(&element, AuditAction::Edited, &actor, now)?,
            ];
            match self.store.commit(batch) {
                Ok(_) => {}
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(StoreError::NotFound(_)) => return Err(Error::ElementGone),
                Err(e) => return Err(e.into()),
            }
            if remoderate {
                let url = self.queue_url(&element.site_id, &element.element_id);
                self.notify(
                    NotificationKind::Remoderation,
                    &site.owner_email,
                    format!("Edited {} needs another review on {}", element.type_id, element.site_id),
                    format!("A published element was changed through its editor link.\n\nReview it here: {url}\n"),
                    format!("remoderation:{}:{}", element.element_id, element.version),
                );
            }
            return Ok(element);
        }
        Err(Error::Conflict)
    }

    pub fn delete_via_link(&self, token: &str) -> Result<()> {
        self.begin_op();
        for _ in 0..MAX_CAS_ATTEMPTS {
            let (_, element, version) = self.live_link(token)?;
            let actor = element.submitter.clone();
            match self.remove_element(&element, version, &actor) {
                Ok(()) => return Ok(()),
                Err(Error::Store(StoreError::VersionConflict { .. })) => continue,
                Err(Error::Store(StoreError::NotFound(_))) => return Err(Error::ElementGone),
                Err(e) => return Err(e),
            }
        }
        Err(Error::Conflict)
    }

    /// Marks one link, or every link of an element, as revoked. Revoking a
    /// revoked link is a no-op. Returns how many links changed.
    pub fn revoke_link(&self, target: RevokeTarget, actor: &SubmitterIdentity) -> Result<usize> {
        self.begin_op();
        for _ in 0..MAX_CAS_ATTEMPTS {
            let links = match &target {
                RevokeTarget::Token(token) => vec![self.find_link(token)?],
                RevokeTarget::Element(element_id) => {
                    let links = self.links_with_versions(element_id)?;
                    if links.is_empty() {
                        let element = self.element(element_id)?;
                        authorize_owner(actor, &element.site_id)?;
                    }
                    links
                }
            };
            for (link, _) in &links {
                authorize_owner(actor, &link.site_id)?;
            }
            let mut batch = Vec::new();
            for (mut link, version) in links.into_iter().filter(|(l, _)| !l.revoked) {
                link.revoked = true;
                batch.push(Mutation::Update {
                    key: Key::new(Namespace::Link, &link.token_hash),
                    expected_version: version,
                    body: encode(&link)?,
                });
            }
            if batch.is_empty() {
                return Ok(0);
            }
            let changed = batch.len();
            match self.store.commit(batch) {
                Ok(_) => return Ok(changed),
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::Conflict)
    }

    fn links_with_versions(&self, element_id: &str) -> Result<Vec<(StoredLink, u64)>> {
        self.store
            .scan(Namespace::Link, |r| r.str_field("element_id") == Some(element_id), ScanOrder::Ascending)
            .iter()
            .map(|r| Ok((crate::engine::decode::<StoredLink>(r)?, r.version)))
            .collect()
    }

    /// Links recorded for an element, revoked ones included.
    pub fn links_for(&self, element_id: &str) -> Result<Vec<StoredLink>> {
        Ok(self.links_with_versions(element_id)?.into_iter().map(|(l, _)| l).collect())
    }
}
