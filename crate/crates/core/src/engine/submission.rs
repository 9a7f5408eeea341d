use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::content::{is_valid_email, ElementPayload};
use crate::error::{Error, Result};
use crate::links::EditorLink;
use crate::notify::NotificationKind;
use crate::store::{Key, Mutation, Namespace, ScanOrder, StoreError};

use super::{
    authorize_owner, decode, encode, AuditAction, Decision, Element, ElementStatus, Engine, IdentityClass, Page,
    PageRequest, SortOrder, SubmitterIdentity, MAX_CAS_ATTEMPTS,
};

#[derive(Debug, Clone)]
pub struct Submission {
    pub section_id: String,
    pub payload: ElementPayload,
    pub identity: SubmitterIdentity,
    pub email: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub element: Element,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<EditorLink>,
}

impl Engine {
    pub fn submit(&self, submission: Submission) -> Result<SubmitOutcome> {
        self.begin_op();
        let Submission { section_id, payload, identity, email } = submission;
        let (section, _) = self.load_section(&section_id)?;
        let is_owner = identity.class == IdentityClass::Owner;
        if is_owner && !identity.is_owner_of(&section.site_id) {
            return Err(Error::PolicyDenied);
        }
        if !is_owner && !section.open_input_enabled {
            return Err(Error::InputDisabled);
        }
        if !identity.class.satisfies(section.policy.tier) {
            return Err(Error::PolicyDenied);
        }
        if !section.allowed_types.contains(&payload.type_id) {
            return Err(Error::TypeNotAllowed(payload.type_id));
        }
        let report = self.registry.validate(&payload)?;
        if !report.is_ok() {
            return Err(Error::ValidationFailed(report));
        }
        let email = match email.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(e) if is_valid_email(e) => Some(e.to_owned()),
            Some(_) => return Err(Error::InvalidEmail),
        };
        let site = self.site(&section.site_id)?;

        let now = self.now();
        let status = identity.class.initial_status();
        let element = Element {
            element_id: self.new_id(),
            site_id: section.site_id.clone(),
            section_id: section.section_id.clone(),
            type_id: payload.type_id.clone(),
            payload,
            status,
            submitter: identity.clone(),
            submitter_email: email.clone(),
            created_at: now,
            decided_at: (status != ElementStatus::Pending).then_some(now),
            version: 1,
        };

        let mut batch = vec![
            Mutation::Insert { key: Key::new(Namespace::Element, &element.element_id), body: encode(&element)? },
            self.audit(&element, AuditAction::Submitted, &identity, now)?,
        ];
        let link = match &email {
            Some(email) => {
                let (link, insert) = self.prepare_link(&element, email, now)?;
                batch.push(insert);
                batch.push(self.audit(&element, AuditAction::LinkIssued, &identity, now)?);
                Some(link)
            }
            None => None,
        };
        self.store.commit(batch)?;

        if status == ElementStatus::Pending {
            self.notify_pending(&site.owner_email, &element);
        }
        if let Some(link) = &link {
            self.notify_link(link);
        }
        Ok(SubmitOutcome { element, link })
    }

    fn notify_pending(&self, owner_email: &str, element: &Element) {
        let url = self.queue_url(&element.site_id, &element.element_id);
        self.notify(
            NotificationKind::PendingSubmission,
            owner_email,
            format!("New {} waiting for review on {}", element.type_id, element.site_id),
            format!("A visitor added information to section {}.\n\nReview it here: {url}\n", element.section_id),
            format!("pending_submission:{}", element.element_id),
        );
    }

    /// Accepts or declines an element. Repeating the current decision changes
    /// nothing; the opposite decision reverses an earlier one.
    pub fn decide(&self, element_id: &str, decision: Decision, actor: &SubmitterIdentity) -> Result<Element> {
        self.begin_op();
        let target = decision.target_status();
        for _ in 0..MAX_CAS_ATTEMPTS {
            let (mut element, version) = self.load_element(element_id)?;
            authorize_owner(actor, &element.site_id)?;
            if element.status == target {
                return Ok(element);
            }
            let now = self.now();
            element.status = target;
            element.decided_at = Some(now.max(element.created_at));
            element.version = version + 1;
            let action = match decision {
                Decision::Accept => AuditAction::Accepted,
                Decision::Decline => AuditAction::Declined,
            };
            let batch = vec![
                Mutation::Update {
                    key: Key::new(Namespace::Element, element_id),
                    expected_version: version,
                    body: encode(&element)?,
                },
                self.audit(&element, action, actor, now)?,
            ];
            match self.store.commit(batch) {
                Ok(_) => return Ok(element),
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(StoreError::NotFound(_)) => return Err(Error::UnknownElement(element_id.to_owned())),
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::Conflict)
    }

    /// Replaces an element's values as the owner, e.g. to answer a question.
    /// The status is left alone.
    pub fn edit_element(
        &self,
        element_id: &str,
        values: BTreeMap<String, Value>,
        actor: &SubmitterIdentity,
    ) -> Result<Element> {
        self.begin_op();
        for _ in 0..MAX_CAS_ATTEMPTS {
            let (mut element, version) = self.load_element(element_id)?;
            authorize_owner(actor, &element.site_id)?;
            let payload = ElementPayload { type_id: element.type_id.clone(), values: values.clone() };
            let report = self.registry.validate(&payload)?;
            if !report.is_ok() {
                return Err(Error::ValidationFailed(report));
            }
            let now = self.now();
            element.payload = payload;
            element.version = version + 1;
            let batch = vec![
                Mutation::Update {
                    key: Key::new(Namespace::Element, element_id),
                    expected_version: version,
                    body: encode(&element)?,
                },
                self.audit(&element, AuditAction::Edited, actor, now)?,
            ];
            match self.store.commit(batch) {
                Ok(_) => return Ok(element),
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(StoreError::NotFound(_)) => return Err(Error::UnknownElement(element_id.to_owned())),
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::Conflict)
    }

    pub fn delete_element(&self, element_id: &str, actor: &SubmitterIdentity) -> Result<()> {
        self.begin_op();
        for _ in 0..MAX_CAS_ATTEMPTS {
            let (element, version) = self.load_element(element_id)?;
            authorize_owner(actor, &element.site_id)?;
            match self.remove_element(&element, version, actor) {
                Ok(()) => return Ok(()),
                Err(Error::Store(StoreError::VersionConflict { .. })) => continue,
                Err(Error::Store(StoreError::NotFound(_))) => return Err(Error::UnknownElement(element_id.to_owned())),
                Err(e) => return Err(e),
            }
        }
        Err(Error::Conflict)
    }

    pub(crate) fn remove_element(&self, element: &Element, version: u64, actor: &SubmitterIdentity) -> Result<()> {
        let now = self.now();
        let batch = vec![
            Mutation::Delete { key: Key::new(Namespace::Element, &element.element_id), expected_version: version },
            self.audit(element, AuditAction::Deleted, actor, now)?,
        ];
        self.store.commit(batch)?;
        Ok(())
    }

    /// Accepted elements of a section, one page at a time. Ties on
    /// `created_at` are broken by ascending element id in both directions.
    pub fn list_public(&self, section_id: &str, request: PageRequest) -> Result<Page<Element>> {
        self.load_section(section_id)?;
        let mut elements = self.elements_where(|r| {
            r.str_field("section_id") == Some(section_id) && r.str_field("status") == Some("accepted")
        })?;
        elements.sort_by(|a, b| {
            let by_time = match request.sort {
                SortOrder::NewestFirst => b.created_at.cmp(&a.created_at),
                SortOrder::OldestFirst => a.created_at.cmp(&b.created_at),
            };
            by_time.then_with(|| a.element_id.cmp(&b.element_id))
        });
        Ok(Page::slice(elements, request))
    }

    /// Every pending element of a site, oldest first.
    pub fn pending_queue(&self, site_id: &str, actor: &SubmitterIdentity) -> Result<Vec<Element>> {
        self.site(site_id)?;
        authorize_owner(actor, site_id)?;
        let mut elements = self
            .elements_where(|r| r.str_field("site_id") == Some(site_id) && r.str_field("status") == Some("pending"))?;
        elements.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.element_id.cmp(&b.element_id)));
        Ok(elements)
    }

    /// Deletes declined elements, of one site or of all sites. Returns how
    /// many were removed.
    pub fn purge_declined(&self, site_id: Option<&str>) -> Result<usize> {
        self.begin_op();
        if let Some(site_id) = site_id {
            self.site(site_id)?;
        }
        let declined = self.elements_where(|r| {
            r.str_field("status") == Some("declined") && site_id.is_none_or(|s| r.str_field("site_id") == Some(s))
        })?;
        let mut removed = 0;
        for element in declined {
            let owner = SubmitterIdentity::owner(&element.site_id);
            match self.remove_element(&element, element.version, &owner) {
                Ok(()) => removed += 1,
                // changed or removed since the scan; leave it for the next purge
                Err(Error::Store(StoreError::VersionConflict { .. } | StoreError::NotFound(_))) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(removed)
    }

    pub(crate) fn elements_where(&self, filter: impl Fn(&crate::store::Record) -> bool) -> Result<Vec<Element>> {
        self.store.scan(Namespace::Element, filter, ScanOrder::Ascending).iter().map(decode).collect()
    }
}
