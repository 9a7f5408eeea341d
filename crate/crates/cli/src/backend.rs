//! One method per operation, answered either directly from the store or by
//! a running server. Both return the JSON bodies the HTTP API uses.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use open_intake_core::content::PolicyTier;
use open_intake_core::engine::{anonymize_client, Decision, NewSection, NewSite, Submission, SubmitterIdentity};
use open_intake_core::links::{token_hash, Capability, LinkAction, RevokeTarget};
use open_intake_core::notify::{DeliveryAdapter, Notifier, NullAdapter, OutboxFile, RetryPolicy, SmtpAdapter};
use open_intake_core::store::{Key, Namespace, Store, StoreOptions, SyncMode};
use open_intake_core::{ElementPayload, Engine, SemanticType};
use open_intake_http::views::{Deleted, EditorView, GlobalStats, LinkIssued, Revoked, SubmitResponse};
use serde::Serialize;
use serde_json::Value;

use crate::config::{CliConfig, NotifierConfig};
use crate::error::{CliError, CliResult};

/// Section fields as sent to `POST /admin/sites/{site}/sections`.
#[derive(Debug, Clone, Serialize)]
pub struct SectionSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub section_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub name: String,
    pub description: String,
    pub allowed_types: BTreeSet<String>,
    pub policy: PolicyTier,
    pub open_input_enabled: bool,
}

pub trait Backend {
    fn create_site(&self, new: NewSite) -> CliResult<Value>;
    fn sites(&self) -> CliResult<Value>;
    fn set_trusted(&self, site: &str, subject: &str, trusted: bool) -> CliResult<Value>;
    fn add_section(&self, site: &str, spec: SectionSpec) -> CliResult<Value>;
    fn section_tree(&self, site: &str) -> CliResult<Value>;
    fn delete_section(&self, site: &str, section: &str) -> CliResult<Value>;
    fn types(&self) -> CliResult<Value>;
    fn type_schema(&self, type_id: &str) -> CliResult<Value>;
    fn register_type(&self, spec: SemanticType) -> CliResult<Value>;
    /// Submits as the site owner, or anonymously from `client_addr`.
    fn submit(
        &self,
        site: &str,
        section: &str,
        payload: ElementPayload,
        email: Option<String>,
        client_addr: Option<String>,
    ) -> CliResult<Value>;
    fn queue(&self, site: &str) -> CliResult<Value>;
    fn decide(&self, element: &str, decision: Decision) -> CliResult<Value>;
    fn element(&self, element: &str) -> CliResult<Value>;
    fn edit_element(&self, element: &str, values: BTreeMap<String, Value>) -> CliResult<Value>;
    fn delete_element(&self, element: &str) -> CliResult<Value>;
    fn audit(&self, element: &str) -> CliResult<Value>;
    fn issue_link(&self, element: &str, email: &str) -> CliResult<Value>;
    fn redeem(&self, token: &str) -> CliResult<Value>;
    fn edit_via_link(&self, token: &str, type_id: Option<String>, values: BTreeMap<String, Value>) -> CliResult<Value>;
    fn delete_via_link(&self, token: &str) -> CliResult<Value>;
    fn revoke_token(&self, token: &str) -> CliResult<Value>;
    fn revoke_element_links(&self, element: &str) -> CliResult<Value>;
    /// Per-site counts, or global counts plus the `top` busiest sites.
    fn stats(&self, site: Option<&str>, top: usize) -> CliResult<Value>;
}

pub fn open_store(config: &CliConfig) -> CliResult<Arc<Store>> {
    let sync = if config.fsync { SyncMode::Always } else { SyncMode::Flush };
    Ok(Arc::new(Store::open(&config.data_dir, StoreOptions { sync, ..StoreOptions::default() })?))
}

pub fn delivery_adapter(config: &CliConfig) -> CliResult<Arc<dyn DeliveryAdapter>> {
    Ok(match &config.notifier {
        NotifierConfig::Null => Arc::new(NullAdapter),
        NotifierConfig::Outbox { .. } => {
            let path = config.outbox_path().expect("outbox notifier has a path");
            Arc::new(
                OutboxFile::open(&path)
                    .map_err(|e| CliError::new("config", format!("outbox {}: {e}", path.display())))?,
            )
        }
        NotifierConfig::Smtp(settings) => {
            Arc::new(SmtpAdapter::new(settings).map_err(|e| CliError::new("config", format!("smtp: {e}")))?)
        }
    })
}

pub fn build_engine(
    config: &CliConfig,
    store: Arc<Store>,
    notifications: Arc<dyn open_intake_core::notify::NotificationSink>,
) -> CliResult<Engine> {
    let mut builder = Engine::builder(store).base_url(config.base_url.clone()).notifications(notifications);
    if let Some(seed) = config.deterministic_seed {
        builder = builder.deterministic(seed);
    }
    Ok(builder.build()?)
}

fn json<T: Serialize>(value: T) -> CliResult<Value> {
    Ok(serde_json::to_value(value)?)
}

/// Direct access to the data directory. Holds its lock while alive.
pub struct Local {
    engine: Engine,
    notifier: Arc<Notifier>,
    salt: String,
}

impl Local {
    pub fn open(config: &CliConfig) -> CliResult<Local> {
        let store = open_store(config)?;
        let notifier = Arc::new(Notifier::new(delivery_adapter(config)?, RetryPolicy::default()));
        let engine = build_engine(config, store, notifier.clone())?;
        Ok(Local { engine, notifier, salt: config.client_salt.clone() })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn salt(&self) -> &str {
        &self.salt
    }

    fn owner_of_element(&self, element: &str) -> CliResult<SubmitterIdentity> {
        Ok(SubmitterIdentity::owner(self.engine.element(element)?.site_id))
    }

    /// The owner of the site a token belongs to. Unknown tokens yield an
    /// identity that owns nothing and the engine reports the token.
    fn owner_of_token(&self, token: &str) -> SubmitterIdentity {
        let site = token_hash(token)
            .and_then(|hash| self.engine.store().get(&Key::new(Namespace::Link, hash)))
            .and_then(|record| record.str_field("site_id").map(str::to_owned))
            .unwrap_or_default();
        SubmitterIdentity::owner(site)
    }
}

impl Drop for Local {
    fn drop(&mut self) {
        for record in self.notifier.drain() {
            if let open_intake_core::notify::DeliveryRecord::Failed { dedup_key, reason, .. } = record {
                tracing::warn!(%dedup_key, %reason, "notification not delivered");
            }
        }
    }
}

impl Backend for Local {
    fn create_site(&self, new: NewSite) -> CliResult<Value> {
        json(self.engine.create_site(new)?)
    }

    fn sites(&self) -> CliResult<Value> {
        json(self.engine.sites()?)
    }

    fn set_trusted(&self, site: &str, subject: &str, trusted: bool) -> CliResult<Value> {
        json(self.engine.set_trusted(site, subject, trusted, &SubmitterIdentity::owner(site))?)
    }

    fn add_section(&self, site: &str, spec: SectionSpec) -> CliResult<Value> {
        let new = NewSection {
            site_id: site.to_owned(),
            section_id: spec.section_id,
            parent_id: spec.parent_id,
            name: spec.name,
            description: spec.description,
            allowed_types: spec.allowed_types,
            policy: spec.policy,
            open_input_enabled: spec.open_input_enabled,
        };
        json(self.engine.create_section(new, &SubmitterIdentity::owner(site))?)
    }

    fn section_tree(&self, site: &str) -> CliResult<Value> {
        json(self.engine.section_tree(site)?)
    }

    fn delete_section(&self, site: &str, section: &str) -> CliResult<Value> {
        site_section(&self.engine, site, section)?;
        self.engine.delete_section(section, &SubmitterIdentity::owner(site))?;
        json(Deleted { deleted: section.to_owned() })
    }

    fn types(&self) -> CliResult<Value> {
        json(self.engine.types())
    }

    fn type_schema(&self, type_id: &str) -> CliResult<Value> {
        json(self.engine.type_schema(type_id)?)
    }

    fn register_type(&self, spec: SemanticType) -> CliResult<Value> {
        let id = self.engine.register_type(spec)?;
        json(self.engine.type_schema(&id)?)
    }

    fn submit(
        &self,
        site: &str,
        section: &str,
        payload: ElementPayload,
        email: Option<String>,
        client_addr: Option<String>,
    ) -> CliResult<Value> {
        site_section(&self.engine, site, section)?;
        let identity = match client_addr {
            Some(addr) => SubmitterIdentity::anonymous(Some(anonymize_client(&self.salt, &addr))),
            None => SubmitterIdentity::owner(site),
        };
        let outcome = self.engine.submit(Submission { section_id: section.to_owned(), payload, identity, email })?;
        json(SubmitResponse {
            element_id: outcome.element.element_id,
            status: outcome.element.status,
            editor_link_url: outcome.link.map(|l| l.url),
        })
    }

    fn queue(&self, site: &str) -> CliResult<Value> {
        json(self.engine.pending_queue(site, &SubmitterIdentity::owner(site))?)
    }

    fn decide(&self, element: &str, decision: Decision) -> CliResult<Value> {
        let owner = self.owner_of_element(element)?;
        json(self.engine.decide(element, decision, &owner)?)
    }

    fn element(&self, element: &str) -> CliResult<Value> {
        json(self.engine.element(element)?)
    }

    fn edit_element(&self, element: &str, values: BTreeMap<String, Value>) -> CliResult<Value> {
        let owner = self.owner_of_element(element)?;
        json(self.engine.edit_element(element, values, &owner)?)
    }

    fn delete_element(&self, element: &str) -> CliResult<Value> {
        let owner = self.owner_of_element(element)?;
        self.engine.delete_element(element, &owner)?;
        json(Deleted { deleted: element.to_owned() })
    }

    fn audit(&self, element: &str) -> CliResult<Value> {
        self.engine.element(element)?;
        json(self.engine.audit_trail(element)?)
    }

    fn issue_link(&self, element: &str, email: &str) -> CliResult<Value> {
        let owner = self.owner_of_element(element)?;
        json(LinkIssued::from(self.engine.issue_link(element, email, &owner)?))
    }

    fn redeem(&self, token: &str) -> CliResult<Value> {
        json(EditorView::from(self.engine.redeem(token)?))
    }

    fn edit_via_link(&self, token: &str, type_id: Option<String>, values: BTreeMap<String, Value>) -> CliResult<Value> {
        let type_id = match type_id {
            Some(t) => t,
            None => self.engine.redeem(token)?.element.type_id,
        };
        let element = self.engine.edit_via_link(token, ElementPayload { type_id, values })?;
        json(EditorView::from(Capability { element, actions: vec![LinkAction::Edit, LinkAction::Delete] }))
    }

    fn delete_via_link(&self, token: &str) -> CliResult<Value> {
        let id = self.engine.redeem(token)?.element.element_id;
        self.engine.delete_via_link(token)?;
        json(Deleted { deleted: id })
    }

    fn revoke_token(&self, token: &str) -> CliResult<Value> {
        let owner = self.owner_of_token(token);
        let revoked = self.engine.revoke_link(RevokeTarget::Token(token.to_owned()), &owner)?;
        json(Revoked { revoked })
    }

    fn revoke_element_links(&self, element: &str) -> CliResult<Value> {
        // links outlive their element, so fall back to a link's site
        let owner = match self.engine.links_for(element)?.first() {
            Some(link) => SubmitterIdentity::owner(link.site_id.clone()),
            None => self.owner_of_element(element)?,
        };
        let revoked = self.engine.revoke_link(RevokeTarget::Element(element.to_owned()), &owner)?;
        json(Revoked { revoked })
    }

    fn stats(&self, site: Option<&str>, top: usize) -> CliResult<Value> {
        match site {
            Some(site) => json(self.engine.stats(Some(site))?),
            None => json(GlobalStats { stats: self.engine.stats(None)?, top_sites: self.engine.top_sites(top)? }),
        }
    }
}

/// A section addressed through its site, as the HTTP routes address it.
fn site_section(engine: &Engine, site: &str, section: &str) -> CliResult<()> {
    let found = engine.section(section)?;
    if found.site_id != site {
        return Err(open_intake_core::Error::UnknownSection(section.to_owned()).into());
    }
    Ok(())
}
