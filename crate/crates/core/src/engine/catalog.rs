use std::collections::{BTreeSet, HashMap};

use crate::content::{
    build_tree, schema_identifier, would_form_cycle, ElementPayload, PolicyTier, Section, SectionNode, SemanticType,
    SubmissionPolicy, TypeKind, ValidationReport,
};
use crate::error::{Error, Result};
use crate::store::{Key, Namespace, ScanOrder, StoreError};

use super::{authorize_owner, decode, encode, Engine, SubmitterIdentity, MAX_CAS_ATTEMPTS};

#[derive(Debug, Clone)]
pub struct NewSection {
    pub site_id: String,
    /// Generated when absent.
    pub section_id: Option<String>,
    pub parent_id: Option<String>,
    pub name: String,
    pub description: String,
    pub allowed_types: BTreeSet<String>,
    pub policy: PolicyTier,
    pub open_input_enabled: bool,
}

impl NewSection {
    pub fn new(site_id: &str, name: &str, allowed_types: &[&str], policy: PolicyTier) -> Self {
        NewSection {
            site_id: site_id.to_owned(),
            section_id: None,
            parent_id: None,
            name: name.to_owned(),
            description: String::new(),
            allowed_types: allowed_types.iter().map(|t| (*t).to_owned()).collect(),
            policy,
            open_input_enabled: true,
        }
    }

    pub fn id(mut self, section_id: &str) -> Self {
        self.section_id = Some(section_id.to_owned());
        self
    }

    pub fn parent(mut self, parent_id: &str) -> Self {
        self.parent_id = Some(parent_id.to_owned());
        self
    }

    pub fn closed(mut self) -> Self {
        self.open_input_enabled = false;
        self
    }
}

/// Partial section change; `None` leaves a field as it is.
#[derive(Debug, Clone, Default)]
pub struct SectionUpdate {
    pub name: Option<String>,
    pub description: Option<String>,
    /// `Some(None)` moves the section to the top level.
    pub parent_id: Option<Option<String>>,
    pub allowed_types: Option<BTreeSet<String>>,
    pub policy: Option<PolicyTier>,
    pub open_input_enabled: Option<bool>,
}

impl Engine {
    /// Adds a custom type. Built-in types are seeded at startup and cannot be
    /// registered again.
    pub fn register_type(&self, mut spec: SemanticType) -> Result<String> {
        self.begin_op();
        if spec.kind == TypeKind::Builtin {
            return Err(Error::InvalidSchema("only custom types can be registered".into()));
        }
        spec.check()?;
        if self.registry.contains(&spec.type_id) {
            return Err(Error::DuplicateTypeId(spec.type_id));
        }
        if spec.label.is_empty() {
            spec.label = spec.type_id.clone();
        }
        match self.store.put_new(Key::new(Namespace::Type, &spec.type_id), encode(&spec)?) {
            Ok(_) => {}
            Err(StoreError::AlreadyExists(_)) => return Err(Error::DuplicateTypeId(spec.type_id)),
            Err(e) => return Err(e.into()),
        }
        Ok(self.registry.insert(spec)?.type_id.clone())
    }

    pub fn types(&self) -> Vec<SemanticType> {
        self.registry.list().iter().map(|t| (**t).clone()).collect()
    }

    pub fn type_schema(&self, type_id: &str) -> Result<SemanticType> {
        self.registry.get(type_id).map(|t| (*t).clone()).ok_or_else(|| Error::UnknownType(type_id.to_owned()))
    }

    /// Checks `values` against the schema of `type_id`; the payload's own
    /// `type_id` is ignored.
    pub fn validate_payload(&self, type_id: &str, payload: &ElementPayload) -> Result<ValidationReport> {
        let ty = self.registry.get(type_id).ok_or_else(|| Error::UnknownType(type_id.to_owned()))?;
        Ok(crate::content::validate_values(&ty, &payload.values))
    }

    pub fn create_section(&self, new: NewSection, actor: &SubmitterIdentity) -> Result<Section> {
        self.begin_op();
        self.site(&new.site_id)?;
        authorize_owner(actor, &new.site_id)?;
        let section_id = match new.section_id {
            Some(id) if !schema_identifier(&id) => {
                return Err(Error::InvalidSection(format!("section id `{id}` must be 1-64 characters of [a-z0-9_-]")))
            }
            Some(id) => id,
            None => self.new_id(),
        };
        if new.name.trim().is_empty() {
            return Err(Error::InvalidSection("name must not be empty".into()));
        }
        if let Some(parent_id) = &new.parent_id {
            if *parent_id == section_id {
                return Err(Error::CycleWouldForm);
            }
            match self.load::<Section>(Namespace::Section, parent_id)? {
                Some((parent, _)) if parent.site_id == new.site_id => {}
                _ => return Err(Error::UnknownParent(parent_id.clone())),
            }
        }
        self.check_allowed(&new.allowed_types, new.open_input_enabled)?;

        let section = Section {
            section_id,
            site_id: new.site_id,
            parent_id: new.parent_id,
            name: new.name,
            description: new.description,
            allowed_types: new.allowed_types,
            policy: SubmissionPolicy::new(new.policy),
            open_input_enabled: new.open_input_enabled,
            created_at: self.now(),
        };
        match self.store.put_new(Key::new(Namespace::Section, &section.section_id), encode(&section)?) {
            Ok(_) => Ok(section),
            Err(StoreError::AlreadyExists(_)) => Err(Error::SectionExists(section.section_id)),
            Err(e) => Err(e.into()),
        }
    }

    fn check_allowed(&self, allowed: &BTreeSet<String>, open: bool) -> Result<()> {
        if let Some(unknown) = allowed.iter().find(|t| !self.registry.contains(t)) {
            return Err(Error::UnknownType(unknown.clone()));
        }
        if open && allowed.is_empty() {
            return Err(Error::NoAllowedTypes);
        }
        Ok(())
    }

    pub fn update_section(
        &self,
        section_id: &str,
        update: SectionUpdate,
        actor: &SubmitterIdentity,
    ) -> Result<Section> {
        self.begin_op();
        for _ in 0..MAX_CAS_ATTEMPTS {
            let (mut section, version) = self.load_section(section_id)?;
            authorize_owner(actor, &section.site_id)?;
            if let Some(name) = &update.name {
                if name.trim().is_empty() {
                    return Err(Error::InvalidSection("name must not be empty".into()));
                }
                section.name = name.clone();
            }
            if let Some(description) = &update.description {
                section.description = description.clone();
            }
            if let Some(parent) = &update.parent_id {
                if let Some(parent_id) = parent {
                    if parent_id == section_id {
                        return Err(Error::CycleWouldForm);
                    }
                    match self.load::<Section>(Namespace::Section, parent_id)? {
                        Some((p, _)) if p.site_id == section.site_id => {}
                        _ => return Err(Error::UnknownParent(parent_id.clone())),
                    }
                    let parent_of: HashMap<String, Option<String>> =
                        self.sections_of(&section.site_id)?.into_iter().map(|s| (s.section_id, s.parent_id)).collect();
                    if would_form_cycle(&parent_of, section_id, parent_id) {
                        return Err(Error::CycleWouldForm);
                    }
                }
                section.parent_id = parent.clone();
            }
            if let Some(allowed) = &update.allowed_types {
                section.allowed_types = allowed.clone();
            }
            if let Some(tier) = update.policy {
                section.policy = SubmissionPolicy::new(tier);
            }
            if let Some(open) = update.open_input_enabled {
                section.open_input_enabled = open;
            }
            self.check_allowed(&section.allowed_types, section.open_input_enabled)?;
            match self.store.compare_and_set(Key::new(Namespace::Section, section_id), version, encode(&section)?) {
                Ok(_) => return Ok(section),
                Err(StoreError::VersionConflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::Conflict)
    }

    /// Removes a section that has neither child sections nor elements.
    pub fn delete_section(&self, section_id: &str, actor: &SubmitterIdentity) -> Result<()> {
        self.begin_op();
        let (section, version) = self.load_section(section_id)?;
        authorize_owner(actor, &section.site_id)?;
        let has_children = !self
            .store
            .scan(Namespace::Section, |r| r.str_field("parent_id") == Some(section_id), ScanOrder::Ascending)
            .is_empty();
        let has_elements = !self
            .store
            .scan(Namespace::Element, |r| r.str_field("section_id") == Some(section_id), ScanOrder::Ascending)
            .is_empty();
        if has_children || has_elements {
            return Err(Error::SectionNotEmpty(section_id.to_owned()));
        }
        match self.store.compare_and_delete(Key::new(Namespace::Section, section_id), version) {
            Ok(()) => Ok(()),
            Err(StoreError::VersionConflict { .. } | StoreError::NotFound(_)) => Err(Error::Conflict),
            Err(e) => Err(e.into()),
        }
    }

    pub fn section(&self, section_id: &str) -> Result<Section> {
        Ok(self.load_section(section_id)?.0)
    }

    pub(crate) fn load_section(&self, section_id: &str) -> Result<(Section, u64)> {
        self.load(Namespace::Section, section_id)?.ok_or_else(|| Error::UnknownSection(section_id.to_owned()))
    }

    fn sections_of(&self, site_id: &str) -> Result<Vec<Section>> {
        self.store
            .scan(Namespace::Section, |r| r.str_field("site_id") == Some(site_id), ScanOrder::Ascending)
            .iter()
            .map(decode)
            .collect()
    }

    /// The site's sections as a forest; the site itself is the implicit root.
    pub fn section_tree(&self, site_id: &str) -> Result<Vec<SectionNode>> {
        self.site(site_id)?;
        Ok(build_tree(self.sections_of(site_id)?))
    }
}
