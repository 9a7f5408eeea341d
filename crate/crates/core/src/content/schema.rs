use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeKind {
    Builtin,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    ShortText,
    LongText,
    Url,
    Date,
    IntegerRating,
    ImageRef,
    /// A list of opaque image references; `max_length` bounds each entry.
    ImageList,
}

impl ValueKind {
    /// Length limit (in characters) applied when a schema leaves it unset.
    pub fn default_max_length(self) -> u32 {
        match self {
            ValueKind::ShortText => 200,
            ValueKind::LongText => 64 * 1024,
            ValueKind::Url | ValueKind::ImageRef | ValueKind::ImageList => 2048,
            ValueKind::Date => 10,
            ValueKind::IntegerRating => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawFieldSpec")]
pub struct FieldSpec {
    pub name: String,
    pub value_kind: ValueKind,
    pub required: bool,
    pub max_length: u32,
}

#[derive(Deserialize)]
struct RawFieldSpec {
    name: String,
    value_kind: ValueKind,
    #[serde(default)]
    required: bool,
    #[serde(default)]
    max_length: Option<u32>,
}

impl From<RawFieldSpec> for FieldSpec {
    fn from(raw: RawFieldSpec) -> Self {
        FieldSpec {
            max_length: raw.max_length.unwrap_or_else(|| raw.value_kind.default_max_length()),
            name: raw.name,
            value_kind: raw.value_kind,
            required: raw.required,
        }
    }
}

impl FieldSpec {
    pub fn new(name: &str, value_kind: ValueKind, required: bool) -> Self {
        FieldSpec { name: name.to_owned(), value_kind, required, max_length: value_kind.default_max_length() }
    }

    pub fn required(name: &str, value_kind: ValueKind) -> Self {
        Self::new(name, value_kind, true)
    }

    pub fn optional(name: &str, value_kind: ValueKind) -> Self {
        Self::new(name, value_kind, false)
    }
}

/// Schema for one kind of content element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticType {
    pub type_id: String,
    pub kind: TypeKind,
    #[serde(default)]
    pub label: String,
    pub fields: Vec<FieldSpec>,
}

impl SemanticType {
    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Checks the schema invariants: identifier syntax, at least one field,
    /// unique field names, positive length limits.
    pub fn check(&self) -> Result<()> {
        if !is_identifier(&self.type_id) {
            return Err(Error::InvalidSchema(format!(
                "type_id `{}` must be 1-64 characters of [a-z0-9_-]",
                self.type_id
            )));
        }
        if self.fields.is_empty() {
            return Err(Error::EmptySchema);
        }
        let mut seen = HashSet::new();
        for field in &self.fields {
            if !is_identifier(&field.name) {
                return Err(Error::InvalidSchema(format!(
                    "field name `{}` must be 1-64 characters of [a-z0-9_-]",
                    field.name
                )));
            }
            if !seen.insert(field.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate field `{}`", field.name)));
            }
            if field.max_length == 0 {
                return Err(Error::InvalidSchema(format!("field `{}` has max_length 0", field.name)));
            }
        }
        Ok(())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 64
        && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

/// The data a submitter enters for one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementPayload {
    pub type_id: String,
    #[serde(default)]
    pub values: BTreeMap<String, serde_json::Value>,
}

impl ElementPayload {
    pub fn new(type_id: impl Into<String>) -> Self {
        ElementPayload { type_id: type_id.into(), values: BTreeMap::new() }
    }

    pub fn with(mut self, field: &str, value: impl Into<serde_json::Value>) -> Self {
        self.values.insert(field.to_owned(), value.into());
        self
    }
}

/// In-memory view of every registered type. Persistence is the engine's job.
#[derive(Debug, Default)]
pub struct TypeRegistry {
    types: RwLock<BTreeMap<String, Arc<SemanticType>>>,
}

impl TypeRegistry {
    pub fn with_builtins() -> Self {
        let registry = TypeRegistry::default();
        {
            let mut types = registry.types.write();
            for ty in super::builtin_types() {
                types.insert(ty.type_id.clone(), Arc::new(ty));
            }
        }
        registry
    }

    pub fn get(&self, type_id: &str) -> Option<Arc<SemanticType>> {
        self.types.read().get(type_id).cloned()
    }

    pub fn contains(&self, type_id: &str) -> bool {
        self.types.read().contains_key(type_id)
    }

    pub fn list(&self) -> Vec<Arc<SemanticType>> {
        self.types.read().values().cloned().collect()
    }

    /// Checks `spec` and makes it available. Fills an empty label with the id.
    pub fn insert(&self, mut spec: SemanticType) -> Result<Arc<SemanticType>> {
        spec.check()?;
        if spec.label.is_empty() {
            spec.label = spec.type_id.clone();
        }
        let mut types = self.types.write();
        if types.contains_key(&spec.type_id) {
            return Err(Error::DuplicateTypeId(spec.type_id));
        }
        let spec = Arc::new(spec);
        types.insert(spec.type_id.clone(), spec.clone());
        Ok(spec)
    }

    pub fn validate(&self, payload: &ElementPayload) -> Result<super::ValidationReport> {
        let ty = self.get(&payload.type_id).ok_or_else(|| Error::UnknownType(payload.type_id.clone()))?;
        Ok(super::validate_values(&ty, &payload.values))
    }
}
