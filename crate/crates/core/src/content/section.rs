use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Who may submit into a section, from most to least restrictive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTier {
    OwnerOnly,
    RegisteredUsers,
    ExternalAuthenticated,
    Anyone,
}

impl PolicyTier {
    pub const ALL: [PolicyTier; 4] =
        [PolicyTier::OwnerOnly, PolicyTier::RegisteredUsers, PolicyTier::ExternalAuthenticated, PolicyTier::Anyone];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyTier::OwnerOnly => "owner_only",
            PolicyTier::RegisteredUsers => "registered_users",
            PolicyTier::ExternalAuthenticated => "external_authenticated",
            PolicyTier::Anyone => "anyone",
        }
    }
}

impl fmt::Display for PolicyTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyTier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyTier::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| {
            format!(
                "unknown policy tier `{s}` (expected owner_only, registered_users, external_authenticated or anyone)"
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionPolicy {
    pub tier: PolicyTier,
}

impl SubmissionPolicy {
    pub fn new(tier: PolicyTier) -> Self {
        SubmissionPolicy { tier }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub section_id: String,
    pub site_id: String,
    pub parent_id: Option<String>,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub allowed_types: BTreeSet<String>,
    pub policy: SubmissionPolicy,
    pub open_input_enabled: bool,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionNode {
    #[serde(flatten)]
    pub section: Section,
    pub children: Vec<SectionNode>,
}

impl SectionNode {
    /// Pre-order walk: every parent precedes its children.
    pub fn flatten(nodes: &[SectionNode]) -> Vec<&Section> {
        let mut out = Vec::new();
        let mut stack: Vec<&SectionNode> = nodes.iter().rev().collect();
        while let Some(node) = stack.pop() {
            out.push(&node.section);
            stack.extend(node.children.iter().rev());
        }
        out
    }
}

/// Builds the forest hanging off a site. Siblings are ordered by name, then id.
pub fn build_tree(sections: Vec<Section>) -> Vec<SectionNode> {
    let mut by_parent: HashMap<Option<String>, Vec<Section>> = HashMap::new();
    for section in sections {
        by_parent.entry(section.parent_id.clone()).or_default().push(section);
    }
    for group in by_parent.values_mut() {
        group.sort_by(|a, b| a.name.cmp(&b.name).then_with(|| a.section_id.cmp(&b.section_id)));
    }

    fn attach(parent: Option<String>, by_parent: &mut HashMap<Option<String>, Vec<Section>>) -> Vec<SectionNode> {
        let Some(children) = by_parent.remove(&parent) else {
            return Vec::new();
        };
        children
            .into_iter()
            .map(|section| {
                let children = attach(Some(section.section_id.clone()), by_parent);
                SectionNode { section, children }
            })
            .collect()
    }

    attach(None, &mut by_parent)
}

/// Whether making `new_parent` the parent of `section_id` would close a loop.
/// `parent_of` maps each existing section to its parent.
pub fn would_form_cycle(parent_of: &HashMap<String, Option<String>>, section_id: &str, new_parent: &str) -> bool {
    let mut cursor = Some(new_parent.to_owned());
    let mut steps = 0usize;
    while let Some(current) = cursor {
        if current == section_id {
            return true;
        }
        steps += 1;
        if steps > parent_of.len() + 1 {
            // an existing loop; treat as a cycle rather than spin
            return true;
        }
        cursor = parent_of.get(&current).cloned().flatten();
    }
    false
}
