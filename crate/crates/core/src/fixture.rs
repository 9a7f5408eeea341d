//! Line-delimited JSON operation scripts.
//!
//! Each line is one operation tagged by `op`. Submissions may carry a `ref`
//! name and later operations may use that name wherever an element id is
//! expected; `link_ref` does the same for editor-link tokens.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::content::{ElementPayload, PolicyTier, SemanticType, BUILTIN_TYPE_IDS};
use crate::engine::{
    anonymize_client, Decision, ElementStatus, Engine, IdentityClass, NewSection, NewSite, Submission,
    SubmitterIdentity,
};
use crate::error::{Error, Result};
use crate::links::RevokeTarget;

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum FixtureOp {
    Site {
        site_id: String,
        #[serde(default)]
        name: String,
        owner_email: String,
        #[serde(default = "yes")]
        remoderate_on_edit: bool,
    },
    Section {
        site_id: String,
        section_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parent_id: Option<String>,
        name: String,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        description: String,
        allowed_types: BTreeSet<String>,
        policy: PolicyTier,
        #[serde(default = "yes")]
        open_input_enabled: bool,
    },
    Type(SemanticType),
    SetTrusted {
        site_id: String,
        subject: String,
        trusted: bool,
    },
    Submit {
        #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
        section_id: String,
        type_id: String,
        values: BTreeMap<String, Value>,
        #[serde(default)]
        identity: FixtureIdentity,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        email: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_addr: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        link_ref: Option<String>,
    },
    Decide {
        element: String,
        decision: Decision,
    },
    IssueLink {
        element: String,
        email: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        link_ref: Option<String>,
    },
    Edit {
        link: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        type_id: Option<String>,
        values: BTreeMap<String, Value>,
    },
    EditElement {
        element: String,
        values: BTreeMap<String, Value>,
    },
    DeleteViaLink {
        link: String,
    },
    Delete {
        element: String,
    },
    Revoke {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        link: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        element: Option<String>,
    },
}

impl FixtureOp {
    pub fn name(&self) -> &'static str {
        match self {
            FixtureOp::Site { .. } => "site",
            FixtureOp::Section { .. } => "section",
            FixtureOp::Type(_) => "type",
            FixtureOp::SetTrusted { .. } => "set_trusted",
            FixtureOp::Submit { .. } => "submit",
            FixtureOp::Decide { .. } => "decide",
            FixtureOp::IssueLink { .. } => "issue_link",
            FixtureOp::Edit { .. } => "edit",
            FixtureOp::EditElement { .. } => "edit_element",
            FixtureOp::DeleteViaLink { .. } => "delete_via_link",
            FixtureOp::Delete { .. } => "delete",
            FixtureOp::Revoke { .. } => "revoke",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureIdentity {
    pub class: IdentityClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl Default for FixtureIdentity {
    fn default() -> Self {
        FixtureIdentity { class: IdentityClass::Anonymous, subject: None }
    }
}

/// Outcome of one applied operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<ElementStatus>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub applied: usize,
    pub failed: usize,
    /// Failures by error code.
    pub errors: BTreeMap<String, usize>,
}

/// Applies operations to an engine, resolving `ref` names as it goes.
pub struct Replayer<'a> {
    engine: &'a Engine,
    salt: String,
    elements: HashMap<String, String>,
    links: HashMap<String, String>,
}

impl<'a> Replayer<'a> {
    /// `salt` hashes `client_addr` values into anonymous subjects.
    pub fn new(engine: &'a Engine, salt: impl Into<String>) -> Self {
        Replayer { engine, salt: salt.into(), elements: HashMap::new(), links: HashMap::new() }
    }

    pub fn element_id(&self, reference: &str) -> String {
        self.elements.get(reference).cloned().unwrap_or_else(|| reference.to_owned())
    }

    pub fn token(&self, reference: &str) -> String {
        self.links.get(reference).cloned().unwrap_or_else(|| reference.to_owned())
    }

    fn owner_of_element(&self, element_id: &str) -> Result<SubmitterIdentity> {
        Ok(SubmitterIdentity::owner(self.engine.element(element_id)?.site_id))
    }

    pub fn apply(&mut self, op: &FixtureOp) -> Result<Ack> {
        let engine = self.engine;
        let ack = |id: Option<String>, status: Option<ElementStatus>| Ack { op: op.name().to_owned(), id, status };
        match op {
            FixtureOp::Site { site_id, name, owner_email, remoderate_on_edit } => {
                let site = engine.create_site(NewSite {
                    site_id: site_id.clone(),
                    name: name.clone(),
                    owner_email: owner_email.clone(),
                    remoderate_on_edit: *remoderate_on_edit,
                })?;
                Ok(ack(Some(site.site_id), None))
            }
            FixtureOp::Section {
                site_id,
                section_id,
                parent_id,
                name,
                description,
                allowed_types,
                policy,
                open_input_enabled,
            } => {
                let section = engine.create_section(
                    NewSection {
                        site_id: site_id.clone(),
                        section_id: Some(section_id.clone()),
                        parent_id: parent_id.clone(),
                        name: name.clone(),
                        description: description.clone(),
                        allowed_types: allowed_types.clone(),
                        policy: *policy,
                        open_input_enabled: *open_input_enabled,
                    },
                    &SubmitterIdentity::owner(site_id),
                )?;
                Ok(ack(Some(section.section_id), None))
            }
            FixtureOp::Type(spec) => Ok(ack(Some(engine.register_type(spec.clone())?), None)),
            FixtureOp::SetTrusted { site_id, subject, trusted } => {
                engine.set_trusted(site_id, subject, *trusted, &SubmitterIdentity::owner(site_id))?;
                Ok(ack(Some(subject.clone()), None))
            }
            FixtureOp::Submit { reference, section_id, type_id, values, identity, email, client_addr, link_ref } => {
                let identity = match identity.class {
                    IdentityClass::Owner => match &identity.subject {
                        Some(site) => SubmitterIdentity::owner(site),
                        None => SubmitterIdentity::owner(engine.section(section_id)?.site_id),
                    },
                    IdentityClass::Anonymous => SubmitterIdentity::anonymous(
                        client_addr
                            .as_deref()
                            .map(|addr| anonymize_client(&self.salt, addr))
                            .or(identity.subject.clone()),
                    ),
                    class => SubmitterIdentity { class, subject: identity.subject.clone() },
                };
                let outcome = engine.submit(Submission {
                    section_id: section_id.clone(),
                    payload: ElementPayload { type_id: type_id.clone(), values: values.clone() },
                    identity,
                    email: email.clone(),
                })?;
                if let Some(reference) = reference {
                    self.elements.insert(reference.clone(), outcome.element.element_id.clone());
                }
                if let (Some(link_ref), Some(link)) = (link_ref, &outcome.link) {
                    self.links.insert(link_ref.clone(), link.token.clone());
                }
                Ok(ack(Some(outcome.element.element_id), Some(outcome.element.status)))
            }
            FixtureOp::Decide { element, decision } => {
                let id = self.element_id(element);
                let element = engine.decide(&id, *decision, &self.owner_of_element(&id)?)?;
                Ok(ack(Some(element.element_id), Some(element.status)))
            }
            FixtureOp::IssueLink { element, email, link_ref } => {
                let id = self.element_id(element);
                let link = engine.issue_link(&id, email, &self.owner_of_element(&id)?)?;
                if let Some(link_ref) = link_ref {
                    self.links.insert(link_ref.clone(), link.token.clone());
                }
                Ok(ack(Some(id), None))
            }
            FixtureOp::Edit { link, type_id, values } => {
                let token = self.token(link);
                let type_id = match type_id {
                    Some(t) => t.clone(),
                    None => engine.redeem(&token)?.element.type_id,
                };
                let element = engine.edit_via_link(&token, ElementPayload { type_id, values: values.clone() })?;
                Ok(ack(Some(element.element_id), Some(element.status)))
            }
            FixtureOp::EditElement { element, values } => {
                let id = self.element_id(element);
                let element = engine.edit_element(&id, values.clone(), &self.owner_of_element(&id)?)?;
                Ok(ack(Some(element.element_id), Some(element.status)))
            }
            FixtureOp::DeleteViaLink { link } => {
                let token = self.token(link);
                let id = engine.redeem(&token)?.element.element_id;
                engine.delete_via_link(&token)?;
                Ok(ack(Some(id), None))
            }
            FixtureOp::Delete { element } => {
                let id = self.element_id(element);
                engine.delete_element(&id, &self.owner_of_element(&id)?)?;
                Ok(ack(Some(id), None))
            }
            FixtureOp::Revoke { link, element } => {
                let (target, site_id) = match (link, element) {
                    (Some(link), None) => {
                        let token = self.token(link);
                        let site = self.link_site(&token)?;
                        (RevokeTarget::Token(token), site)
                    }
                    (None, Some(element)) => {
                        let id = self.element_id(element);
                        let site = match engine.links_for(&id)?.first() {
                            Some(l) => l.site_id.clone(),
                            None => engine.element(&id)?.site_id,
                        };
                        (RevokeTarget::Element(id), site)
                    }
                    _ => return Err(Error::InvalidRequest("revoke needs exactly one of link or element".into())),
                };
                let changed = engine.revoke_link(target, &SubmitterIdentity::owner(site_id))?;
                Ok(ack(Some(changed.to_string()), None))
            }
        }
    }

    fn link_site(&self, token: &str) -> Result<String> {
        let hash = crate::links::token_hash(token).ok_or(Error::UnknownToken)?;
        let record = self
            .engine
            .store()
            .get(&crate::store::Key::new(crate::store::Namespace::Link, hash))
            .ok_or(Error::UnknownToken)?;
        record.str_field("site_id").map(str::to_owned).ok_or(Error::UnknownToken)
    }

    /// Applies every operation. Domain errors are counted and skipped unless
    /// `strict`, in which case the first one is returned. `on_ack` sees each
    /// successful operation after it has been committed.
    pub fn replay<'o>(
        &mut self,
        ops: impl IntoIterator<Item = &'o FixtureOp>,
        strict: bool,
        mut on_ack: impl FnMut(usize, &Ack),
    ) -> Result<ReplayReport> {
        let mut report = ReplayReport::default();
        for (index, op) in ops.into_iter().enumerate() {
            match self.apply(op) {
                Ok(ack) => {
                    report.applied += 1;
                    on_ack(index, &ack);
                }
                Err(Error::Store(e)) => return Err(Error::Store(e)),
                Err(e) if strict => return Err(e),
                Err(e) => {
                    report.failed += 1;
                    *report.errors.entry(e.code().to_owned()).or_default() += 1;
                }
            }
        }
        Ok(report)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads one operation per line. Blank lines and lines starting with `#`
/// are skipped.
pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<FixtureOp>, FixtureError> {
    let mut ops = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let op = serde_json::from_str(trimmed).map_err(|source| FixtureError::Parse { line: index + 1, source })?;
        ops.push(op);
    }
    Ok(ops)
}

pub fn write_jsonl<'o>(ops: impl IntoIterator<Item = &'o FixtureOp>, mut writer: impl Write) -> io::Result<()> {
    for op in ops {
        serde_json::to_writer(&mut writer, op)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Shape of the adoption fixture.
pub mod adoption {
    pub const SITES: usize = 526;
    pub const SUBMITTED: usize = 7226;
    pub const ACCEPTED: usize = 4061;
    pub const TOP_SITES: usize = 41;
    pub const TOP_SITES_ACCEPTED: u64 = 3149;
    /// Accepted elements per type; the last three absorb the remainder.
    pub const ACCEPTED_PER_TYPE: [(&str, usize); 9] = [
        ("testimonial", 274),
        ("billboard", 705),
        ("qa", 560),
        ("news", 43),
        ("client_info", 65),
        ("text", 559),
        ("video", 619),
        ("link", 618),
        ("image_gallery", 618),
    ];
    pub const PENDING: usize = 950;
    pub const DECLINED: usize = SUBMITTED - ACCEPTED - PENDING;
}

const WORDS: [&str; 24] = [
    "horse", "club", "riding", "lesson", "stable", "saddle", "trail", "meadow", "autumn", "weekend", "open", "day",
    "training", "pony", "show", "jump", "field", "river", "forest", "visit", "team", "summer", "fair", "contest",
];

fn words(rng: &mut ChaCha20Rng, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn date(rng: &mut ChaCha20Rng) -> String {
    format!("2010-{:02}-{:02}", rng.random_range(1..=12), rng.random_range(1..=28))
}

fn url(rng: &mut ChaCha20Rng, path: &str) -> String {
    format!("https://media{}.example/{path}/{}", rng.random_range(1..=9), rng.random_range(1000..99999))
}

/// Valid values for one of the built-in types.
pub fn sample_values(type_id: &str, rng: &mut ChaCha20Rng) -> BTreeMap<String, Value> {
    let optional = |rng: &mut ChaCha20Rng| rng.random_bool(0.5);
    let mut values = BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        values.insert(k.to_owned(), v);
    };
    match type_id {
        "testimonial" => {
            put("author_name", json!(words(rng, 1, 2)));
            put("body", json!(words(rng, 4, 20)));
            if optional(rng) {
                put("rating", json!(rng.random_range(1..=5)));
            }
        }
        "billboard" | "news" | "text" => {
            put("title", json!(words(rng, 2, 6)));
            put("body", json!(words(rng, 5, 30)));
            if type_id == "billboard" && optional(rng) {
                put(
                    "contact",
                    json!(format!("+7 343 {:03} {:04}", rng.random_range(100..999), rng.random_range(0..9999))),
                );
            }
            if type_id == "billboard" && optional(rng) {
                put("expires_at", json!(date(rng)));
            }
            if type_id == "news" && optional(rng) {
                put("published_at", json!(date(rng)));
            }
        }
        "qa" => {
            put("question", json!(format!("{}?", words(rng, 3, 12))));
        }
        "client_info" => {
            put("firm_name", json!(words(rng, 1, 3)));
            if optional(rng) {
                put("description", json!(words(rng, 4, 16)));
            }
            if optional(rng) {
                put("url", json!(url(rng, "about")));
            }
        }
        "video" | "link" => {
            put("title", json!(words(rng, 2, 6)));
            put("url", json!(url(rng, if type_id == "video" { "watch" } else { "page" })));
            if type_id == "link" && optional(rng) {
                put("description", json!(words(rng, 3, 10)));
            }
        }
        "image_gallery" => {
            put("title", json!(words(rng, 2, 5)));
            let n = rng.random_range(1..=6);
            put("images", json!((0..n).map(|_| url(rng, "img")).collect::<Vec<_>>()));
        }
        other => panic!("no sample values for type `{other}`"),
    }
    values
}

/// The adoption fixture: 526 sites with one open section each, 7226
/// anonymous submissions and the decisions that leave 4061 of them accepted.
/// The 41 busiest sites hold 3149 accepted elements.
pub fn adoption_fixture(seed: u64) -> Vec<FixtureOp> {
    use adoption::*;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut ops = Vec::new();

    let site_ids: Vec<String> = (0..SITES).map(|i| format!("site-{i:03}")).collect();
    for site_id in &site_ids {
        ops.push(FixtureOp::Site {
            site_id: site_id.clone(),
            name: format!("Site {site_id}"),
            owner_email: format!("owner@{site_id}.example"),
            remoderate_on_edit: true,
        });
        ops.push(FixtureOp::Section {
            site_id: site_id.clone(),
            section_id: format!("{site_id}-main"),
            parent_id: None,
            name: "Add your information".into(),
            description: String::new(),
            allowed_types: BUILTIN_TYPE_IDS.iter().map(|t| (*t).to_owned()).collect(),
            policy: PolicyTier::Anyone,
            open_input_enabled: true,
        });
    }

    // accepted elements per site: 33 x 77 + 8 x 76 at the top, then 427 x 2 + 58 x 1
    let mut ranked = site_ids.clone();
    ranked.shuffle(&mut rng);
    let mut quota: Vec<(String, usize)> = Vec::with_capacity(SITES);
    for (rank, site) in ranked.iter().enumerate() {
        let n = match rank {
            0..33 => 77,
            33..41 => 76,
            41..468 => 2,
            _ => 1,
        };
        quota.push((site.clone(), n));
    }
    debug_assert_eq!(quota.iter().map(|q| q.1).sum::<usize>(), ACCEPTED);

    let mut accepted_types: Vec<&str> =
        ACCEPTED_PER_TYPE.iter().flat_map(|(t, n)| std::iter::repeat_n(*t, *n)).collect();
    accepted_types.shuffle(&mut rng);
    let mut planned: Vec<(String, &str, ElementStatus)> = Vec::with_capacity(SUBMITTED);
    let mut types = accepted_types.into_iter();
    for (site, n) in &quota {
        for _ in 0..*n {
            planned.push((site.clone(), types.next().expect("quota matches type counts"), ElementStatus::Accepted));
        }
    }
    for i in 0..(SUBMITTED - ACCEPTED) {
        let site = site_ids[rng.random_range(0..SITES)].clone();
        let type_id = BUILTIN_TYPE_IDS[rng.random_range(0..BUILTIN_TYPE_IDS.len())];
        let status = if i < PENDING { ElementStatus::Pending } else { ElementStatus::Declined };
        planned.push((site, type_id, status));
    }
    planned.shuffle(&mut rng);

    let mut decisions = Vec::new();
    for (n, (site, type_id, status)) in planned.iter().enumerate() {
        let reference = format!("e{n}");
        let email = rng.random_bool(0.3).then(|| format!("visitor{n}@mail.example"));
        let client_addr =
            format!("10.{}.{}.{}", rng.random_range(0..=255), rng.random_range(0..=255), rng.random_range(1..=254));
        ops.push(FixtureOp::Submit {
            reference: Some(reference.clone()),
            section_id: format!("{site}-main"),
            type_id: (*type_id).to_owned(),
            values: sample_values(type_id, &mut rng),
            identity: FixtureIdentity::default(),
            email,
            client_addr: Some(client_addr),
            link_ref: None,
        });
        match status {
            ElementStatus::Accepted => {
                decisions.push(FixtureOp::Decide { element: reference, decision: Decision::Accept })
            }
            ElementStatus::Declined => {
                decisions.push(FixtureOp::Decide { element: reference, decision: Decision::Decline })
            }
            ElementStatus::Pending => {}
        }
    }
    decisions.shuffle(&mut rng);
    ops.extend(decisions);
    ops
}
