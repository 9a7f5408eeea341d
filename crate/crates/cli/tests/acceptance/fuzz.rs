//! Random operations against the engine, shadowed by a brute-force ledger
//! that predicts every result and the exact public listings.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use open_intake_core::content::PolicyTier;
use open_intake_core::engine::{
    anonymize_client, Decision, ElementStatus, NewSection, NewSite, PageRequest, SortOrder, Submission,
    SubmitterIdentity,
};
use open_intake_core::links::RevokeTarget;
use open_intake_core::notify::{MemorySink, NotificationKind, Notifier, RetryPolicy};
use open_intake_core::store::Store;
use open_intake_core::{ElementPayload, Engine};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::matrix;
use crate::Outcome;

pub const OPERATIONS: usize = 10_000;

const SITES: [&str; 2] = ["alpha", "beta"];
const TYPES: [&str; 3] = ["news", "testimonial", "billboard"];
const CLASSES: [&str; 5] = ["owner", "registered_trusted", "registered", "external_authenticated", "anonymous"];
const PAGE_SIZES: [u32; 3] = [10, 37, 100];

struct SectionInfo {
    id: &'static str,
    site: &'static str,
    types: &'static [&'static str],
    tier: PolicyTier,
}

const SECTIONS: [SectionInfo; 4] = [
    SectionInfo { id: "a-news", site: "alpha", types: &["news", "testimonial"], tier: PolicyTier::Anyone },
    SectionInfo { id: "a-board", site: "alpha", types: &["billboard"], tier: PolicyTier::RegisteredUsers },
    SectionInfo { id: "b-news", site: "beta", types: &["news"], tier: PolicyTier::Anyone },
    SectionInfo {
        id: "b-board",
        site: "beta",
        types: &["billboard", "testimonial"],
        tier: PolicyTier::ExternalAuthenticated,
    },
];

struct Entry {
    site: &'static str,
    section: &'static str,
    type_id: &'static str,
    status: ElementStatus,
    live: bool,
}

struct Token {
    token: String,
    element: String,
    site: &'static str,
    revoked: bool,
}

#[derive(Default)]
struct Ledger {
    elements: BTreeMap<String, Entry>,
    /// Every id ever issued, deleted ones included, in submission order.
    ids: Vec<String>,
    tokens: Vec<Token>,
    remoderate: BTreeMap<&'static str, bool>,
    entered_pending: Vec<String>,
    remoderated: Vec<String>,
    links_mailed: usize,
}

impl Ledger {
    fn accepted_in(&self, section: &str) -> BTreeSet<&str> {
        self.elements
            .iter()
            .filter(|(_, e)| e.live && e.section == section && e.status == ElementStatus::Accepted)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    fn live(&self, id: &str) -> Option<&Entry> {
        self.elements.get(id).filter(|e| e.live)
    }
}

pub struct Report {
    visibility: Outcome,
    notifications: Outcome,
}

impl Report {
    pub fn visibility(&self) -> Outcome {
        self.visibility.clone()
    }

    pub fn notifications(&self) -> Outcome {
        self.notifications.clone()
    }
}

pub fn run(operations: usize, seed: u64) -> Report {
    let started = Instant::now();
    match panic::catch_unwind(AssertUnwindSafe(|| Fuzz::new(seed).run(operations))) {
        Ok(report) => {
            let took =
                |detail: String| format!("{detail}; shared fuzz run took {:.1}s", started.elapsed().as_secs_f64());
            Report { visibility: report.visibility.map(took), notifications: report.notifications.map(took) }
        }
        Err(_) => {
            let failed = Err("fuzz run panicked".to_owned());
            Report { visibility: failed.clone(), notifications: failed }
        }
    }
}

type Expect = Result<(), &'static str>;

struct Fuzz {
    engine: Engine,
    sink: Arc<MemorySink>,
    rng: StdRng,
    ledger: Ledger,
    violations: Vec<String>,
    applied: usize,
    listings: usize,
}

fn text(rng: &mut StdRng) -> String {
    format!("text {}", rng.random::<u32>())
}

fn payload(rng: &mut StdRng, type_id: &str, valid: bool) -> ElementPayload {
    let mut payload = ElementPayload::new(type_id);
    match type_id {
        "testimonial" => payload = payload.with("author_name", text(rng)),
        _ => payload = payload.with("title", text(rng)),
    }
    if valid {
        payload = payload.with("body", text(rng));
    }
    payload
}

fn code<T>(result: open_intake_core::Result<T>) -> Result<T, &'static str> {
    result.map_err(|e| e.code())
}

impl Fuzz {
    fn new(seed: u64) -> Fuzz {
        let sink = Arc::new(MemorySink::new());
        let notifier = Arc::new(Notifier::new(sink.clone(), RetryPolicy::default()));
        let engine = Engine::builder(Arc::new(Store::in_memory()))
            .base_url("https://intake.example/")
            .notifications(notifier)
            .deterministic(seed)
            .build()
            .expect("engine");
        let mut ledger = Ledger::default();
        for (site, remoderate) in SITES.into_iter().zip([true, false]) {
            engine
                .create_site(NewSite {
                    site_id: site.into(),
                    name: String::new(),
                    owner_email: format!("owner@{site}.example"),
                    remoderate_on_edit: remoderate,
                })
                .expect("site");
            engine.set_trusted(site, "trusted-1", true, &SubmitterIdentity::owner(site)).expect("trust");
            ledger.remoderate.insert(site, remoderate);
        }
        for s in &SECTIONS {
            engine
                .create_section(
                    NewSection::new(s.site, s.id, s.types, s.tier).id(s.id),
                    &SubmitterIdentity::owner(s.site),
                )
                .expect("section");
        }
        Fuzz { engine, sink, rng: StdRng::seed_from_u64(seed), ledger, violations: Vec::new(), applied: 0, listings: 0 }
    }

    fn identity(&mut self, class: &str, site: &str) -> SubmitterIdentity {
        match class {
            "owner" => SubmitterIdentity::owner(site),
            "registered_trusted" => self.engine.registered_identity(site, "trusted-1").expect("identity"),
            "registered" => self.engine.registered_identity(site, "plain-1").expect("identity"),
            "external_authenticated" => SubmitterIdentity::external(format!("openid:{}", self.rng.random_range(0..5))),
            _ => {
                let addr = format!("198.51.100.{}", self.rng.random_range(1..255));
                SubmitterIdentity::anonymous(Some(anonymize_client("salt", &addr)))
            }
        }
    }

    /// A known id most of the time, otherwise one that never existed.
    fn pick_element(&mut self) -> String {
        if self.ledger.ids.is_empty() || self.rng.random_bool(0.03) {
            return format!("missing-{}", self.rng.random::<u16>());
        }
        let i = self.rng.random_range(0..self.ledger.ids.len());
        self.ledger.ids[i].clone()
    }

    fn pick_token(&mut self) -> Option<usize> {
        if self.ledger.tokens.is_empty() || self.rng.random_bool(0.03) {
            return None;
        }
        Some(self.rng.random_range(0..self.ledger.tokens.len()))
    }

    fn site_of(&self, element: &str) -> &'static str {
        self.ledger.elements.get(element).map_or(SITES[0], |e| e.site)
    }

    /// The element's owner, or now and then the other site's owner.
    fn owner_for(&mut self, site: &'static str) -> (SubmitterIdentity, bool) {
        if self.rng.random_bool(0.1) {
            let other = if site == SITES[0] { SITES[1] } else { SITES[0] };
            (SubmitterIdentity::owner(other), false)
        } else {
            (SubmitterIdentity::owner(site), true)
        }
    }

    fn record(&mut self, what: &str, got: Result<(), &'static str>, want: Expect) {
        if got.is_ok() {
            self.applied += 1;
        }
        if got != want && self.violations.len() < 20 {
            self.violations.push(format!("{what}: got {got:?}, want {want:?}"));
        }
    }

    fn run(mut self, operations: usize) -> Report {
        for step in 0..operations {
            let roll = self.rng.random_range(0..100);
            match roll {
                0..=29 => self.submit(),
                30..=49 => self.decide(),
                50..=61 => self.edit_via_link(),
                62..=66 => self.delete_via_link(),
                67..=72 => self.owner_edit(),
                73..=77 => self.owner_delete(),
                78..=85 => self.issue_link(),
                86..=92 => self.revoke(),
                93..=94 => self.toggle_remoderation(),
                _ => self.redeem(),
            }
            self.check_listings(step);
        }
        let visibility = if self.violations.is_empty() {
            Ok(format!(
                "{operations} operations ({} applied), {} paged listings checked, 0 violations",
                self.applied, self.listings
            ))
        } else {
            Err(format!("{} violations, first: {}", self.violations.len(), self.violations.join(" | ")))
        };
        let notifications = self.notifications();
        Report { visibility, notifications }
    }

    fn submit(&mut self) {
        let section = &SECTIONS[self.rng.random_range(0..SECTIONS.len())];
        let class = CLASSES[self.rng.random_range(0..CLASSES.len())];
        let foreign_owner = class == "owner" && self.rng.random_bool(0.1);
        let identity = if foreign_owner {
            SubmitterIdentity::owner(if section.site == SITES[0] { SITES[1] } else { SITES[0] })
        } else {
            self.identity(class, section.site)
        };
        let type_id = TYPES[self.rng.random_range(0..TYPES.len())];
        let valid = self.rng.random_bool(0.9);
        let email = match self.rng.random_range(0..100) {
            0..=39 => Some(format!("visitor{}@example.org", self.rng.random::<u16>())),
            40..=42 => Some("not-an-address".to_owned()),
            _ => None,
        };
        let email_ok = email.as_deref().is_none_or(|e| e.contains('@'));

        let status = matrix::expected(class, section.tier);
        let want: Expect = if foreign_owner || status.is_none() {
            Err("policy_denied")
        } else if !section.types.contains(&type_id) {
            Err("type_not_allowed")
        } else if !valid {
            Err("validation_failed")
        } else if !email_ok {
            Err("invalid_email")
        } else {
            Ok(())
        };
        let result = code(self.engine.submit(Submission {
            section_id: section.id.into(),
            payload: payload(&mut self.rng, type_id, valid),
            identity,
            email: email.clone(),
        }));
        if let Ok(outcome) = &result {
            let id = outcome.element.element_id.clone();
            let status = status.unwrap_or(ElementStatus::Pending);
            if outcome.element.status != status {
                self.violations
                    .push(format!("submit by {class} started {:?}, want {status:?}", outcome.element.status));
            }
            if status == ElementStatus::Pending {
                self.ledger.entered_pending.push(id.clone());
            }
            match (&outcome.link, email.is_some()) {
                (Some(link), true) => {
                    self.ledger.tokens.push(Token {
                        token: link.token.clone(),
                        element: id.clone(),
                        site: section.site,
                        revoked: false,
                    });
                    self.ledger.links_mailed += 1;
                }
                (None, false) => {}
                (link, _) => self.violations.push(format!("submit link {:?} with email {email:?}", link.is_some())),
            }
            self.ledger
                .elements
                .insert(id.clone(), Entry { site: section.site, section: section.id, type_id, status, live: true });
            self.ledger.ids.push(id);
        }
        self.record("submit", result.map(|_| ()), want);
    }

    fn decide(&mut self) {
        let id = self.pick_element();
        let (actor, rightful) = self.owner_for(self.site_of(&id));
        let decision = if self.rng.random_bool(0.6) { Decision::Accept } else { Decision::Decline };
        let want: Expect = match self.ledger.live(&id) {
            None => Err("unknown_element"),
            Some(_) if !rightful => Err("not_authorized"),
            Some(_) => Ok(()),
        };
        let result = code(self.engine.decide(&id, decision, &actor)).map(|_| ());
        if want.is_ok() && result.is_ok() {
            self.ledger.elements.get_mut(&id).expect("live").status = decision.target_status();
        }
        self.record("decide", result, want);
    }

    /// Expected failure for a token, before any payload checks.
    fn token_state(&self, index: Option<usize>) -> Expect {
        let Some(i) = index else { return Err("unknown_token") };
        let token = &self.ledger.tokens[i];
        if token.revoked {
            Err("revoked")
        } else if self.ledger.live(&token.element).is_none() {
            Err("element_gone")
        } else {
            Ok(())
        }
    }

    fn token_text(&mut self, index: Option<usize>) -> String {
        match index {
            Some(i) => self.ledger.tokens[i].token.clone(),
            None => uuid::Uuid::from_bytes(self.rng.random()).hyphenated().to_string(),
        }
    }

    fn edit_via_link(&mut self) {
        let index = self.pick_token();
        let token = self.token_text(index);
        let current = index.and_then(|i| self.ledger.elements.get(&self.ledger.tokens[i].element)).map(|e| e.type_id);
        let type_id = match current {
            Some(t) if self.rng.random_bool(0.9) => t,
            _ => TYPES[self.rng.random_range(0..TYPES.len())],
        };
        let valid = self.rng.random_bool(0.9);
        let want = self.token_state(index).and_then(|()| {
            if Some(type_id) != current {
                Err("type_change_forbidden")
            } else if !valid {
                Err("validation_failed")
            } else {
                Ok(())
            }
        });
        let result = code(self.engine.edit_via_link(&token, payload(&mut self.rng, type_id, valid))).map(|_| ());
        if want.is_ok() && result.is_ok() {
            let element = self.ledger.tokens[index.expect("known token")].element.clone();
            let remoderate = self.ledger.remoderate[self.site_of(&element)];
            let entry = self.ledger.elements.get_mut(&element).expect("live");
            if entry.status == ElementStatus::Accepted && remoderate {
                entry.status = ElementStatus::Pending;
                self.ledger.remoderated.push(element);
            }
        }
        self.record("edit_via_link", result, want);
    }

    fn delete_via_link(&mut self) {
        let index = self.pick_token();
        let token = self.token_text(index);
        let want = self.token_state(index);
        let result = code(self.engine.delete_via_link(&token));
        if want.is_ok() && result.is_ok() {
            let element = self.ledger.tokens[index.expect("known token")].element.clone();
            self.ledger.elements.get_mut(&element).expect("live").live = false;
        }
        self.record("delete_via_link", result, want);
    }

    fn owner_edit(&mut self) {
        let id = self.pick_element();
        let (actor, rightful) = self.owner_for(self.site_of(&id));
        let type_id = self.ledger.elements.get(&id).map_or("news", |e| e.type_id);
        let valid = self.rng.random_bool(0.9);
        let want: Expect = match self.ledger.live(&id) {
            None => Err("unknown_element"),
            Some(_) if !rightful => Err("not_authorized"),
            Some(_) if !valid => Err("validation_failed"),
            Some(_) => Ok(()),
        };
        let values = payload(&mut self.rng, type_id, valid).values;
        let result = code(self.engine.edit_element(&id, values, &actor)).map(|_| ());
        self.record("edit_element", result, want);
    }

    fn owner_delete(&mut self) {
        let id = self.pick_element();
        let (actor, rightful) = self.owner_for(self.site_of(&id));
        let want: Expect = match self.ledger.live(&id) {
            None => Err("unknown_element"),
            Some(_) if !rightful => Err("not_authorized"),
            Some(_) => Ok(()),
        };
        let result = code(self.engine.delete_element(&id, &actor));
        if want.is_ok() && result.is_ok() {
            self.ledger.elements.get_mut(&id).expect("live").live = false;
        }
        self.record("delete_element", result, want);
    }

    fn issue_link(&mut self) {
        let id = self.pick_element();
        let site = self.site_of(&id);
        let (actor, rightful) = self.owner_for(site);
        let want: Expect = match self.ledger.live(&id) {
            None => Err("unknown_element"),
            Some(_) if !rightful => Err("not_authorized"),
            Some(_) => Ok(()),
        };
        let result = code(self.engine.issue_link(&id, "later@example.org", &actor));
        if let (Ok(link), Ok(())) = (&result, want) {
            self.ledger.tokens.push(Token { token: link.token.clone(), element: id, site, revoked: false });
            self.ledger.links_mailed += 1;
        }
        self.record("issue_link", result.map(|_| ()), want);
    }

    fn revoke(&mut self) {
        if self.rng.random_bool(0.7) {
            let index = self.pick_token();
            let token = self.token_text(index);
            let site = index.map_or(SITES[0], |i| self.ledger.tokens[i].site);
            let (actor, rightful) = self.owner_for(site);
            let want: Expect = match index {
                None => Err("unknown_token"),
                Some(_) if !rightful => Err("not_authorized"),
                Some(_) => Ok(()),
            };
            let result = code(self.engine.revoke_link(RevokeTarget::Token(token), &actor)).map(|_| ());
            if let (Some(i), Ok(()), Ok(())) = (index, want, result) {
                self.ledger.tokens[i].revoked = true;
            }
            self.record("revoke token", result, want);
        } else {
            let id = self.pick_element();
            let (actor, rightful) = self.owner_for(self.site_of(&id));
            let has_links = self.ledger.tokens.iter().any(|t| t.element == id);
            let want: Expect = if !has_links && self.ledger.live(&id).is_none() {
                Err("unknown_element")
            } else if !rightful {
                Err("not_authorized")
            } else {
                Ok(())
            };
            let result = code(self.engine.revoke_link(RevokeTarget::Element(id.clone()), &actor)).map(|_| ());
            if want.is_ok() && result.is_ok() {
                self.ledger.tokens.iter_mut().filter(|t| t.element == id).for_each(|t| t.revoked = true);
            }
            self.record("revoke element", result, want);
        }
    }

    fn toggle_remoderation(&mut self) {
        let site = SITES[self.rng.random_range(0..SITES.len())];
        let enabled = self.rng.random_bool(0.5);
        let result = code(self.engine.set_remoderate_on_edit(site, enabled, &SubmitterIdentity::owner(site)));
        if result.is_ok() {
            self.ledger.remoderate.insert(site, enabled);
        }
        self.record("set_remoderate_on_edit", result.map(|_| ()), Ok(()));
    }

    fn redeem(&mut self) {
        let index = self.pick_token();
        let token = self.token_text(index);
        let want = self.token_state(index);
        let result = code(self.engine.redeem(&token));
        if let (Ok(capability), Some(i)) = (&result, index) {
            if capability.element.element_id != self.ledger.tokens[i].element {
                self.violations.push("token redeemed to another element".to_owned());
            }
        }
        self.record("redeem", result.map(|_| ()), want);
    }

    /// Pages through every section's public listing and compares it with
    /// the ledger.
    fn check_listings(&mut self, step: usize) {
        for section in &SECTIONS {
            let size = PAGE_SIZES[self.rng.random_range(0..PAGE_SIZES.len())];
            let sort = if self.rng.random_bool(0.5) { SortOrder::NewestFirst } else { SortOrder::OldestFirst };
            let mut listed = Vec::new();
            let mut page = 0;
            loop {
                let result = self.engine.list_public(section.id, PageRequest::new(page, size, sort)).expect("listing");
                self.listings += 1;
                let done = result.items.len() < size as usize || u64::from(page + 1) * u64::from(size) >= result.total;
                listed.extend(result.items);
                if done {
                    break;
                }
                page += 1;
            }
            let expected = self.ledger.accepted_in(section.id);
            let ids: BTreeSet<&str> = listed.iter().map(|e| e.element_id.as_str()).collect();
            let ordered = listed.windows(2).all(|w| {
                let by_time = match sort {
                    SortOrder::NewestFirst => w[0].created_at >= w[1].created_at,
                    SortOrder::OldestFirst => w[0].created_at <= w[1].created_at,
                };
                by_time && (w[0].created_at != w[1].created_at || w[0].element_id < w[1].element_id)
            });
            let wrong = ids.len() != listed.len() || ids != expected || !ordered;
            if wrong && self.violations.len() < 20 {
                self.violations.push(format!(
                    "step {step}: {} lists {} elements ({} distinct, ordered {ordered}), ledger has {}",
                    section.id,
                    listed.len(),
                    ids.len(),
                    expected.len()
                ));
            }
        }
    }

    fn notifications(&self) -> Outcome {
        let delivered = self.sink.delivered();
        let keys = |kind: NotificationKind| -> Vec<String> {
            let mut keys: Vec<String> =
                delivered.iter().filter(|e| e.kind == kind).map(|e| e.dedup_key.clone()).collect();
            keys.sort();
            keys
        };
        let mut want_pending: Vec<String> =
            self.ledger.entered_pending.iter().map(|id| format!("pending_submission:{id}")).collect();
        want_pending.sort();
        let pending = keys(NotificationKind::PendingSubmission);
        if pending != want_pending {
            let got: BTreeSet<&String> = pending.iter().collect();
            let want: BTreeSet<&String> = want_pending.iter().collect();
            return Err(format!(
                "{} pending_submission events for {} pending submissions ({} missing, {} unexpected)",
                pending.len(),
                want_pending.len(),
                want.difference(&got).count(),
                got.difference(&want).count()
            ));
        }

        // edits that send an accepted element back carry the element id first
        let mut remoderated: Vec<String> = keys(NotificationKind::Remoderation)
            .iter()
            .filter_map(|k| k.strip_prefix("remoderation:")?.rsplit_once(':').map(|(id, _)| id.to_owned()))
            .collect();
        remoderated.sort();
        let mut want_remoderated = self.ledger.remoderated.clone();
        want_remoderated.sort();
        if remoderated != want_remoderated {
            return Err(format!(
                "{} remoderation events for {} edits that re-entered the queue",
                remoderated.len(),
                want_remoderated.len()
            ));
        }
        let links = keys(NotificationKind::EditorLink).len();
        if links != self.ledger.links_mailed {
            return Err(format!("{links} editor-link mails for {} issued links", self.ledger.links_mailed));
        }
        if self.ledger.entered_pending.is_empty() || self.ledger.remoderated.is_empty() {
            return Err("the run never exercised the queue".to_owned());
        }
        Ok(format!(
            "{} pending_submission events match {} pending submissions one-to-one; {} remoderation events, {} link mails",
            pending.len(),
            want_pending.len(),
            remoderated.len(),
            links
        ))
    }
}
