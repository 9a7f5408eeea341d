use std::sync::Arc;

use open_intake_core::content::PolicyTier;
use open_intake_core::engine::{anonymize_client, ElementStatus, NewSection, NewSite, Submission, SubmitterIdentity};
use open_intake_core::store::Store;
use open_intake_core::{ElementPayload, Engine};

use crate::Outcome;

const TIERS: [PolicyTier; 4] =
    [PolicyTier::Anyone, PolicyTier::ExternalAuthenticated, PolicyTier::RegisteredUsers, PolicyTier::OwnerOnly];

/// Expected result per identity class, one column per entry of `TIERS`.
/// `None` is a refusal with `policy_denied`.
const A: Option<ElementStatus> = Some(ElementStatus::Accepted);
const P: Option<ElementStatus> = Some(ElementStatus::Pending);
const D: Option<ElementStatus> = None;
const TABLE: [(&str, [Option<ElementStatus>; 4]); 5] = [
    ("owner", [A, A, A, A]),
    ("registered_trusted", [A, A, A, D]),
    ("registered", [P, P, P, D]),
    ("external_authenticated", [P, P, D, D]),
    ("anonymous", [P, D, D, D]),
];

pub fn exhaustive() -> Outcome {
    let engine = Engine::builder(Arc::new(Store::in_memory())).deterministic(20).build().map_err(|e| e.to_string())?;
    let owner = SubmitterIdentity::owner("matrix");
    engine
        .create_site(NewSite {
            site_id: "matrix".into(),
            name: String::new(),
            owner_email: "owner@matrix.example".into(),
            remoderate_on_edit: true,
        })
        .map_err(|e| e.to_string())?;
    engine.set_trusted("matrix", "trusted-user", true, &owner).map_err(|e| e.to_string())?;
    for tier in TIERS {
        engine
            .create_section(NewSection::new("matrix", tier.as_str(), &["testimonial"], tier).id(tier.as_str()), &owner)
            .map_err(|e| e.to_string())?;
    }

    let identity = |class: &str| -> SubmitterIdentity {
        match class {
            "owner" => owner.clone(),
            "registered_trusted" => engine.registered_identity("matrix", "trusted-user").unwrap(),
            "registered" => engine.registered_identity("matrix", "plain-user").unwrap(),
            "external_authenticated" => SubmitterIdentity::external("openid:visitor"),
            _ => SubmitterIdentity::anonymous(Some(anonymize_client("salt", "192.0.2.7"))),
        }
    };

    let mut cases = 0;
    let mut mismatches = Vec::new();
    for (class, row) in TABLE {
        let who = identity(class);
        if who.class.as_str() != class {
            return Err(format!("identity for {class} came out as {}", who.class));
        }
        for (tier, want) in TIERS.into_iter().zip(row) {
            cases += 1;
            let result = engine.submit(Submission {
                section_id: tier.as_str().into(),
                payload: ElementPayload::new("testimonial").with("author_name", "M").with("body", "Matrix case"),
                identity: who.clone(),
                email: None,
            });
            let got = match result {
                Ok(outcome) => Ok(outcome.element.status),
                Err(e) => Err(e.code()),
            };
            let expected = want.ok_or("policy_denied");
            if got != expected {
                mismatches.push(format!("{class} × {}: got {got:?}, want {expected:?}", tier.as_str()));
            }
        }
    }
    if mismatches.is_empty() {
        Ok(format!("{cases}/{cases} cases match"))
    } else {
        Err(format!("{} of {cases} cases differ: {}", mismatches.len(), mismatches.join("; ")))
    }
}

/// The table above as a lookup, for other oracles.
pub fn expected(class: &str, tier: PolicyTier) -> Option<ElementStatus> {
    let (_, row) = TABLE.iter().find(|(c, _)| *c == class)?;
    row[TIERS.iter().position(|t| *t == tier)?]
}
