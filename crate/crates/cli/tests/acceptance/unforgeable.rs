use std::sync::Arc;

use open_intake_core::content::PolicyTier;
use open_intake_core::engine::{NewSection, NewSite, Submission, SubmitterIdentity};
use open_intake_core::store::Store;
use open_intake_core::{ElementPayload, Engine};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::common::check;
use crate::Outcome;

const LIVE_TOKENS: usize = 1_000;
const ATTEMPTS: usize = 1_000_000;

pub fn random_redemptions() -> Outcome {
    // tokens come from the operating system's generator here, as in production
    let engine = Engine::builder(Arc::new(Store::in_memory())).build().map_err(|e| e.to_string())?;
    let owner = SubmitterIdentity::owner("tokens");
    engine
        .create_site(NewSite {
            site_id: "tokens".into(),
            name: String::new(),
            owner_email: "owner@tokens.example".into(),
            remoderate_on_edit: true,
        })
        .map_err(|e| e.to_string())?;
    engine
        .create_section(NewSection::new("tokens", "board", &["billboard"], PolicyTier::Anyone).id("board"), &owner)
        .map_err(|e| e.to_string())?;

    let mut issued = Vec::with_capacity(LIVE_TOKENS);
    for i in 0..LIVE_TOKENS {
        let outcome = engine
            .submit(Submission {
                section_id: "board".into(),
                payload: ElementPayload::new("billboard").with("title", format!("Ad {i}")).with("body", "For sale"),
                identity: SubmitterIdentity::anonymous(None),
                email: Some(format!("seller{i}@example.org")),
            })
            .map_err(|e| e.to_string())?;
        let link = outcome.link.ok_or("submission with an email got no link")?;
        issued.push((link.token, outcome.element.element_id));
    }

    for (token, element) in &issued {
        let capability = engine.redeem(token).map_err(|e| format!("issued token refused: {e}"))?;
        check(&capability.element.element_id == element, || "a token redeemed to another element".to_owned())?;
    }

    let mut rng = StdRng::seed_from_u64(0x007E_571D);
    let mut successes = 0;
    for _ in 0..ATTEMPTS {
        let guess = uuid::Uuid::from_bytes(rng.random()).hyphenated().to_string();
        if engine.redeem(&guess).is_ok() {
            successes += 1;
        }
    }
    check(successes == 0, || format!("{successes} of {ATTEMPTS} random guesses redeemed"))?;
    Ok(format!("{LIVE_TOKENS} live tokens each redeem to their own element; {ATTEMPTS} random guesses, 0 successes"))
}
