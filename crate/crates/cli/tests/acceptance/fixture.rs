use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde_json::Value;

use crate::common::{check, ok, ok_json};
use crate::Outcome;

const TOTAL: u64 = 7226;
const ACCEPTED: u64 = 4061;
const SITES: usize = 526;
const TOP: usize = 41;
const TOP_ACCEPTED: u64 = 3149;
const RATE: f64 = 0.5620;
const RATE_TOLERANCE: f64 = 0.0001;
const BUDGET: Duration = Duration::from_secs(60);
const PER_TYPE: [(&str, u64); 6] =
    [("testimonial", 274), ("billboard", 705), ("qa", 560), ("news", 43), ("client_info", 65), ("text", 559)];

pub fn replay_and_stats() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cwd = dir.path();
    ok(cwd, &["fixture", "generate", "adoption.jsonl", "--seed", "42"])?;

    let started = Instant::now();
    ok(cwd, &["--data-dir", "data", "fixture", "replay", "adoption.jsonl", "--strict"])?;
    let stats = ok_json(cwd, &["--data-dir", "data", "stats", "--json", "--top", "41"])?;
    let elapsed = started.elapsed();

    let field = |name: &str| stats[name].as_u64().ok_or_else(|| format!("stats has no `{name}`"));
    let total = field("total_submitted")?;
    let accepted = field("accepted")?;
    let rate = stats["acceptance_rate"].as_f64().ok_or("stats has no acceptance_rate")?;
    check(total == TOTAL, || format!("total_submitted {total}, want {TOTAL}"))?;
    check(accepted == ACCEPTED, || format!("accepted {accepted}, want {ACCEPTED}"))?;
    check((rate - RATE).abs() <= RATE_TOLERANCE, || format!("acceptance_rate {rate}, want {RATE} ± {RATE_TOLERANCE}"))?;
    for (type_id, want) in PER_TYPE {
        let got = stats["per_type"][type_id]["accepted"].as_u64().unwrap_or(0);
        check(got == want, || format!("{type_id} accepted {got}, want {want}"))?;
    }
    let top: Vec<u64> = stats["top_sites"]
        .as_array()
        .ok_or("stats has no top_sites")?
        .iter()
        .map(|s| s["accepted"].as_u64().unwrap_or(0))
        .collect();
    check(top.len() == TOP, || format!("{} top sites, want {TOP}", top.len()))?;
    let top_sum: u64 = top.iter().sum();
    check(top_sum == TOP_ACCEPTED, || format!("top {TOP} sites hold {top_sum} accepted, want {TOP_ACCEPTED}"))?;
    check(elapsed < BUDGET, || format!("replay and stats took {elapsed:?}"))?;

    recount(&serde_json::from_slice(&ok(cwd, &["--data-dir", "data", "export", "-"])?).map_err(|e| e.to_string())?)?;

    Ok(format!(
        "total {total}, accepted {accepted}, rate {rate:.4}, top {TOP} = {top_sum}, {SITES} sites, replay+stats {:.1}s",
        elapsed.as_secs_f64()
    ))
}

/// Counts the raw exported records without going through the engine.
fn recount(export: &Value) -> Result<(), String> {
    let records = export["records"].as_array().ok_or("export has no records")?;
    let mut sites = 0;
    let mut total = 0u64;
    let mut accepted_by_type: BTreeMap<&str, u64> = BTreeMap::new();
    let mut accepted_by_site: BTreeMap<&str, u64> = BTreeMap::new();
    for record in records {
        match record["namespace"].as_str() {
            Some("site") => sites += 1,
            Some("element") => {
                total += 1;
                let body = &record["body"];
                if body["status"] == "accepted" {
                    *accepted_by_type.entry(body["type_id"].as_str().unwrap_or("")).or_default() += 1;
                    *accepted_by_site.entry(body["site_id"].as_str().unwrap_or("")).or_default() += 1;
                }
            }
            _ => {}
        }
    }
    let accepted: u64 = accepted_by_type.values().sum();
    check(sites == SITES, || format!("export holds {sites} sites, want {SITES}"))?;
    check(total == TOTAL, || format!("export holds {total} elements, want {TOTAL}"))?;
    check(accepted == ACCEPTED, || format!("export holds {accepted} accepted, want {ACCEPTED}"))?;
    for (type_id, want) in PER_TYPE {
        let got = accepted_by_type.get(type_id).copied().unwrap_or(0);
        check(got == want, || format!("export: {type_id} accepted {got}, want {want}"))?;
    }
    let mut per_site: Vec<u64> = accepted_by_site.into_values().collect();
    per_site.sort_unstable_by(|a, b| b.cmp(a));
    let top: u64 = per_site.iter().take(TOP).sum();
    check(top == TOP_ACCEPTED, || format!("export: top {TOP} sites hold {top} accepted, want {TOP_ACCEPTED}"))
}
