use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::process::Stdio;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

use crate::common::{command, ok, ok_json};
use crate::Outcome;

const KILL_POINTS: usize = 10;

pub fn kill_points() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cwd = dir.path();
    ok(cwd, &["fixture", "generate", "fixture.jsonl", "--seed", "42"])?;
    let total = std::fs::read_to_string(cwd.join("fixture.jsonl")).map_err(|e| e.to_string())?.lines().count();

    let mut rng = StdRng::seed_from_u64(0xD1E);
    let mut points: Vec<usize> = (0..KILL_POINTS).map(|_| rng.random_range(1..total)).collect();
    points.sort_unstable();

    let mut acked_total = 0;
    let mut submissions = 0;
    for (run, kill_after) in points.iter().copied().enumerate() {
        let data = format!("data-{run}");
        let mut child = command(cwd)
            .args(["--data-dir", &data, "fixture", "replay", "fixture.jsonl", "--ack"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let mut lines = BufReader::new(child.stdout.take().expect("piped")).lines();
        let mut acks = Vec::new();
        while acks.len() < kill_after {
            match lines.next() {
                Some(Ok(line)) => acks.push(line),
                _ => break,
            }
        }
        child.kill().map_err(|e| e.to_string())?;
        // whatever was already written out counts as acknowledged too
        acks.extend(lines.map_while(Result::ok));
        let status = child.wait().map_err(|e| e.to_string())?;
        if status.success() {
            return Err(format!("run {run} finished before the kill after {kill_after} acks"));
        }
        let acks: Vec<Value> = acks
            .iter()
            .filter(|l| l.starts_with('{'))
            .map(|l| serde_json::from_str(l).map_err(|e| format!("bad ack line {l:?}: {e}")))
            .collect::<Result<_, _>>()?;
        if acks.len() < kill_after {
            return Err(format!("run {run} printed {} acks before dying, wanted {kill_after}", acks.len()));
        }

        let export = ok_json(cwd, &["--data-dir", &data, "export", "-"])?;
        let lost = lost_writes(&acks, &export)?;
        if !lost.is_empty() {
            return Err(format!(
                "run {run}: killed after {} acks, {} acknowledged writes missing after restart, e.g. {}",
                acks.len(),
                lost.len(),
                lost[0]
            ));
        }
        acked_total += acks.len();
        submissions += acks.iter().filter(|a| a["op"] == "submit").count();
    }
    Ok(format!(
        "{KILL_POINTS} kills at ops {points:?} of {total}; {acked_total} acknowledged writes ({submissions} submissions) all recovered"
    ))
}

/// Acknowledged writes the reopened store does not reflect.
fn lost_writes(acks: &[Value], export: &Value) -> Result<Vec<String>, String> {
    let mut present: BTreeMap<(&str, &str), &Value> = BTreeMap::new();
    for record in export["records"].as_array().ok_or("export has no records")? {
        let namespace = record["namespace"].as_str().unwrap_or("");
        let id = record["id"].as_str().unwrap_or("");
        present.insert((namespace, id), &record["body"]);
    }

    // the last acknowledged state of each element wins
    let mut elements: BTreeMap<&str, Option<&str>> = BTreeMap::new();
    let mut others: BTreeSet<(&str, &str)> = BTreeSet::new();
    for ack in acks {
        let id = ack["id"].as_str().unwrap_or("");
        match ack["op"].as_str().unwrap_or("") {
            "site" => {
                others.insert(("site", id));
            }
            "section" => {
                others.insert(("section", id));
            }
            "type" => {
                others.insert(("type", id));
            }
            "submit" | "decide" | "edit" | "edit_element" => {
                elements.insert(id, ack["status"].as_str());
            }
            "delete" | "delete_via_link" => {
                elements.remove(id);
            }
            _ => {}
        }
    }

    let mut lost = Vec::new();
    for (namespace, id) in others {
        if !present.contains_key(&(namespace, id)) {
            lost.push(format!("{namespace} {id}"));
        }
    }
    for (id, status) in elements {
        match present.get(&("element", id)) {
            None => lost.push(format!("element {id}")),
            Some(body) if status.is_some() && body["status"].as_str() != status => {
                lost.push(format!("element {id} is {}, acknowledged {status:?}", body["status"]))
            }
            Some(_) => {}
        }
    }
    Ok(lost)
}
