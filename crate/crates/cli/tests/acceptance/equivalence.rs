//! One generated script, run once as a process per CLI command and once as
//! HTTP requests against `serve`; both stores must export the same bytes.

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Stdio};
use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use reqwest::blocking::Client;
use reqwest::Method;
use serde_json::{json, Value};

use crate::common::{command, error_code, ok};
use crate::Outcome;

const OPERATIONS: usize = 200;
const OPERATOR_KEY: &str = "op-key";

const CONFIG: &str = r#"
base_url = "https://intake.example"
operator_key = "op-key"
client_salt = "equivalence"
trust_forwarded_for = true
fsync = false
deterministic_seed = 2024

[owner_keys]
alpha = "k-alpha"
beta = "k-beta"

[notifier]
kind = "null"

[rate_limit]
capacity = 100000
refill_per_minute = 100000
"#;

fn owner_key(site: &str) -> &'static str {
    if site == "alpha" {
        "k-alpha"
    } else {
        "k-beta"
    }
}

#[derive(Debug, Clone)]
enum Op {
    Site {
        site: &'static str,
        remoderate: bool,
    },
    Section {
        site: &'static str,
        id: &'static str,
        types: &'static str,
        policy: &'static str,
    },
    Trust {
        site: &'static str,
        subject: &'static str,
    },
    Submit {
        site: &'static str,
        section: &'static str,
        type_id: &'static str,
        values: Value,
        email: Option<String>,
        client: Option<String>,
    },
    Decide {
        element: usize,
        accept: bool,
    },
    Edit {
        element: usize,
        values: Value,
    },
    Delete {
        element: usize,
    },
    Issue {
        element: usize,
    },
    LinkEdit {
        token: usize,
        values: Value,
    },
    LinkDelete {
        token: usize,
    },
    Revoke {
        token: usize,
    },
    RevokeAll {
        element: usize,
    },
}

/// `usize::MAX` stands for an element or token that never existed.
fn index(rng: &mut StdRng) -> usize {
    if rng.random_bool(0.04) {
        usize::MAX
    } else {
        rng.random::<u32>() as usize
    }
}

fn values(rng: &mut StdRng) -> Value {
    let n: u16 = rng.random();
    if rng.random_bool(0.06) {
        json!({"title": format!("Title {n}")})
    } else {
        json!({"title": format!("Title {n}"), "body": format!("Body {n}")})
    }
}

const SECTIONS: [(&str, &str, &str, &str); 4] = [
    ("alpha", "a-news", "news", "anyone"),
    ("alpha", "a-board", "billboard", "registered_users"),
    ("beta", "b-mixed", "news,billboard", "anyone"),
    ("beta", "b-owner", "news", "owner_only"),
];

fn script(seed: u64) -> Vec<Op> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut ops = vec![Op::Site { site: "alpha", remoderate: true }, Op::Site { site: "beta", remoderate: false }];
    for (site, id, types, policy) in SECTIONS {
        ops.push(Op::Section { site, id, types, policy });
    }
    ops.push(Op::Trust { site: "alpha", subject: "member-1" });
    while ops.len() < OPERATIONS {
        let op = match rng.random_range(0..100) {
            0..=39 => {
                // mostly sections that take the submission, sometimes not
                let (site, section, types, _) = SECTIONS[match rng.random_range(0..10) {
                    0..=3 => 0,
                    4..=7 => 2,
                    8 => 1,
                    _ => 3,
                }];
                let type_id = match types.split(',').collect::<Vec<_>>()[..] {
                    _ if rng.random_bool(0.05) => "testimonial",
                    [only] => only,
                    [first, second, ..] => {
                        if rng.random_bool(0.5) {
                            first
                        } else {
                            second
                        }
                    }
                    [] => "news",
                };
                Op::Submit {
                    site,
                    section,
                    type_id,
                    values: values(&mut rng),
                    email: rng.random_bool(0.4).then(|| format!("v{}@example.org", rng.random::<u16>())),
                    client: rng.random_bool(0.5).then(|| format!("203.0.113.{}", rng.random_range(1..255))),
                }
            }
            40..=57 => Op::Decide { element: index(&mut rng), accept: rng.random_bool(0.6) },
            58..=63 => Op::Edit { element: index(&mut rng), values: values(&mut rng) },
            64..=66 => Op::Delete { element: index(&mut rng) },
            67..=73 => Op::Issue { element: index(&mut rng) },
            74..=84 => Op::LinkEdit { token: index(&mut rng), values: values(&mut rng) },
            85..=89 => Op::LinkDelete { token: index(&mut rng) },
            90..=95 => Op::Revoke { token: index(&mut rng) },
            _ => Op::RevokeAll { element: index(&mut rng) },
        };
        ops.push(op);
    }
    ops
}

/// Ids and tokens as one path learned them, so later operations can refer
/// to them by position.
#[derive(Default)]
struct Refs {
    elements: Vec<(String, &'static str)>,
    tokens: Vec<(String, &'static str)>,
}

impl Refs {
    fn element(&self, i: usize) -> (String, &'static str) {
        if i == usize::MAX || self.elements.is_empty() {
            return ("00000000-0000-4000-8000-000000000000".into(), "alpha");
        }
        self.elements[i % self.elements.len()].clone()
    }

    fn token(&self, i: usize) -> (String, &'static str) {
        if i == usize::MAX || self.tokens.is_empty() {
            return ("00000000-0000-4000-8000-00000000beef".into(), "alpha");
        }
        self.tokens[i % self.tokens.len()].clone()
    }

    fn learn(&mut self, op: &Op, result: &Result<Value, String>) {
        let Ok(body) = result else { return };
        let token_of = |body: &Value| {
            body["editor_link_url"].as_str().and_then(|u| u.rsplit_once("/edit/")).map(|(_, t)| t.to_owned())
        };
        match op {
            Op::Submit { site, .. } => {
                if let Some(id) = body["element_id"].as_str() {
                    self.elements.push((id.to_owned(), site));
                }
                if let Some(token) = token_of(body) {
                    self.tokens.push((token, site));
                }
            }
            Op::Issue { element } => {
                let (_, site) = self.element(*element);
                if let Some(token) = token_of(body) {
                    self.tokens.push((token, site));
                }
            }
            _ => {}
        }
    }
}

fn cli_args(op: &Op, refs: &Refs) -> Vec<String> {
    let s = |v: &str| v.to_owned();
    match op {
        Op::Site { site, remoderate } => {
            let mut args = vec![s("init"), s("--site"), s(site), s("--owner-email"), format!("owner@{site}.example")];
            if !remoderate {
                args.push(s("--no-remoderate"));
            }
            args
        }
        Op::Section { site, id, types, policy } => vec![
            s("section"),
            s("add"),
            s("--site"),
            s(site),
            s("--name"),
            s(id),
            s("--id"),
            s(id),
            s("--types"),
            s(types),
            s("--policy"),
            policy.replace('_', "-"),
        ],
        Op::Trust { site, subject } => vec![s("site"), s("trust"), s(site), s(subject)],
        Op::Submit { site, section, type_id, values, email, client } => {
            let mut args = vec![
                s("submit"),
                s("--site"),
                s(site),
                s("--section"),
                s(section),
                s("--type"),
                s(type_id),
                s("--values"),
                values.to_string(),
            ];
            if let Some(email) = email {
                args.extend([s("--email"), email.clone()]);
            }
            if let Some(client) = client {
                args.extend([s("--client-addr"), client.clone()]);
            }
            args
        }
        Op::Decide { element, accept } => {
            vec![s("queue"), s(if *accept { "accept" } else { "decline" }), refs.element(*element).0]
        }
        Op::Edit { element, values } => {
            vec![s("element"), s("edit"), refs.element(*element).0, s("--values"), values.to_string()]
        }
        Op::Delete { element } => vec![s("element"), s("delete"), refs.element(*element).0],
        Op::Issue { element } => vec![s("link"), s("issue"), refs.element(*element).0, s("later@example.org")],
        Op::LinkEdit { token, values } => {
            vec![s("link"), s("edit"), refs.token(*token).0, s("--values"), values.to_string()]
        }
        Op::LinkDelete { token } => vec![s("link"), s("delete"), refs.token(*token).0],
        Op::Revoke { token } => vec![s("link"), s("revoke"), refs.token(*token).0],
        Op::RevokeAll { element } => vec![s("link"), s("revoke-all"), refs.element(*element).0],
    }
}

struct Request {
    method: Method,
    path: String,
    key: Option<&'static str>,
    body: Option<Value>,
    forwarded_for: Option<String>,
}

fn http_request(op: &Op, refs: &Refs) -> Request {
    let request = |method: Method, path: String, key: Option<&'static str>, body: Option<Value>| Request {
        method,
        path,
        key,
        body,
        forwarded_for: None,
    };
    match op {
        Op::Site { site, remoderate } => request(
            Method::POST,
            "/admin/sites".into(),
            Some(OPERATOR_KEY),
            Some(
                json!({"site_id": site, "owner_email": format!("owner@{site}.example"), "remoderate_on_edit": remoderate}),
            ),
        ),
        Op::Section { site, id, types, policy } => request(
            Method::POST,
            format!("/admin/sites/{site}/sections"),
            Some(owner_key(site)),
            Some(json!({
                "section_id": id,
                "name": id,
                "description": "",
                "allowed_types": types.split(',').collect::<Vec<_>>(),
                "policy": policy,
                "open_input_enabled": true,
            })),
        ),
        Op::Trust { site, subject } => request(
            Method::POST,
            format!("/admin/sites/{site}/trusted"),
            Some(owner_key(site)),
            Some(json!({"subject": subject, "trusted": true})),
        ),
        Op::Submit { site, section, type_id, values, email, client } => {
            let mut body = json!({"type_id": type_id, "values": values});
            if let Some(email) = email {
                body["email"] = json!(email);
            }
            let mut r = request(
                Method::POST,
                format!("/sites/{site}/sections/{section}/elements"),
                client.is_none().then(|| owner_key(site)),
                Some(body),
            );
            r.forwarded_for = client.clone();
            r
        }
        Op::Decide { element, accept } => {
            let (id, site) = refs.element(*element);
            let decision = if *accept { "accept" } else { "decline" };
            request(
                Method::POST,
                format!("/admin/elements/{id}/decision"),
                Some(owner_key(site)),
                Some(json!({"decision": decision})),
            )
        }
        Op::Edit { element, values } => {
            let (id, site) = refs.element(*element);
            request(
                Method::PUT,
                format!("/admin/elements/{id}"),
                Some(owner_key(site)),
                Some(json!({"values": values})),
            )
        }
        Op::Delete { element } => {
            let (id, site) = refs.element(*element);
            request(Method::DELETE, format!("/admin/elements/{id}"), Some(owner_key(site)), None)
        }
        Op::Issue { element } => {
            let (id, site) = refs.element(*element);
            request(
                Method::POST,
                format!("/admin/elements/{id}/editor-link"),
                Some(owner_key(site)),
                Some(json!({"email": "later@example.org"})),
            )
        }
        Op::LinkEdit { token, values } => {
            request(Method::PUT, format!("/edit/{}", refs.token(*token).0), None, Some(json!({"values": values})))
        }
        Op::LinkDelete { token } => request(Method::DELETE, format!("/edit/{}", refs.token(*token).0), None, None),
        Op::Revoke { token } => {
            let (token, site) = refs.token(*token);
            request(Method::DELETE, format!("/admin/editor-links/{token}"), Some(owner_key(site)), None)
        }
        Op::RevokeAll { element } => {
            let (id, site) = refs.element(*element);
            request(Method::POST, format!("/admin/elements/{id}/editor-link/revoke"), Some(owner_key(site)), None)
        }
    }
}

fn via_cli(cwd: &Path, ops: &[Op]) -> Result<Vec<Result<Value, String>>, String> {
    let mut refs = Refs::default();
    let mut outcomes = Vec::with_capacity(ops.len());
    for op in ops {
        let args = cli_args(op, &refs);
        let output = command(cwd)
            .args(["--config", "open-intake.toml", "--data-dir", "cli-data"])
            .args(&args)
            .output()
            .map_err(|e| e.to_string())?;
        let result = if output.status.success() {
            Ok(serde_json::from_slice(&output.stdout)
                .map_err(|e| format!("`{}` printed invalid JSON: {e}", args.join(" ")))?)
        } else {
            Err(error_code(&output.stderr).ok_or_else(|| {
                format!(
                    "`{}` failed without an error line: {}",
                    args.join(" "),
                    String::from_utf8_lossy(&output.stderr)
                )
            })?)
        };
        refs.learn(op, &result);
        outcomes.push(result);
    }
    Ok(outcomes)
}

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(cwd: &Path) -> Result<Server, String> {
        let mut child = command(cwd)
            .args(["--config", "open-intake.toml", "--data-dir", "http-data", "serve", "--bind", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let mut line = String::new();
        BufReader::new(child.stdout.as_mut().expect("piped")).read_line(&mut line).map_err(|e| e.to_string())?;
        let addr = line.trim().strip_prefix("listening on ").ok_or_else(|| format!("unexpected banner {line:?}"))?;
        Ok(Server { base: format!("http://{addr}"), child })
    }

    /// Stops the server the way an operator would, with `kill`.
    fn stop(mut self) -> Result<(), String> {
        let pid = self.child.id().to_string();
        let killed = std::process::Command::new("kill").args(["-TERM", &pid]).status().map_err(|e| e.to_string())?;
        if !killed.success() {
            return Err("kill failed".into());
        }
        let status = self.child.wait().map_err(|e| e.to_string())?;
        if status.success() {
            Ok(())
        } else {
            Err(format!("server exited with {status}"))
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn via_http(server: &Server, ops: &[Op]) -> Result<Vec<Result<Value, String>>, String> {
    let client = Client::builder().timeout(Duration::from_secs(30)).build().map_err(|e| e.to_string())?;
    let mut refs = Refs::default();
    let mut outcomes = Vec::with_capacity(ops.len());
    for op in ops {
        let r = http_request(op, &refs);
        let mut request = client.request(r.method.clone(), format!("{}{}", server.base, r.path));
        if let Some(key) = r.key {
            request = request.header("x-owner-key", key);
        }
        if let Some(addr) = &r.forwarded_for {
            request = request.header("x-forwarded-for", addr);
        }
        if let Some(body) = &r.body {
            request = request.json(body);
        }
        let response = request.send().map_err(|e| format!("{} {}: {e}", r.method, r.path))?;
        let status = response.status();
        let body: Value = response.json().unwrap_or(Value::Null);
        let result = if status.is_success() {
            Ok(body)
        } else {
            Err(body["code"]
                .as_str()
                .map(str::to_owned)
                .ok_or_else(|| format!("{} {} answered {status} without a code", r.method, r.path))?)
        };
        refs.learn(op, &result);
        outcomes.push(result);
    }
    Ok(outcomes)
}

fn first_difference(a: &[u8], b: &[u8]) -> String {
    let (a, b) = (String::from_utf8_lossy(a), String::from_utf8_lossy(b));
    for (n, (x, y)) in a.lines().zip(b.lines()).enumerate() {
        if x != y {
            return format!("line {}: cli {x:?} vs http {y:?}", n + 1);
        }
    }
    format!("{} vs {} lines", a.lines().count(), b.lines().count())
}

pub fn same_exports() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cwd = dir.path();
    std::fs::write(cwd.join("open-intake.toml"), CONFIG).map_err(|e| e.to_string())?;
    let ops = script(0xE0_1234);

    let cli = via_cli(cwd, &ops)?;
    let server = Server::start(cwd)?;
    let http = via_http(&server, &ops)?;
    server.stop()?;

    let outcome = |r: &Result<Value, String>| r.as_ref().err().cloned().unwrap_or_else(|| "ok".into());
    for (n, (a, b)) in cli.iter().zip(&http).enumerate() {
        if outcome(a) != outcome(b) {
            return Err(format!("op {n} {:?}: cli {} vs http {}", ops[n], outcome(a), outcome(b)));
        }
    }

    let export = |data: &str| ok(cwd, &["--config", "open-intake.toml", "--data-dir", data, "export", "-"]);
    let (a, b) = (export("cli-data")?, export("http-data")?);
    if a != b {
        return Err(format!("exports differ at {}", first_difference(&a, &b)));
    }
    let applied = cli.iter().filter(|r| r.is_ok()).count();
    let elements = String::from_utf8_lossy(&a).matches("\"namespace\": \"element\"").count();
    Ok(format!(
        "{} operations ({applied} applied, {} refused identically), {elements} elements; exports byte-identical ({} bytes)",
        ops.len(),
        ops.len() - applied,
        a.len()
    ))
}
