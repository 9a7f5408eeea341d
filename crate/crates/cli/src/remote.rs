//! Commands against a running server, used while it holds the data
//! directory lock.

use std::collections::BTreeMap;
use std::time::Duration;

use open_intake_core::engine::{Decision, NewSite};
use open_intake_core::{ElementPayload, SemanticType};
use open_intake_http::{ErrorBody, OWNER_KEY_HEADER};
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::{Method, StatusCode};
use serde_json::{json, Value};

use crate::backend::{Backend, SectionSpec};
use crate::config::CliConfig;
use crate::error::{CliError, CliResult};

enum Auth<'a> {
    None,
    /// The key configured for this site.
    Site(&'a str),
    /// Whichever configured owner key the server accepts.
    AnyOwner,
    Operator,
}

pub struct Remote {
    base: String,
    client: Client,
    owner_keys: BTreeMap<String, String>,
    operator_key: Option<String>,
}

/// Percent-encodes one path segment.
fn seg(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl Remote {
    pub fn new(config: &CliConfig) -> CliResult<Remote> {
        let client = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| CliError::new("http_client", e.to_string()))?;
        Ok(Remote {
            base: config.server_url(),
            client,
            owner_keys: config.owner_keys.clone(),
            operator_key: config.operator_key.clone(),
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn call(
        &self,
        method: Method,
        path: &str,
        auth: Auth<'_>,
        body: Option<&Value>,
        extra: &[(&str, String)],
    ) -> CliResult<Value> {
        let build = |key: Option<&str>| {
            let mut request: RequestBuilder = self.client.request(method.clone(), format!("{}{path}", self.base));
            if let Some(key) = key {
                request = request.header(OWNER_KEY_HEADER, key);
            }
            for (name, value) in extra {
                request = request.header(*name, value);
            }
            if let Some(body) = body {
                request = request.json(body);
            }
            request
        };
        match auth {
            Auth::None => self.send(build(None)),
            Auth::Site(site) => {
                let key = self.owner_keys.get(site).ok_or_else(|| {
                    CliError::new("not_authorized", format!("no owner key configured for site `{site}`"))
                })?;
                self.send(build(Some(key)))
            }
            Auth::Operator => {
                let key = self
                    .operator_key
                    .as_deref()
                    .ok_or_else(|| CliError::new("not_authorized", "no operator key configured"))?;
                self.send(build(Some(key)))
            }
            Auth::AnyOwner => {
                let mut last = CliError::new("not_authorized", "no owner keys configured");
                for key in self.owner_keys.values() {
                    match self.send(build(Some(key))) {
                        Err(e) if e.code == "not_authorized" => last = e,
                        other => return other,
                    }
                }
                Err(last)
            }
        }
    }

    fn send(&self, request: RequestBuilder) -> CliResult<Value> {
        let response =
            request.send().map_err(|e| CliError::new("server_unreachable", format!("{}: {e}", self.base)))?;
        let status = response.status();
        let bytes = response.bytes().map_err(|e| CliError::new("server_unreachable", e.to_string()))?;
        if status.is_success() {
            return if bytes.is_empty() { Ok(Value::Null) } else { Ok(serde_json::from_slice(&bytes)?) };
        }
        Err(match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => {
                let message = match &body.fields {
                    Some(fields) if !fields.is_empty() => {
                        let fields: Vec<String> =
                            fields.iter().map(|f| format!("{}: {}", f.field, f.message)).collect();
                        format!("{}: {}", body.message, fields.join("; "))
                    }
                    _ => body.message,
                };
                CliError::new(body.code, message)
            }
            Err(_) if status == StatusCode::NOT_FOUND => CliError::new("not_found", "no such route on the server"),
            Err(_) => CliError::new("server_error", format!("server answered {status}")),
        })
    }
}

impl Backend for Remote {
    fn create_site(&self, new: NewSite) -> CliResult<Value> {
        self.call(Method::POST, "/admin/sites", Auth::Operator, Some(&serde_json::to_value(new)?), &[])
    }

    fn sites(&self) -> CliResult<Value> {
        self.call(Method::GET, "/admin/sites", Auth::Operator, None, &[])
    }

    fn set_trusted(&self, site: &str, subject: &str, trusted: bool) -> CliResult<Value> {
        let body = json!({"subject": subject, "trusted": trusted});
        self.call(Method::POST, &format!("/admin/sites/{}/trusted", seg(site)), Auth::Site(site), Some(&body), &[])
    }

    fn add_section(&self, site: &str, spec: SectionSpec) -> CliResult<Value> {
        let body = serde_json::to_value(spec)?;
        self.call(Method::POST, &format!("/admin/sites/{}/sections", seg(site)), Auth::Site(site), Some(&body), &[])
    }

    fn section_tree(&self, site: &str) -> CliResult<Value> {
        self.call(Method::GET, &format!("/sites/{}/sections", seg(site)), Auth::None, None, &[])
    }

    fn delete_section(&self, site: &str, section: &str) -> CliResult<Value> {
        let path = format!("/admin/sites/{}/sections/{}", seg(site), seg(section));
        self.call(Method::DELETE, &path, Auth::Site(site), None, &[])
    }

    fn types(&self) -> CliResult<Value> {
        self.call(Method::GET, "/types", Auth::None, None, &[])
    }

    fn type_schema(&self, type_id: &str) -> CliResult<Value> {
        self.call(Method::GET, &format!("/types/{}", seg(type_id)), Auth::None, None, &[])
    }

    fn register_type(&self, spec: SemanticType) -> CliResult<Value> {
        self.call(Method::POST, "/admin/types", Auth::AnyOwner, Some(&serde_json::to_value(spec)?), &[])
    }

    fn submit(
        &self,
        site: &str,
        section: &str,
        payload: ElementPayload,
        email: Option<String>,
        client_addr: Option<String>,
    ) -> CliResult<Value> {
        let mut body = json!({"type_id": payload.type_id, "values": payload.values});
        if let Some(email) = email {
            body["email"] = Value::String(email);
        }
        let path = format!("/sites/{}/sections/{}/elements", seg(site), seg(section));
        match client_addr {
            // the server only honours this header when it trusts a proxy
            Some(addr) => self.call(Method::POST, &path, Auth::None, Some(&body), &[("x-forwarded-for", addr)]),
            None => self.call(Method::POST, &path, Auth::Site(site), Some(&body), &[]),
        }
    }

    fn queue(&self, site: &str) -> CliResult<Value> {
        self.call(Method::GET, &format!("/admin/sites/{}/queue", seg(site)), Auth::Site(site), None, &[])
    }

    fn decide(&self, element: &str, decision: Decision) -> CliResult<Value> {
        let body = json!({"decision": decision});
        self.call(Method::POST, &format!("/admin/elements/{}/decision", seg(element)), Auth::AnyOwner, Some(&body), &[])
    }

    fn element(&self, element: &str) -> CliResult<Value> {
        self.call(Method::GET, &format!("/admin/elements/{}", seg(element)), Auth::AnyOwner, None, &[])
    }

    fn edit_element(&self, element: &str, values: BTreeMap<String, Value>) -> CliResult<Value> {
        let body = json!({"values": values});
        self.call(Method::PUT, &format!("/admin/elements/{}", seg(element)), Auth::AnyOwner, Some(&body), &[])
    }

    fn delete_element(&self, element: &str) -> CliResult<Value> {
        self.call(Method::DELETE, &format!("/admin/elements/{}", seg(element)), Auth::AnyOwner, None, &[])
    }

    fn audit(&self, element: &str) -> CliResult<Value> {
        self.call(Method::GET, &format!("/admin/elements/{}/audit", seg(element)), Auth::AnyOwner, None, &[])
    }

    fn issue_link(&self, element: &str, email: &str) -> CliResult<Value> {
        let body = json!({"email": email});
        self.call(
            Method::POST,
            &format!("/admin/elements/{}/editor-link", seg(element)),
            Auth::AnyOwner,
            Some(&body),
            &[],
        )
    }

    fn redeem(&self, token: &str) -> CliResult<Value> {
        self.call(Method::GET, &format!("/edit/{}", seg(token)), Auth::None, None, &[])
    }

    fn edit_via_link(&self, token: &str, type_id: Option<String>, values: BTreeMap<String, Value>) -> CliResult<Value> {
        let mut body = json!({"values": values});
        if let Some(type_id) = type_id {
            body["type_id"] = Value::String(type_id);
        }
        self.call(Method::PUT, &format!("/edit/{}", seg(token)), Auth::None, Some(&body), &[])
    }

    fn delete_via_link(&self, token: &str) -> CliResult<Value> {
        self.call(Method::DELETE, &format!("/edit/{}", seg(token)), Auth::None, None, &[])
    }

    fn revoke_token(&self, token: &str) -> CliResult<Value> {
        self.call(Method::DELETE, &format!("/admin/editor-links/{}", seg(token)), Auth::AnyOwner, None, &[])
    }

    fn revoke_element_links(&self, element: &str) -> CliResult<Value> {
        let path = format!("/admin/elements/{}/editor-link/revoke", seg(element));
        self.call(Method::POST, &path, Auth::AnyOwner, None, &[])
    }

    fn stats(&self, site: Option<&str>, top: usize) -> CliResult<Value> {
        match site {
            Some(site) => {
                self.call(Method::GET, &format!("/admin/sites/{}/stats", seg(site)), Auth::Site(site), None, &[])
            }
            None => self.call(Method::GET, &format!("/admin/stats?top={top}"), Auth::Operator, None, &[]),
        }
    }
}
