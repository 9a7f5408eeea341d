//! Operator configuration: a TOML file, then `OPEN_INTAKE_*` environment
//! variables, then command-line flags, each layer overriding the last.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use open_intake_core::notify::SmtpSettings;
use open_intake_http::{ApiConfig, RateLimitConfig};
use serde::{Deserialize, Serialize};

pub const DEFAULT_CONFIG_FILE: &str = "open-intake.toml";
pub const ENV_PREFIX: &str = "OPEN_INTAKE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub data_dir: PathBuf,
    pub bind: String,
    /// Public URL used in editor links and moderation mail.
    pub base_url: String,
    /// Where commands reach a running server. Derived from `bind` if unset.
    pub server_url: Option<String>,
    pub owner_keys: BTreeMap<String, String>,
    pub operator_key: Option<String>,
    pub notifier: NotifierConfig,
    /// Default for sites created by `init`.
    pub remoderate_on_edit: bool,
    pub rate_limit: RateLimitConfig,
    pub client_salt: String,
    pub trust_forwarded_for: bool,
    pub admin_origins: Vec<String>,
    /// fsync every commit. Turning this off trades durability for speed.
    pub fsync: bool,
    /// Reproducible ids, tokens and timestamps, for tests only.
    pub deterministic_seed: Option<u64>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            data_dir: PathBuf::from("open-intake-data"),
            bind: "127.0.0.1:8080".into(),
            base_url: "http://127.0.0.1:8080".into(),
            server_url: None,
            owner_keys: BTreeMap::new(),
            operator_key: None,
            notifier: NotifierConfig::default(),
            remoderate_on_edit: true,
            rate_limit: RateLimitConfig::default(),
            client_salt: String::new(),
            trust_forwarded_for: false,
            admin_origins: Vec::new(),
            fsync: true,
            deterministic_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NotifierConfig {
    Null,
    /// JSON lines appended to a file; `data_dir/outbox.jsonl` by default.
    Outbox {
        #[serde(default)]
        path: Option<PathBuf>,
    },
    Smtp(SmtpSettings),
}

impl Default for NotifierConfig {
    fn default() -> Self {
        NotifierConfig::Outbox { path: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{var}: {message}")]
    Env { var: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub bind: Option<String>,
    pub base_url: Option<String>,
    pub server_url: Option<String>,
    pub seed: Option<u64>,
}

impl CliConfig {
    /// Builds the effective configuration. `env` looks up variables by full
    /// name so tests need not touch the process environment.
    pub fn load(flags: &Overrides, env: impl Fn(&str) -> Option<String>) -> Result<CliConfig, ConfigError> {
        let var = |name: &str| env(&format!("{ENV_PREFIX}{name}")).filter(|v| !v.is_empty());

        let explicit = flags.config.clone().or_else(|| var("CONFIG").map(PathBuf::from));
        let mut config = match explicit {
            Some(path) => Self::from_file(&path)?,
            None if Path::new(DEFAULT_CONFIG_FILE).exists() => Self::from_file(Path::new(DEFAULT_CONFIG_FILE))?,
            None => CliConfig::default(),
        };
        config.apply_env(&var)?;

        if let Some(dir) = &flags.data_dir {
            config.data_dir = dir.clone();
        }
        if let Some(bind) = &flags.bind {
            config.bind = bind.clone();
        }
        if let Some(url) = &flags.base_url {
            config.base_url = url.clone();
        }
        if let Some(url) = &flags.server_url {
            config.server_url = Some(url.clone());
        }
        if let Some(seed) = flags.seed {
            config.deterministic_seed = Some(seed);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<CliConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.to_owned(), source })
    }

    fn apply_env(&mut self, var: &dyn Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parsed<T: std::str::FromStr>(name: &str, value: String) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::Env {
                var: format!("{ENV_PREFIX}{name}"),
                message: format!("cannot parse `{value}`"),
            })
        }

        if let Some(v) = var("DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var("BIND") {
            self.bind = v;
        }
        if let Some(v) = var("BASE_URL") {
            self.base_url = v;
        }
        if let Some(v) = var("SERVER_URL") {
            self.server_url = Some(v);
        }
        if let Some(v) = var("OPERATOR_KEY") {
            self.operator_key = Some(v);
        }
        if let Some(v) = var("CLIENT_SALT") {
            self.client_salt = v;
        }
        if let Some(v) = var("REMODERATE_ON_EDIT") {
            self.remoderate_on_edit = parsed("REMODERATE_ON_EDIT", v)?;
        }
        if let Some(v) = var("FSYNC") {
            self.fsync = parsed("FSYNC", v)?;
        }
        if let Some(v) = var("DETERMINISTIC_SEED") {
            self.deterministic_seed = Some(parsed("DETERMINISTIC_SEED", v)?);
        }
        // site=key pairs, comma separated; merged over the file's keys
        if let Some(v) = var("OWNER_KEYS") {
            for pair in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (site, key) = pair.split_once('=').ok_or_else(|| ConfigError::Env {
                    var: format!("{ENV_PREFIX}OWNER_KEYS"),
                    message: format!("expected site=key, got `{pair}`"),
                })?;
                self.owner_keys.insert(site.trim().to_owned(), key.trim().to_owned());
            }
        }
        // null | outbox | outbox:<path>
        if let Some(v) = var("NOTIFIER") {
            self.notifier = match v.split_once(':') {
                None if v == "null" => NotifierConfig::Null,
                None if v == "outbox" => NotifierConfig::Outbox { path: None },
                Some(("outbox", path)) => NotifierConfig::Outbox { path: Some(PathBuf::from(path)) },
                _ => {
                    return Err(ConfigError::Env {
                        var: format!("{ENV_PREFIX}NOTIFIER"),
                        message: format!(
                            "expected null, outbox or outbox:<path>, got `{v}` (configure smtp in the file)"
                        ),
                    })
                }
            };
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.data_dir.as_os_str().is_empty() {
            return Err(ConfigError::Invalid("data_dir is empty".into()));
        }
        if self.bind.trim().is_empty() {
            return Err(ConfigError::Invalid("bind is empty".into()));
        }
        check_url("base_url", &self.base_url)?;
        if let Some(url) = &self.server_url {
            check_url("server_url", url)?;
        }
        for (site, key) in &self.owner_keys {
            if key.is_empty() {
                return Err(ConfigError::Invalid(format!("owner key for site `{site}` is empty")));
            }
        }
        if self.rate_limit.capacity == 0 {
            return Err(ConfigError::Invalid("rate_limit.capacity must be at least 1".into()));
        }
        Ok(())
    }

    pub fn outbox_path(&self) -> Option<PathBuf> {
        match &self.notifier {
            NotifierConfig::Outbox { path } => Some(path.clone().unwrap_or_else(|| self.data_dir.join("outbox.jsonl"))),
            _ => None,
        }
    }

    /// Base URL of a running server: `server_url`, or `bind` with wildcard
    /// hosts replaced by loopback.
    pub fn server_url(&self) -> String {
        if let Some(url) = &self.server_url {
            return url.trim_end_matches('/').to_owned();
        }
        let bind = self.bind.replace("0.0.0.0", "127.0.0.1").replace("[::]", "[::1]");
        format!("http://{bind}")
    }

    pub fn api_config(&self) -> ApiConfig {
        ApiConfig {
            owner_keys: self.owner_keys.clone(),
            operator_key: self.operator_key.clone(),
            rate_limit: self.rate_limit,
            admin_origins: self.admin_origins.clone(),
            client_salt: self.client_salt.clone(),
            trust_forwarded_for: self.trust_forwarded_for,
        }
    }
}

fn check_url(field: &str, value: &str) -> Result<(), ConfigError> {
    let url = reqwest::Url::parse(value).map_err(|e| ConfigError::Invalid(format!("{field} `{value}`: {e}")))?;
    if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
        return Err(ConfigError::Invalid(format!("{field} `{value}` must be an http(s) URL with a host")));
    }
    Ok(())
}
