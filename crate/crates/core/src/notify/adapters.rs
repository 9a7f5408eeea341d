use std::collections::VecDeque;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use lettre::message::Mailbox;
use lettre::transport::smtp::authentication::Credentials;
use lettre::{Message, SmtpTransport, Transport};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{AdapterError, DeliveryAdapter, NotificationEvent};

/// Discards everything. For deployments that do not send mail.
#[derive(Debug, Default)]
pub struct NullAdapter;

impl DeliveryAdapter for NullAdapter {
    fn deliver(&self, _event: &NotificationEvent) -> Result<(), AdapterError> {
        Ok(())
    }
}

/// Keeps delivered events in memory; can be told to fail the next N attempts.
#[derive(Debug, Default)]
pub struct MemorySink {
    delivered: Mutex<Vec<NotificationEvent>>,
    failures: Mutex<VecDeque<String>>,
    attempts: Mutex<u64>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    /// The next `n` delivery attempts fail with `reason`.
    pub fn fail_next(&self, n: usize, reason: &str) {
        let mut failures = self.failures.lock();
        failures.extend(std::iter::repeat_n(reason.to_owned(), n));
    }

    pub fn delivered(&self) -> Vec<NotificationEvent> {
        self.delivered.lock().clone()
    }

    pub fn attempts(&self) -> u64 {
        *self.attempts.lock()
    }
}

impl DeliveryAdapter for MemorySink {
    fn deliver(&self, event: &NotificationEvent) -> Result<(), AdapterError> {
        *self.attempts.lock() += 1;
        if let Some(reason) = self.failures.lock().pop_front() {
            return Err(AdapterError(reason));
        }
        self.delivered.lock().push(event.clone());
        Ok(())
    }
}

/// One line of the outbox file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboxLine {
    pub recipient: String,
    pub subject_line: String,
    pub body: String,
    pub dedup_key: String,
    pub at: DateTime<Utc>,
}

/// Appends each message as a JSON line to a local file.
#[derive(Debug)]
pub struct OutboxFile {
    path: PathBuf,
    file: Mutex<File>,
}

impl OutboxFile {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(OutboxFile { path, file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Parses every complete line of an outbox file.
    pub fn read_lines(path: impl AsRef<Path>) -> std::io::Result<Vec<OutboxLine>> {
        let text = match fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        Ok(text.lines().filter_map(|line| serde_json::from_str(line).ok()).collect())
    }
}

impl DeliveryAdapter for OutboxFile {
    fn deliver(&self, event: &NotificationEvent) -> Result<(), AdapterError> {
        let line = OutboxLine {
            recipient: event.recipient.clone(),
            subject_line: event.subject_line.clone(),
            body: event.body.clone(),
            dedup_key: event.dedup_key.clone(),
            at: event.created_at,
        };
        let mut bytes = serde_json::to_vec(&line).map_err(|e| AdapterError(e.to_string()))?;
        bytes.push(b'\n');
        self.file.lock().write_all(&bytes).map_err(|e| AdapterError(format!("outbox write: {e}")))
    }

    fn delivered_keys(&self) -> Vec<String> {
        match Self::read_lines(&self.path) {
            Ok(lines) => lines.into_iter().map(|l| l.dedup_key).collect(),
            Err(e) => {
                tracing::warn!(path = %self.path.display(), error = %e, "could not read outbox");
                Vec::new()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtpSettings {
    pub host: String,
    #[serde(default = "default_smtp_port")]
    pub port: u16,
    #[serde(default)]
    pub username: Option<String>,
    #[serde(default)]
    pub password: Option<String>,
    pub from: String,
}

fn default_smtp_port() -> u16 {
    25
}

/// Hands messages to an SMTP relay (plain connection; run it on a trusted
/// network or behind a local relay that handles TLS).
pub struct SmtpAdapter {
    transport: SmtpTransport,
    from: Mailbox,
}

impl SmtpAdapter {
    pub fn new(settings: &SmtpSettings) -> Result<Self, AdapterError> {
        let from: Mailbox = settings.from.parse().map_err(|e| AdapterError(format!("invalid from address: {e}")))?;
        let mut builder = SmtpTransport::builder_dangerous(settings.host.as_str()).port(settings.port);
        if let (Some(user), Some(pass)) = (&settings.username, &settings.password) {
            builder = builder.credentials(Credentials::new(user.clone(), pass.clone()));
        }
        Ok(SmtpAdapter { transport: builder.build(), from })
    }
}

impl DeliveryAdapter for SmtpAdapter {
    fn deliver(&self, event: &NotificationEvent) -> Result<(), AdapterError> {
        let to: Mailbox = event.recipient.parse().map_err(|e| AdapterError(format!("invalid recipient: {e}")))?;
        let message = Message::builder()
            .from(self.from.clone())
            .to(to)
            .subject(event.subject_line.clone())
            .body(event.body.clone())
            .map_err(|e| AdapterError(e.to_string()))?;
        self.transport.send(&message).map(|_| ()).map_err(|e| AdapterError(format!("smtp: {e}")))
    }
}
