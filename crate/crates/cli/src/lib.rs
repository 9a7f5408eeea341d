//! The `open-intake` operator tool.
//!
//! Commands open the data directory directly. When a server already holds
//! its lock, commands that have an HTTP equivalent are sent to that server
//! instead; bulk commands (`fixture replay`, `export`, `import`, `purge`)
//! need the server stopped.

pub mod backend;
pub mod config;
pub mod error;
pub mod remote;
mod serve;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use open_intake_core::content::PolicyTier;
use open_intake_core::engine::{Decision, NewSite, QueueStats, SiteTally};
use open_intake_core::fixture::{adoption_fixture, read_jsonl, write_jsonl, Replayer};
use open_intake_core::store::StoreExport;
use open_intake_core::{ElementPayload, SemanticType};
use serde::Deserialize;
use serde_json::Value;

use crate::backend::{Backend, Local, SectionSpec};
use crate::config::{CliConfig, Overrides};
use crate::error::{CliError, CliResult};
use crate::remote::Remote;

#[derive(Debug, Parser)]
#[command(name = "open-intake", version, about = "Open input content intake: sections, moderation queue, editor links")]
pub struct Cli {
    /// Configuration file (default ./open-intake.toml when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Listen address for `serve`.
    #[arg(long, global = true)]
    pub bind: Option<String>,
    /// Public URL used in editor links and moderation mail.
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    /// Running server to use when the data directory is locked.
    #[arg(long, global = true)]
    pub server_url: Option<String>,
    /// Reproducible ids and timestamps (tests only).
    #[arg(long, global = true, hide = true)]
    pub deterministic_seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a site.
    Init {
        #[arg(long)]
        site: String,
        #[arg(long, default_value = "")]
        name: String,
        #[arg(long)]
        owner_email: String,
        /// Keep accepted elements published when their submitter edits them.
        #[arg(long)]
        no_remoderate: bool,
    },
    /// Run the HTTP API until interrupted.
    Serve,
    #[command(subcommand)]
    Site(SiteCommand),
    #[command(subcommand)]
    Section(SectionCommand),
    #[command(subcommand)]
    Type(TypeCommand),
    /// Add an element, as the site owner or as an anonymous visitor.
    Submit(SubmitArgs),
    #[command(subcommand)]
    Queue(QueueCommand),
    #[command(subcommand)]
    Element(ElementCommand),
    #[command(subcommand)]
    Link(LinkCommand),
    /// Submission counts, globally or for one site.
    Stats {
        #[arg(long)]
        site: Option<String>,
        /// Also rank the N sites with the most accepted elements.
        #[arg(long, default_value_t = 0)]
        top: usize,
        #[arg(long)]
        json: bool,
    },
    #[command(subcommand)]
    Fixture(FixtureCommand),
    /// Write the whole store as JSON (`-` for standard output).
    Export { file: PathBuf },
    /// Load an export into an empty store.
    Import { file: PathBuf },
    /// Delete declined elements.
    Purge {
        #[arg(long)]
        site: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SiteCommand {
    List,
    /// Let a registered user publish without moderation.
    Trust {
        site: String,
        subject: String,
        #[arg(long)]
        revoke: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Anyone,
    ExternalAuthenticated,
    RegisteredUsers,
    OwnerOnly,
}

impl From<PolicyArg> for PolicyTier {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Anyone => PolicyTier::Anyone,
            PolicyArg::ExternalAuthenticated => PolicyTier::ExternalAuthenticated,
            PolicyArg::RegisteredUsers => PolicyTier::RegisteredUsers,
            PolicyArg::OwnerOnly => PolicyTier::OwnerOnly,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SectionCommand {
    Add {
        #[arg(long)]
        site: String,
        #[arg(long)]
        name: String,
        /// Comma-separated type ids accepted by the section.
        #[arg(long, value_delimiter = ',', required = true)]
        types: Vec<String>,
        #[arg(long, value_enum, default_value = "anyone")]
        policy: PolicyArg,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        parent: Option<String>,
        #[arg(long, default_value = "")]
        description: String,
        /// Create with open input switched off.
        #[arg(long)]
        closed: bool,
    },
    List {
        #[arg(long)]
        site: String,
    },
    Delete {
        #[arg(long)]
        site: String,
        section: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum TypeCommand {
    List,
    Show {
        type_id: String,
    },
    /// Register a custom type from a JSON schema file (`-` for stdin).
    Register {
        file: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SubmitArgs {
    #[arg(long)]
    pub site: String,
    #[arg(long)]
    pub section: String,
    #[arg(long = "type")]
    pub type_id: String,
    /// Field values as a JSON object.
    #[arg(long)]
    pub values: String,
    /// Send an editor link to this address.
    #[arg(long)]
    pub email: Option<String>,
    /// Submit anonymously as a visitor from this address.
    #[arg(long)]
    pub client_addr: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum QueueCommand {
    /// Pending elements of a site, oldest first.
    List {
        #[arg(long)]
        site: String,
    },
    Accept {
        element: String,
    },
    Decline {
        element: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum ElementCommand {
    Show {
        element: String,
    },
    /// Replace an element's values as its owner.
    Edit {
        element: String,
        #[arg(long)]
        values: String,
    },
    Delete {
        element: String,
    },
    Audit {
        element: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum LinkCommand {
    /// Mail a new editor link for an element.
    Issue {
        element: String,
        email: String,
    },
    Show {
        token: String,
    },
    Edit {
        token: String,
        #[arg(long)]
        values: String,
        #[arg(long = "type")]
        type_id: Option<String>,
    },
    Delete {
        token: String,
    },
    Revoke {
        token: String,
    },
    /// Revoke every link of an element.
    RevokeAll {
        element: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum FixtureCommand {
    /// Apply a JSON-lines operation script.
    Replay {
        file: PathBuf,
        /// Print one JSON line per applied operation once it is durable.
        #[arg(long)]
        ack: bool,
        /// Stop at the first failing operation.
        #[arg(long)]
        strict: bool,
    },
    /// Write the adoption fixture script.
    Generate {
        file: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            config: self.config.clone(),
            data_dir: self.data_dir.clone(),
            bind: self.bind.clone(),
            base_url: self.base_url.clone(),
            server_url: self.server_url.clone(),
            seed: self.deterministic_seed,
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Init { .. } => "init",
            Command::Serve => "serve",
            Command::Site(_) => "site",
            Command::Section(_) => "section",
            Command::Type(_) => "type",
            Command::Submit(_) => "submit",
            Command::Queue(_) => "queue",
            Command::Element(_) => "element",
            Command::Link(_) => "link",
            Command::Stats { .. } => "stats",
            Command::Fixture(_) => "fixture",
            Command::Export { .. } => "export",
            Command::Import { .. } => "import",
            Command::Purge { .. } => "purge",
        }
    }
}

/// Runs one command with configuration from the process environment.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let config = CliConfig::load(&cli.overrides(), |k| std::env::var(k).ok())?;
    execute(&config, cli.command, out)
}

pub fn execute(config: &CliConfig, command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Serve => serve::serve(config, out),
        Command::Fixture(FixtureCommand::Generate { file, seed }) => {
            let ops = adoption_fixture(seed);
            let mut writer = io::BufWriter::new(fs::File::create(&file)?);
            write_jsonl(&ops, &mut writer)?;
            writeln!(out, "wrote {} operations to {}", ops.len(), file.display())?;
            Ok(())
        }
        Command::Fixture(FixtureCommand::Replay { file, ack, strict }) => {
            let local = local_only(config, "fixture replay")?;
            replay(&local, &file, ack, strict, out)
        }
        Command::Export { file } => {
            let local = local_only(config, "export")?;
            let bytes = local.engine().store().export().to_json_bytes()?;
            if file.as_os_str() == "-" {
                out.write_all(&bytes)?;
            } else {
                write_atomically(&file, &bytes)?;
                writeln!(
                    out,
                    "exported {} records to {}",
                    local.engine().store().export().records.len(),
                    file.display()
                )?;
            }
            Ok(())
        }
        Command::Import { file } => {
            let local = local_only(config, "import")?;
            let export: StoreExport = serde_json::from_reader(BufReader::new(open_input(&file)?))?;
            let count = local.engine().store().import(export)?;
            writeln!(out, "imported {count} records")?;
            Ok(())
        }
        Command::Purge { site } => {
            let local = local_only(config, "purge")?;
            let purged = local.engine().purge_declined(site.as_deref())?;
            writeln!(out, "purged {purged} declined elements")?;
            Ok(())
        }
        command => {
            let name = command.name();
            let backend = connect(config, name)?;
            dispatch(backend.as_ref(), config, command, out)
        }
    }
}

fn local_only(config: &CliConfig, command: &str) -> CliResult<Local> {
    Local::open(config).map_err(|e| {
        if e.code == "store_locked" {
            CliError::new(e.code, format!("{}; `{command}` needs direct access, stop the server first", e.message))
        } else {
            e
        }
    })
}

fn connect(config: &CliConfig, command: &str) -> CliResult<Box<dyn Backend>> {
    match Local::open(config) {
        Ok(local) => Ok(Box::new(local)),
        Err(e) if e.code == "store_locked" => {
            tracing::info!(command, server = %config.server_url(), "data directory is locked; using the running server");
            Ok(Box::new(Remote::new(config)?))
        }
        Err(e) => Err(e),
    }
}

fn dispatch(backend: &dyn Backend, config: &CliConfig, command: Command, out: &mut dyn Write) -> CliResult<()> {
    let value = match command {
        Command::Init { site, name, owner_email, no_remoderate } => {
            let created = backend.create_site(NewSite {
                site_id: site.clone(),
                name,
                owner_email,
                remoderate_on_edit: config.remoderate_on_edit && !no_remoderate,
            })?;
            if !config.owner_keys.contains_key(&site) {
                tracing::warn!(%site, "no owner key configured for this site; the admin API will refuse it");
            }
            created
        }
        Command::Site(SiteCommand::List) => backend.sites()?,
        Command::Site(SiteCommand::Trust { site, subject, revoke }) => backend.set_trusted(&site, &subject, !revoke)?,
        Command::Section(SectionCommand::Add { site, name, types, policy, id, parent, description, closed }) => {
            let spec = SectionSpec {
                section_id: id,
                parent_id: parent,
                name,
                description,
                allowed_types: types
                    .into_iter()
                    .map(|t| t.trim().to_owned())
                    .filter(|t| !t.is_empty())
                    .collect::<BTreeSet<_>>(),
                policy: policy.into(),
                open_input_enabled: !closed,
            };
            backend.add_section(&site, spec)?
        }
        Command::Section(SectionCommand::List { site }) => backend.section_tree(&site)?,
        Command::Section(SectionCommand::Delete { site, section }) => backend.delete_section(&site, &section)?,
        Command::Type(TypeCommand::List) => backend.types()?,
        Command::Type(TypeCommand::Show { type_id }) => backend.type_schema(&type_id)?,
        Command::Type(TypeCommand::Register { file }) => {
            let spec: SemanticType = serde_json::from_reader(BufReader::new(open_input(&file)?))?;
            backend.register_type(spec)?
        }
        Command::Submit(args) => {
            let payload = ElementPayload { type_id: args.type_id, values: parse_values(&args.values)? };
            backend.submit(&args.site, &args.section, payload, args.email, args.client_addr)?
        }
        Command::Queue(QueueCommand::List { site }) => backend.queue(&site)?,
        Command::Queue(QueueCommand::Accept { element }) => backend.decide(&element, Decision::Accept)?,
        Command::Queue(QueueCommand::Decline { element }) => backend.decide(&element, Decision::Decline)?,
        Command::Element(ElementCommand::Show { element }) => backend.element(&element)?,
        Command::Element(ElementCommand::Edit { element, values }) => {
            backend.edit_element(&element, parse_values(&values)?)?
        }
        Command::Element(ElementCommand::Delete { element }) => backend.delete_element(&element)?,
        Command::Element(ElementCommand::Audit { element }) => backend.audit(&element)?,
        Command::Link(LinkCommand::Issue { element, email }) => backend.issue_link(&element, &email)?,
        Command::Link(LinkCommand::Show { token }) => backend.redeem(&token)?,
        Command::Link(LinkCommand::Edit { token, values, type_id }) => {
            backend.edit_via_link(&token, type_id, parse_values(&values)?)?
        }
        Command::Link(LinkCommand::Delete { token }) => backend.delete_via_link(&token)?,
        Command::Link(LinkCommand::Revoke { token }) => backend.revoke_token(&token)?,
        Command::Link(LinkCommand::RevokeAll { element }) => backend.revoke_element_links(&element)?,
        Command::Stats { site, top, json } => {
            let value = backend.stats(site.as_deref(), top)?;
            if !json {
                return print_stats(&value, out);
            }
            value
        }
        Command::Serve
        | Command::Fixture(_)
        | Command::Export { .. }
        | Command::Import { .. }
        | Command::Purge { .. } => unreachable!("handled before connecting"),
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
    Ok(())
}

fn parse_values(text: &str) -> CliResult<BTreeMap<String, Value>> {
    serde_json::from_str(text)
        .map_err(|e| CliError::new("invalid_json", format!("--values must be a JSON object: {e}")))
}

fn open_input(path: &Path) -> CliResult<Box<dyn Read>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdin()));
    }
    Ok(Box::new(fs::File::open(path).map_err(|e| CliError::new("io_error", format!("{}: {e}", path.display())))?))
}

fn write_atomically(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn replay(local: &Local, file: &Path, ack: bool, strict: bool, out: &mut dyn Write) -> CliResult<()> {
    let ops =
        read_jsonl(BufReader::new(open_input(file)?)).map_err(|e| CliError::new("invalid_fixture", e.to_string()))?;
    let mut replayer = Replayer::new(local.engine(), local.salt());
    let mut write_error = None;
    let report = replayer.replay(&ops, strict, |_, applied| {
        if !ack || write_error.is_some() {
            return;
        }
        let written = serde_json::to_string(applied)
            .map_err(io::Error::other)
            .and_then(|line| writeln!(out, "{line}"))
            .and_then(|_| out.flush());
        if let Err(e) = written {
            write_error = Some(e);
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    let report = report?;
    writeln!(out, "replayed {} operations: {} applied, {} failed", ops.len(), report.applied, report.failed)?;
    for (code, count) in &report.errors {
        writeln!(out, "  {code}: {count}")?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct StatsView {
    #[serde(flatten)]
    stats: QueueStats,
    #[serde(default)]
    top_sites: Vec<SiteTally>,
}

fn print_stats(value: &Value, out: &mut dyn Write) -> CliResult<()> {
    let view: StatsView = serde_json::from_value(value.clone())?;
    let s = &view.stats;
    writeln!(out, "total_submitted: {}", s.total_submitted)?;
    writeln!(out, "accepted: {}", s.accepted)?;
    writeln!(out, "declined: {}", s.declined)?;
    writeln!(out, "pending: {}", s.pending)?;
    writeln!(out, "acceptance_rate: {:.4}", s.acceptance_rate)?;
    if !s.per_type.is_empty() {
        writeln!(out, "per_type:")?;
        for (type_id, tally) in &s.per_type {
            writeln!(out, "  {type_id}: {} submitted, {} accepted", tally.submitted, tally.accepted)?;
        }
    }
    if !view.top_sites.is_empty() {
        let accepted: u64 = view.top_sites.iter().map(|t| t.accepted).sum();
        writeln!(out, "top_sites: {} sites, {accepted} accepted", view.top_sites.len())?;
        for tally in &view.top_sites {
            writeln!(out, "  {}: {} submitted, {} accepted", tally.site_id, tally.submitted, tally.accepted)?;
        }
    }
    Ok(())
}
