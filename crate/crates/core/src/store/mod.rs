//! Durable record store.
//!
//! Records live in an in-memory index keyed by `(namespace, id)`. Every
//! committed batch of mutations is appended to a journal as one frame before
//! it becomes visible, and the journal is periodically folded into a snapshot.
//! All mutation goes through [`Store::commit`], whose three operations carry
//! compare-and-set preconditions; `put_new`, `compare_and_set` and
//! `compare_and_delete` are single-mutation shorthands.

mod journal;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, TryLockError};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use journal::{Frame, FrameOp, Journal};

pub use journal::SyncMode;

pub const EXPORT_FORMAT_VERSION: u32 = 1;
const LOCK_FILE: &str = "LOCK";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Namespace {
    Site,
    Section,
    Type,
    Element,
    Link,
    Audit,
}

impl Namespace {
    pub const ALL: [Namespace; 6] =
        [Namespace::Site, Namespace::Section, Namespace::Type, Namespace::Element, Namespace::Link, Namespace::Audit];

    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Site => "site",
            Namespace::Section => "section",
            Namespace::Type => "type",
            Namespace::Element => "element",
            Namespace::Link => "link",
            Namespace::Audit => "audit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key {
    pub namespace: Namespace,
    pub id: String,
}

impl Key {
    pub fn new(namespace: Namespace, id: impl Into<String>) -> Self {
        Key { namespace, id: id.into() }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.namespace.as_str(), self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub namespace: Namespace,
    pub id: String,
    pub version: u64,
    pub body: Arc<Value>,
}

impl Record {
    pub fn key(&self) -> Key {
        Key::new(self.namespace, self.id.clone())
    }

    /// Top-level string field of the body, if present.
    pub fn str_field(&self, field: &str) -> Option<&str> {
        self.body.get(field).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone)]
pub enum Mutation {
    /// Create a record that must not exist yet; it gets version 1.
    Insert { key: Key, body: Value },
    /// Replace a record whose version must equal `expected_version`.
    Update { key: Key, expected_version: u64, body: Value },
    /// Remove a record whose version must equal `expected_version`.
    Delete { key: Key, expected_version: u64 },
}

impl Mutation {
    fn key(&self) -> &Key {
        match self {
            Mutation::Insert { key, .. } | Mutation::Update { key, .. } | Mutation::Delete { key, .. } => key,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanOrder {
    Ascending,
    Descending,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("record {0} already exists")]
    AlreadyExists(Key),
    #[error("record {0} not found")]
    NotFound(Key),
    #[error("version conflict on {key}: expected {expected}, found {actual}")]
    VersionConflict { key: Key, expected: u64, actual: u64 },
    #[error("record {0} appears twice in one batch")]
    DuplicateKeyInBatch(Key),
    #[error("data directory {0} is locked by another process")]
    Locked(PathBuf),
    #[error("import requires an empty store")]
    NotEmpty,
    #[error("unsupported export format version {0}")]
    UnsupportedFormat(u32),
    #[error("store is unusable after a failed journal write")]
    Poisoned,
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("serialization error: {0}")]
    Codec(#[from] serde_json::Error),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::AlreadyExists(_) => "already_exists",
            StoreError::NotFound(_) => "not_found",
            StoreError::VersionConflict { .. } => "version_conflict",
            StoreError::DuplicateKeyInBatch(_) => "duplicate_key_in_batch",
            StoreError::Locked(_) => "store_locked",
            StoreError::NotEmpty => "store_not_empty",
            StoreError::UnsupportedFormat(_) => "unsupported_format",
            StoreError::Poisoned => "store_poisoned",
            StoreError::Corrupt(_) => "store_corrupt",
            StoreError::Io(_) => "io_error",
            StoreError::Codec(_) => "codec_error",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StoreOptions {
    pub sync: SyncMode,
    /// Fold the journal into a fresh snapshot after this many frames.
    pub snapshot_every: u64,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { sync: SyncMode::Always, snapshot_every: 50_000 }
    }
}

/// Full dump of a store, sorted by key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreExport {
    pub format_version: u32,
    pub records: Vec<Record>,
}

impl StoreExport {
    pub fn to_json_bytes(&self) -> Result<Vec<u8>, StoreError> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    generation: u64,
    seq: u64,
    records: Vec<Record>,
}

#[derive(Default)]
struct Index {
    records: BTreeMap<Namespace, BTreeMap<String, Record>>,
    /// Sequence number of the last applied frame.
    seq: u64,
}

impl Index {
    fn get(&self, key: &Key) -> Option<&Record> {
        self.records.get(&key.namespace)?.get(&key.id)
    }

    fn apply(&mut self, ops: Vec<FrameOp>) {
        for op in ops {
            match op {
                FrameOp::Put(record) => {
                    self.records.entry(record.namespace).or_default().insert(record.id.clone(), record);
                }
                FrameOp::Del { namespace, id } => {
                    if let Some(ns) = self.records.get_mut(&namespace) {
                        ns.remove(&id);
                    }
                }
            }
        }
    }

    fn all_records(&self) -> Vec<Record> {
        self.records.values().flat_map(|ns| ns.values().cloned()).collect()
    }

    fn is_empty(&self) -> bool {
        self.records.values().all(BTreeMap::is_empty)
    }
}

struct Writer {
    journal: Option<Journal>,
    generation: u64,
    poisoned: bool,
}

pub struct Store {
    index: RwLock<Index>,
    writer: Mutex<Writer>,
    dir: Option<PathBuf>,
    options: StoreOptions,
    _lock: Option<File>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).field("seq", &self.commit_seq()).finish()
    }
}

impl Store {
    /// A store with no backing files, for tests and dry runs.
    pub fn in_memory() -> Self {
        Store {
            index: RwLock::new(Index::default()),
            writer: Mutex::new(Writer { journal: None, generation: 0, poisoned: false }),
            dir: None,
            options: StoreOptions::default(),
            _lock: None,
        }
    }

    /// Opens (or creates) a store in `dir`, taking an exclusive lock on the
    /// directory and replaying the snapshot and journal.
    pub fn open(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;

        let lock = File::options().create(true).truncate(false).write(true).open(dir.join(LOCK_FILE))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(StoreError::Locked(dir)),
            Err(TryLockError::Error(e)) => return Err(e.into()),
        }

        let mut index = Index::default();
        let mut generation = 0;
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        if snapshot_path.exists() {
            let snapshot: Snapshot = serde_json::from_slice(&fs::read(&snapshot_path)?)
                .map_err(|e| StoreError::Corrupt(format!("snapshot: {e}")))?;
            generation = snapshot.generation;
            index.seq = snapshot.seq;
            index.apply(snapshot.records.into_iter().map(FrameOp::Put).collect());
        }

        let (journal, frames) = Journal::open(&journal_path(&dir, generation), options.sync)?;
        for frame in frames {
            if frame.seq <= index.seq {
                continue;
            }
            if frame.seq != index.seq + 1 {
                return Err(StoreError::Corrupt(format!("journal jumps from frame {} to {}", index.seq, frame.seq)));
            }
            index.seq = frame.seq;
            index.apply(frame.ops);
        }
        remove_stale_files(&dir, generation)?;

        tracing::debug!(dir = %dir.display(), seq = index.seq, generation, "store opened");
        Ok(Store {
            index: RwLock::new(index),
            writer: Mutex::new(Writer { journal: Some(journal), generation, poisoned: false }),
            dir: Some(dir),
            options,
            _lock: Some(lock),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Number of frames committed over the store's lifetime.
    pub fn commit_seq(&self) -> u64 {
        self.index.read().seq
    }

    pub fn get(&self, key: &Key) -> Option<Record> {
        self.index.read().get(key).cloned()
    }

    pub fn len(&self, namespace: Namespace) -> usize {
        self.index.read().records.get(&namespace).map_or(0, BTreeMap::len)
    }

    pub fn is_empty(&self) -> bool {
        self.index.read().is_empty()
    }

    /// Records of `namespace` matching `filter`, ordered by id. The result is
    /// a snapshot of the state at the moment the scan started.
    pub fn scan(&self, namespace: Namespace, filter: impl Fn(&Record) -> bool, order: ScanOrder) -> Vec<Record> {
        let index = self.index.read();
        let Some(records) = index.records.get(&namespace) else {
            return Vec::new();
        };
        let mut out: Vec<Record> = records.values().filter(|r| filter(r)).cloned().collect();
        if order == ScanOrder::Descending {
            out.reverse();
        }
        out
    }

    /// Greatest id currently stored in `namespace`.
    pub fn last_id(&self, namespace: Namespace) -> Option<String> {
        let index = self.index.read();
        index.records.get(&namespace)?.keys().next_back().cloned()
    }

    pub fn put_new(&self, key: Key, body: Value) -> Result<u64, StoreError> {
        Ok(self.commit(vec![Mutation::Insert { key, body }])?[0])
    }

    pub fn compare_and_set(&self, key: Key, expected_version: u64, body: Value) -> Result<u64, StoreError> {
        Ok(self.commit(vec![Mutation::Update { key, expected_version, body }])?[0])
    }

    pub fn compare_and_delete(&self, key: Key, expected_version: u64) -> Result<(), StoreError> {
        self.commit(vec![Mutation::Delete { key, expected_version }]).map(|_| ())
    }

    /// Applies `mutations` atomically: either every precondition holds and
    /// the whole batch becomes durable and visible, or nothing changes.
    /// Returns the resulting version per mutation (0 for deletes).
    pub fn commit(&self, mutations: Vec<Mutation>) -> Result<Vec<u64>, StoreError> {
        if mutations.is_empty() {
            return Ok(Vec::new());
        }
        let mut writer = self.writer.lock();
        if writer.poisoned {
            return Err(StoreError::Poisoned);
        }

        let (ops, versions, seq) = {
            let index = self.index.read();
            let (ops, versions) = plan(&index, mutations)?;
            (ops, versions, index.seq + 1)
        };

        let frame = Frame { seq, ops };
        if let Some(journal) = writer.journal.as_mut() {
            if let Err(e) = journal.append(&frame) {
                if !journal.rollback_tail() {
                    writer.poisoned = true;
                }
                return Err(e);
            }
        }

        {
            let mut index = self.index.write();
            index.seq = seq;
            index.apply(frame.ops);
        }

        if writer.journal.as_ref().is_some_and(|j| j.frames() >= self.options.snapshot_every) {
            if let Err(e) = self.compact_locked(&mut writer) {
                // the frame itself is durable; the next commit retries compaction
                tracing::warn!(error = %e, "journal compaction failed");
            }
        }
        Ok(versions)
    }

    /// Folds the journal into a new snapshot generation.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut writer = self.writer.lock();
        if writer.poisoned {
            return Err(StoreError::Poisoned);
        }
        self.compact_locked(&mut writer)
    }

    fn compact_locked(&self, writer: &mut Writer) -> Result<(), StoreError> {
        let Some(dir) = self.dir.as_deref() else {
            return Ok(());
        };
        let next_generation = writer.generation + 1;
        let snapshot = {
            let index = self.index.read();
            Snapshot { generation: next_generation, seq: index.seq, records: index.all_records() }
        };
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut file = File::create(&tmp)?;
            serde_json::to_writer(&mut file, &snapshot)?;
            file.sync_all()?;
        }
        let new_journal_path = journal_path(dir, next_generation);
        let (journal, _) = Journal::open(&new_journal_path, self.options.sync)?;
        fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
        sync_dir(dir)?;

        let old = journal_path(dir, writer.generation);
        writer.journal = Some(journal);
        writer.generation = next_generation;
        if let Err(e) = fs::remove_file(&old) {
            tracing::warn!(path = %old.display(), error = %e, "could not remove old journal");
        }
        tracing::debug!(generation = next_generation, seq = snapshot.seq, "journal compacted");
        Ok(())
    }

    pub fn export(&self) -> StoreExport {
        StoreExport { format_version: EXPORT_FORMAT_VERSION, records: self.index.read().all_records() }
    }

    /// Loads a dump into an empty store, preserving record versions.
    pub fn import(&self, export: StoreExport) -> Result<usize, StoreError> {
        if export.format_version != EXPORT_FORMAT_VERSION {
            return Err(StoreError::UnsupportedFormat(export.format_version));
        }
        let mut writer = self.writer.lock();
        if writer.poisoned {
            return Err(StoreError::Poisoned);
        }
        let seq = {
            let index = self.index.read();
            if !index.is_empty() {
                return Err(StoreError::NotEmpty);
            }
            index.seq + 1
        };
        let mut seen = std::collections::HashSet::new();
        for record in &export.records {
            if record.version == 0 {
                return Err(StoreError::Corrupt(format!("record {} has version 0", record.key())));
            }
            if !seen.insert(record.key()) {
                return Err(StoreError::DuplicateKeyInBatch(record.key()));
            }
        }
        let count = export.records.len();
        let frame = Frame { seq, ops: export.records.into_iter().map(FrameOp::Put).collect() };
        if let Some(journal) = writer.journal.as_mut() {
            if let Err(e) = journal.append(&frame) {
                if !journal.rollback_tail() {
                    writer.poisoned = true;
                }
                return Err(e);
            }
        }
        let mut index = self.index.write();
        index.seq = seq;
        index.apply(frame.ops);
        Ok(count)
    }
}

fn plan(index: &Index, mutations: Vec<Mutation>) -> Result<(Vec<FrameOp>, Vec<u64>), StoreError> {
    let mut seen = std::collections::HashSet::new();
    let mut ops = Vec::with_capacity(mutations.len());
    let mut versions = Vec::with_capacity(mutations.len());
    for mutation in mutations {
        if !seen.insert(mutation.key().clone()) {
            return Err(StoreError::DuplicateKeyInBatch(mutation.key().clone()));
        }
        match mutation {
            Mutation::Insert { key, body } => {
                if index.get(&key).is_some() {
                    return Err(StoreError::AlreadyExists(key));
                }
                versions.push(1);
                ops.push(FrameOp::Put(Record {
                    namespace: key.namespace,
                    id: key.id,
                    version: 1,
                    body: Arc::new(body),
                }));
            }
            Mutation::Update { key, expected_version, body } => {
                let current = index.get(&key).ok_or_else(|| StoreError::NotFound(key.clone()))?;
                if current.version != expected_version {
                    return Err(StoreError::VersionConflict {
                        actual: current.version,
                        key,
                        expected: expected_version,
                    });
                }
                let version = expected_version + 1;
                versions.push(version);
                ops.push(FrameOp::Put(Record { namespace: key.namespace, id: key.id, version, body: Arc::new(body) }));
            }
            Mutation::Delete { key, expected_version } => {
                let current = index.get(&key).ok_or_else(|| StoreError::NotFound(key.clone()))?;
                if current.version != expected_version {
                    return Err(StoreError::VersionConflict {
                        actual: current.version,
                        key,
                        expected: expected_version,
                    });
                }
                versions.push(0);
                ops.push(FrameOp::Del { namespace: key.namespace, id: key.id });
            }
        }
    }
    Ok((ops, versions))
}

fn journal_path(dir: &Path, generation: u64) -> PathBuf {
    dir.join(format!("journal-{generation:08}.log"))
}

fn remove_stale_files(dir: &Path, generation: u64) -> io::Result<()> {
    let current = journal_path(dir, generation);
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let stale_journal = name.starts_with("journal-") && name.ends_with(".log") && path != current;
        if stale_journal || name == format!("{SNAPSHOT_FILE}.tmp") {
            fs::remove_file(&path)?;
        }
    }
    Ok(())
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}
