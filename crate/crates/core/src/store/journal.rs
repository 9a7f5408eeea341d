//! Journal file layout: one frame per line segment,
//!
//! ```text
//! <decimal byte length of json> <json>\n
//! ```
//!
//! where the JSON is `{"seq":N,"ops":[...]}`. A frame whose length prefix,
//! payload or trailing newline is incomplete marks the torn tail of a crashed
//! write; replay stops there and the file is truncated to the last whole frame.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Namespace, Record, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// `fdatasync` after every frame: survives power loss.
    Always,
    /// Hand the frame to the OS only: survives a killed process.
    Flush,
}

#[derive(Debug, Serialize, Deserialize)]
pub(super) struct Frame {
    pub seq: u64,
    pub ops: Vec<FrameOp>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(super) enum FrameOp {
    Put(Record),
    Del { namespace: Namespace, id: String },
}

pub(super) struct Journal {
    file: File,
    path: PathBuf,
    len: u64,
    frames: u64,
    sync: SyncMode,
}

impl Journal {
    /// Opens `path` for appending, returning the whole frames it holds.
    pub fn open(path: &Path, sync: SyncMode) -> Result<(Journal, Vec<Frame>), StoreError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let (frames, valid_len) = decode_frames(&bytes);
        if valid_len < bytes.len() {
            tracing::warn!(
                path = %path.display(),
                dropped = bytes.len() - valid_len,
                "truncating torn journal tail"
            );
            file.set_len(valid_len as u64)?;
            file.sync_all()?;
        }

        let journal =
            Journal { file, path: path.to_path_buf(), len: valid_len as u64, frames: frames.len() as u64, sync };
        Ok((journal, frames))
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn append(&mut self, frame: &Frame) -> Result<(), StoreError> {
        let json = serde_json::to_vec(frame)?;
        let mut line = Vec::with_capacity(json.len() + 24);
        write!(line, "{} ", json.len())?;
        line.extend_from_slice(&json);
        line.push(b'\n');

        self.file.write_all(&line)?;
        if self.sync == SyncMode::Always {
            self.file.sync_data()?;
        }
        self.len += line.len() as u64;
        self.frames += 1;
        Ok(())
    }

    /// Cuts off whatever a failed append left behind. Returns false when the
    /// file could not be restored, in which case it must not be appended to.
    pub fn rollback_tail(&mut self) -> bool {
        match self.file.set_len(self.len) {
            Ok(()) => true,
            Err(e) => {
                tracing::error!(path = %self.path.display(), error = %e, "journal rollback failed");
                false
            }
        }
    }
}

/// Decodes consecutive frames, returning them and the byte length they span.
pub(super) fn decode_frames(bytes: &[u8]) -> (Vec<Frame>, usize) {
    let mut frames = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        match decode_one(&bytes[pos..]) {
            Some((frame, used)) => {
                frames.push(frame);
                pos += used;
            }
            None => break,
        }
    }
    (frames, pos)
}

fn decode_one(bytes: &[u8]) -> Option<(Frame, usize)> {
    let space = bytes.iter().take(21).position(|&b| b == b' ')?;
    let len: usize = std::str::from_utf8(&bytes[..space]).ok()?.parse().ok()?;
    let start = space + 1;
    let end = start.checked_add(len)?;
    if bytes.get(end) != Some(&b'\n') {
        return None;
    }
    let frame = serde_json::from_slice(&bytes[start..end]).ok()?;
    Some((frame, end + 1))
}
