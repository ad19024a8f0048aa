//! Per-user durable state.
//!
//! Each user owns `users/<id>/state.wal`, an NDJSON log of full state
//! snapshots and dossiers. The last state record wins; dossiers accumulate.
//! Every append is fsynced before the request is acknowledged. On open, an
//! unterminated or unparsable final record is a torn write and is cut off;
//! damage anywhere earlier refuses to load.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use feedwarden_core::agents::{AppealBook, RuleBook};
use feedwarden_core::graph::PageRankVector;
use feedwarden_core::pipeline::Dossier;
use feedwarden_core::profile::{InteractionWindow, PreferenceProfile};

pub const WAL_FILE: &str = "state.wal";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt snapshot {path} at line {line}: {message}")]
    CorruptSnapshot {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Everything about one user that must survive a restart, except dossiers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistedState {
    pub rules: RuleBook,
    pub profile: PreferenceProfile,
    pub window: InteractionWindow,
    /// Rank vector over active rules; `None` when no rule is active.
    pub pr: Option<PageRankVector>,
    pub appeals: AppealBook,
    /// Items whose block was overturned on appeal.
    pub unblocked: BTreeSet<String>,
    pub first_activity_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WalRecord {
    State { state: Box<PersistedState> },
    Dossier { dossier: Box<Dossier> },
}

#[derive(Debug, Default)]
pub struct Restored {
    pub state: Option<PersistedState>,
    pub dossiers: Vec<Dossier>,
    pub records: usize,
    /// Bytes cut from a torn final record.
    pub torn_bytes: usize,
}

/// Parses a log image. Returns the restored content and the length of the
/// valid prefix.
pub fn parse_wal(path: &Path, bytes: &[u8]) -> Result<(Restored, usize), StoreError> {
    let mut restored = Restored::default();
    let mut offset = 0;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let rest = &bytes[offset..];
        let (line, terminated) = match rest.iter().position(|&b| b == b'\n') {
            Some(end) => (&rest[..end], true),
            None => (rest, false),
        };
        let next = offset + line.len() + usize::from(terminated);
        if !terminated {
            break;
        }
        match serde_json::from_slice::<WalRecord>(line) {
            Ok(WalRecord::State { state }) => restored.state = Some(*state),
            Ok(WalRecord::Dossier { dossier }) => restored.dossiers.push(*dossier),
            Err(_) if next >= bytes.len() => break,
            Err(e) => {
                return Err(StoreError::CorruptSnapshot {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })
            }
        }
        restored.records += 1;
        offset = next;
    }
    restored.torn_bytes = bytes.len() - offset;
    Ok((restored, offset))
}

fn encode(record: &WalRecord) -> Vec<u8> {
    let mut line = serde_json::to_vec(record).expect("wal records serialize");
    line.push(b'\n');
    line
}

pub struct UserLog {
    path: PathBuf,
    file: File,
    records: usize,
}

impl UserLog {
    /// Opens or creates the log under `dir`, replaying what is there.
    pub fn open(dir: &Path) -> Result<(UserLog, Restored), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(WAL_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let (restored, valid) = parse_wal(&path, &bytes)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        if valid < bytes.len() {
            file.set_len(valid as u64).map_err(io_err(&path))?;
            file.sync_all().map_err(io_err(&path))?;
        }
        let records = restored.records;
        Ok((UserLog { path, file, records }, restored))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> usize {
        self.records
    }

    pub fn append(&mut self, record: &WalRecord) -> Result<(), StoreError> {
        self.file.write_all(&encode(record)).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))?;
        self.records += 1;
        Ok(())
    }

    /// Rewrites the log as the given dossiers followed by one state record.
    pub fn compact<'a>(
        &mut self,
        state: &PersistedState,
        dossiers: impl Iterator<Item = &'a Dossier>,
    ) -> Result<(), StoreError> {
        let tmp = self.path.with_extension("wal.tmp");
        let mut records = 0;
        {
            let file = File::create(&tmp).map_err(io_err(&tmp))?;
            let mut out = BufWriter::new(file);
            for d in dossiers {
                let rec = WalRecord::Dossier {
                    dossier: Box::new(d.clone()),
                };
                out.write_all(&encode(&rec)).map_err(io_err(&tmp))?;
                records += 1;
            }
            let rec = WalRecord::State {
                state: Box::new(state.clone()),
            };
            out.write_all(&encode(&rec)).map_err(io_err(&tmp))?;
            records += 1;
            let file = out.into_inner().map_err(|e| io_err(&tmp)(e.into_error()))?;
            file.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &self.path).map_err(io_err(&self.path))?;
        if let Some(dir) = self.path.parent() {
            File::open(dir).and_then(|d| d.sync_all()).map_err(io_err(dir))?;
        }
        self.file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(io_err(&self.path))?;
        self.records = records;
        Ok(())
    }
}
