//! Append-only session log, one JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use panelscope_core::{PanelPair, TransitionLabel};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::session::SessionMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogRecord {
    SessionCreated {
        session_id: String,
        annotator_id: String,
        mode: SessionMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        round_index: Option<usize>,
        pairs: Vec<PanelPair>,
    },
    Label {
        session_id: String,
        annotator_id: String,
        pair: PanelPair,
        label: TransitionLabel,
    },
    Abandoned {
        session_id: String,
    },
}

pub struct AppendLog {
    path: PathBuf,
    file: File,
}

impl AppendLog {
    /// Opens for appending. A partial final line left by a crash is cut off
    /// so that new records start on a fresh line.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref().to_path_buf();
        trim_partial_tail(&path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ServiceError::Storage(format!("cannot open log {}: {e}", path.display())))?;
        Ok(AppendLog { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one record and syncs it to disk before returning.
    pub fn append(&mut self, record: &LogRecord) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(record).expect("log records serialize");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| ServiceError::Storage(format!("log append failed: {e}")))
    }
}

fn trim_partial_tail(path: &Path) -> Result<(), ServiceError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(ServiceError::Storage(format!("cannot read log {}: {e}", path.display()))),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    log::warn!("{}: dropping {} bytes of partial record", path.display(), bytes.len() - keep);
    OpenOptions::new()
        .write(true)
        .open(path)
        .and_then(|f| f.set_len(keep as u64))
        .map_err(|e| ServiceError::Storage(format!("cannot repair log {}: {e}", path.display())))
}

/// Reads every record. A malformed final line is taken to be a write cut
/// short by a crash and is skipped; malformed lines elsewhere are errors.
pub fn replay(path: impl AsRef<Path>) -> Result<Vec<LogRecord>, ServiceError> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(ServiceError::Storage(format!("cannot read log {}: {e}", path.display()))),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| ServiceError::Storage(format!("cannot read log {}: {e}", path.display())))?;
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => records.push(r),
            Err(e) if i + 1 == lines.len() => {
                log::warn!("{}:{}: ignoring truncated final record ({e})", path.display(), i + 1)
            }
            Err(e) => {
                return Err(ServiceError::Storage(format!(
                    "{}:{}: bad log record: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(records)
}
