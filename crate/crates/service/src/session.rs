//! Annotation sessions. The log is the source of truth; the in-memory map is
//! rebuilt from it on startup.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use panelscope_core::{AnnotationRecord, PanelPair, TransitionLabel};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::log::{replay, AppendLog, LogRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    GroundTruth,
    RoundFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Complete,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub session_id: String,
    pub annotator_id: String,
    pub mode: SessionMode,
    pub round_index: Option<usize>,
    pub task_queue: Vec<PanelPair>,
    pub completed: BTreeMap<PanelPair, TransitionLabel>,
    pub abandoned: bool,
}

impl Session {
    pub fn status(&self) -> SessionStatus {
        if self.abandoned {
            SessionStatus::Abandoned
        } else if self.completed.len() == self.task_queue.len() {
            SessionStatus::Complete
        } else {
            SessionStatus::Open
        }
    }

    /// First pending pair in queue order.
    pub fn next_pending(&self) -> Option<(usize, &PanelPair)> {
        self.task_queue
            .iter()
            .enumerate()
            .find(|(_, p)| !self.completed.contains_key(*p))
    }

    pub fn progress(&self) -> Progress {
        let mut tally: BTreeMap<TransitionLabel, usize> =
            TransitionLabel::ALL.iter().map(|l| (*l, 0)).collect();
        for l in self.completed.values() {
            *tally.get_mut(l).unwrap() += 1;
        }
        Progress {
            session_id: self.session_id.clone(),
            annotator_id: self.annotator_id.clone(),
            mode: self.mode,
            round_index: self.round_index,
            completed: self.completed.len(),
            total: self.task_queue.len(),
            status: self.status(),
            tally,
        }
    }

    /// Labels in queue order; `None` until the session is complete.
    pub fn labels_in_order(&self) -> Option<Vec<TransitionLabel>> {
        self.task_queue.iter().map(|p| self.completed.get(p).copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub session_id: String,
    pub annotator_id: String,
    pub mode: SessionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_index: Option<usize>,
    pub completed: usize,
    pub total: usize,
    pub status: SessionStatus,
    pub tally: BTreeMap<TransitionLabel, usize>,
}

pub struct SessionStore {
    sessions: BTreeMap<String, Session>,
    log: Option<AppendLog>,
}

impl SessionStore {
    /// A store without persistence.
    pub fn in_memory() -> Self {
        SessionStore {
            sessions: BTreeMap::new(),
            log: None,
        }
    }

    /// Replays `path` and appends to it from then on.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let mut store = SessionStore::in_memory();
        let records = replay(&path)?;
        for r in &records {
            store.apply(r)?;
        }
        log::info!(
            "replayed {} log records into {} sessions",
            records.len(),
            store.sessions.len()
        );
        store.log = Some(AppendLog::open(path)?);
        Ok(store)
    }

    fn apply(&mut self, record: &LogRecord) -> Result<(), ServiceError> {
        match record {
            LogRecord::SessionCreated {
                session_id,
                annotator_id,
                mode,
                round_index,
                pairs,
            } => {
                self.sessions.insert(
                    session_id.clone(),
                    Session {
                        session_id: session_id.clone(),
                        annotator_id: annotator_id.clone(),
                        mode: *mode,
                        round_index: *round_index,
                        task_queue: pairs.clone(),
                        completed: BTreeMap::new(),
                        abandoned: false,
                    },
                );
            }
            LogRecord::Label {
                session_id,
                pair,
                label,
                ..
            } => {
                self.get_mut(session_id)?.completed.insert(pair.clone(), *label);
            }
            LogRecord::Abandoned { session_id } => self.get_mut(session_id)?.abandoned = true,
        }
        Ok(())
    }

    /// Persists first, then updates memory.
    fn commit(&mut self, record: LogRecord) -> Result<(), ServiceError> {
        if let Some(log) = &mut self.log {
            log.append(&record)?;
        }
        self.apply(&record)
    }

    pub fn get(&self, session_id: &str) -> Result<&Session, ServiceError> {
        self.sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::NotFound(format!("no session {session_id:?}")))
    }

    fn get_mut(&mut self, session_id: &str) -> Result<&mut Session, ServiceError> {
        self.sessions
            .get_mut(session_id)
            .ok_or_else(|| ServiceError::NotFound(format!("no session {session_id:?}")))
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    /// Duplicate pairs are dropped, keeping the first occurrence.
    pub fn create(
        &mut self,
        annotator_id: &str,
        pairs: Vec<PanelPair>,
        mode: SessionMode,
        round_index: Option<usize>,
    ) -> Result<&Session, ServiceError> {
        if annotator_id.trim().is_empty() {
            return Err(ServiceError::Validation("annotator_id must not be empty".into()));
        }
        if pairs.is_empty() {
            return Err(ServiceError::Validation("a session needs at least one pair".into()));
        }
        let mut seen = BTreeSet::new();
        let before = pairs.len();
        let pairs: Vec<PanelPair> = pairs.into_iter().filter(|p| seen.insert(p.clone())).collect();
        if pairs.len() < before {
            log::warn!("dropped {} duplicate pairs from new session", before - pairs.len());
        }
        let session_id = format!("s{:04}", self.sessions.len() + 1);
        self.commit(LogRecord::SessionCreated {
            session_id: session_id.clone(),
            annotator_id: annotator_id.to_string(),
            mode,
            round_index,
            pairs,
        })?;
        self.get(&session_id)
    }

    pub fn submit(
        &mut self,
        session_id: &str,
        pair: &PanelPair,
        label: TransitionLabel,
    ) -> Result<Progress, ServiceError> {
        let session = self.get(session_id)?;
        if session.abandoned {
            return Err(ServiceError::Conflict(format!("session {session_id} was abandoned")));
        }
        if !session.task_queue.contains(pair) {
            return Err(ServiceError::Conflict(format!("pair {pair} is not part of session {session_id}")));
        }
        if session.completed.contains_key(pair) {
            return Err(ServiceError::Conflict(format!("pair {pair} is already labeled")));
        }
        let annotator_id = session.annotator_id.clone();
        self.commit(LogRecord::Label {
            session_id: session_id.to_string(),
            annotator_id,
            pair: pair.clone(),
            label,
        })?;
        Ok(self.get(session_id)?.progress())
    }

    pub fn abandon(&mut self, session_id: &str) -> Result<Progress, ServiceError> {
        let session = self.get(session_id)?;
        match session.status() {
            SessionStatus::Complete => {
                return Err(ServiceError::Conflict(format!("session {session_id} is already complete")))
            }
            SessionStatus::Abandoned => return Ok(session.progress()),
            SessionStatus::Open => {}
        }
        self.commit(LogRecord::Abandoned {
            session_id: session_id.to_string(),
        })?;
        Ok(self.get(session_id)?.progress())
    }

    /// Every recorded label as an annotation record, in session order.
    pub fn annotations(&self) -> Vec<AnnotationRecord> {
        self.sessions
            .values()
            .flat_map(|s| {
                s.task_queue.iter().filter_map(|p| {
                    s.completed.get(p).map(|l| AnnotationRecord {
                        pair: p.clone(),
                        annotator_id: s.annotator_id.clone(),
                        label: *l,
                    })
                })
            })
            .collect()
    }
}
