//! Feedback collected from annotators through the session store.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use panelscope_core::{Error, FeedbackKind, FeedbackSource, PanelPair, Result, TransitionLabel};

use crate::session::{SessionMode, SessionStatus, SessionStore};

/// Opens one `round_feedback` session per round and blocks until an
/// annotator finishes or abandons it.
pub struct SessionFeedback {
    store: Arc<Mutex<SessionStore>>,
    annotator_id: String,
    poll: Duration,
    timeout: Option<Duration>,
}

impl SessionFeedback {
    pub fn new(store: Arc<Mutex<SessionStore>>, annotator_id: impl Into<String>) -> Self {
        SessionFeedback {
            store,
            annotator_id: annotator_id.into(),
            poll: Duration::from_millis(200),
            timeout: None,
        }
    }

    pub fn with_poll_interval(mut self, poll: Duration) -> Self {
        self.poll = poll;
        self
    }

    /// Gives up (as if abandoned) after `timeout` without completion.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }
}

impl FeedbackSource for SessionFeedback {
    fn kind(&self) -> FeedbackKind {
        FeedbackKind::InteractiveSession
    }

    fn collect(&mut self, round: usize, pairs: &[PanelPair]) -> Result<Vec<TransitionLabel>> {
        let session_id = {
            let mut store = self.store.lock().unwrap_or_else(|e| e.into_inner());
            store
                .create(&self.annotator_id, pairs.to_vec(), SessionMode::RoundFeedback, Some(round))
                .map_err(|e| Error::Feedback(e.to_string()))?
                .session_id
                .clone()
        };
        log::info!("round {round}: waiting for {} labels in session {session_id}", pairs.len());
        let started = Instant::now();
        loop {
            {
                let store = self.store.lock().unwrap_or_else(|e| e.into_inner());
                let s = store.get(&session_id).map_err(|e| Error::Feedback(e.to_string()))?;
                match s.status() {
                    SessionStatus::Abandoned => {
                        return Err(Error::FeedbackAborted(format!("session {session_id} was abandoned")))
                    }
                    SessionStatus::Complete => {
                        let by_pair = &s.completed;
                        // the store dedups the queue, so look labels up per queried pair
                        return pairs
                            .iter()
                            .map(|p| {
                                by_pair
                                    .get(p)
                                    .copied()
                                    .ok_or_else(|| Error::Feedback(format!("no label for pair {p}")))
                            })
                            .collect();
                    }
                    SessionStatus::Open => {}
                }
            }
            if self.timeout.is_some_and(|t| started.elapsed() >= t) {
                let mut store = self.store.lock().unwrap_or_else(|e| e.into_inner());
                let _ = store.abandon(&session_id);
                return Err(Error::FeedbackAborted(format!("session {session_id} timed out")));
            }
            thread::sleep(self.poll);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn returns_labels_once_session_completes() {
        let store = Arc::new(Mutex::new(SessionStore::in_memory()));
        let pairs = vec![PanelPair::new("b", 0, 0), PanelPair::new("b", 0, 1)];
        let worker = {
            let store = store.clone();
            let pairs = pairs.clone();
            thread::spawn(move || {
                let mut fb = SessionFeedback::new(store, "ann").with_poll_interval(Duration::from_millis(5));
                fb.collect(1, &pairs)
            })
        };
        let id = loop {
            if let Some(s) = store.lock().unwrap().sessions().next() {
                break s.session_id.clone();
            }
            thread::sleep(Duration::from_millis(5));
        };
        {
            let mut st = store.lock().unwrap();
            st.submit(&id, &pairs[1], TransitionLabel::Mom).unwrap();
            st.submit(&id, &pairs[0], TransitionLabel::Act).unwrap();
        }
        let labels = worker.join().unwrap().unwrap();
        assert_eq!(labels, vec![TransitionLabel::Act, TransitionLabel::Mom]);
    }

    #[test]
    fn abandoned_session_aborts() {
        let store = Arc::new(Mutex::new(SessionStore::in_memory()));
        let mut fb = SessionFeedback::new(store, "ann")
            .with_poll_interval(Duration::from_millis(1))
            .with_timeout(Duration::from_millis(20));
        let err = fb.collect(1, &[PanelPair::new("b", 0, 0)]).unwrap_err();
        assert!(matches!(err, Error::FeedbackAborted(_)));
    }
}
