//! Concurrent session registry with per-session JSONL persistence.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use crate::clock::{Clock, MonotonicClock};
use crate::error::ServiceError;
use crate::events::Event;
use crate::session::{Ack, DecisionRequest, LiveSession, LiveSummary, SessionRequest, TrialPayload};

/// Environment variable naming the data directory.
pub const DATA_DIR_ENV: &str = "TAKEOVER_DATA_DIR";

struct Entry {
    session: LiveSession,
    /// Clock reading at creation; event times are relative to it.
    origin_ms: u64,
    file: Option<File>,
    written: usize,
}

impl Entry {
    fn now(&self, clock: &dyn Clock) -> u64 {
        clock.now_ms().saturating_sub(self.origin_ms)
    }

    fn flush(&mut self) -> Result<(), ServiceError> {
        let events = &self.session.events()[self.written..];
        if let Some(f) = &mut self.file {
            let text: String = events.iter().map(Event::to_line).collect();
            f.write_all(text.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| ServiceError::Io(e.to_string()))?;
        }
        self.written = self.session.events().len();
        Ok(())
    }
}

pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    data_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
}

impl SessionStore {
    pub fn new(data_dir: Option<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        if let Some(dir) = &data_dir {
            fs::create_dir_all(dir).map_err(|e| ServiceError::Io(format!("{}: {e}", dir.display())))?;
        }
        Ok(Self {
            sessions: RwLock::new(HashMap::new()),
            data_dir,
            clock,
        })
    }

    pub fn in_memory() -> Self {
        Self::new(None, Arc::new(MonotonicClock::default())).expect("no directory to create")
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    pub fn log_path(&self, session_id: &str) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join(format!("{session_id}.jsonl")))
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ServiceError> {
        self.sessions
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn with<T>(&self, id: &str, f: impl FnOnce(&mut Entry, u64) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let entry = self.entry(id)?;
        let mut e = entry.lock().expect("session lock");
        let now = e.now(self.clock.as_ref());
        let out = f(&mut e, now);
        e.flush()?;
        out
    }

    pub fn create(&self, request: &SessionRequest) -> Result<LiveSummary, ServiceError> {
        let id = uuid::Uuid::new_v4().to_string();
        let session = LiveSession::open(id.clone(), request, 0)?;
        let file = match self.log_path(&id) {
            Some(path) => Some(
                OpenOptions::new()
                    .create_new(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?,
            ),
            None => None,
        };
        let mut entry = Entry {
            session,
            origin_ms: self.clock.now_ms(),
            file,
            written: 0,
        };
        entry.flush()?;
        let summary = entry.session.summary();
        self.sessions
            .write()
            .expect("registry lock")
            .insert(id, Arc::new(Mutex::new(entry)));
        Ok(summary)
    }

    pub fn advance(&self, id: &str) -> Result<TrialPayload, ServiceError> {
        self.with(id, |e, now| e.session.advance(now))
    }

    pub fn submit(&self, id: &str, req: &DecisionRequest) -> Result<Ack, ServiceError> {
        self.with(id, |e, now| e.session.submit(now, req))
    }

    pub fn summary(&self, id: &str) -> Result<LiveSummary, ServiceError> {
        self.with(id, |e, _| Ok(e.session.summary()))
    }

    pub fn log(&self, id: &str) -> Result<String, ServiceError> {
        self.with(id, |e, _| Ok(crate::events::to_jsonl(e.session.events())))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Replays a session log file.
pub fn replay_file(path: &Path) -> Result<LiveSession, ServiceError> {
    let file = File::open(path).map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?;
    LiveSession::replay(crate::events::read_jsonl(std::io::BufReader::new(file))?)
}
