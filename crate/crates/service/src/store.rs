//! In-memory session store with an optional append-only JSON-lines log.
//!
//! The log records each created session (before its first prediction) and
//! every input that advanced it. All transitions are deterministic given the
//! models, so replaying the log against the same registry rebuilds sessions
//! whose JSON is byte-identical to the live ones.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use advice_core::protocols::{step, Input, ModelSet, Session};
use advice_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)] // short-lived; one per log line
pub enum LogEntry {
    Create { session: Session },
    Step { id: String, input: Input },
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("event log I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("event log line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// A finished response kept for `Idempotency-Key` replays.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredResponse {
    pub status: u16,
    pub body: serde_json::Value,
}

pub type SessionCell = Arc<Mutex<Session>>;

#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, SessionCell>>,
    log: Option<Mutex<File>>,
    idempotent: Mutex<HashMap<String, StoredResponse>>,
    /// Serializes keyed session creation, which has no session lock to hold.
    create_lock: Mutex<()>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    // A panic mid-transition cannot leave a half-applied session behind
    // (transitions run on a copy), so a poisoned lock is safe to reuse.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens (or creates) the log at `path`, replays whatever it holds, and
    /// appends new entries to it from then on.
    pub fn with_log(path: &Path, models: &ModelSet) -> Result<Self, LogError> {
        let sessions = if path.exists() { replay(path, models)? } else { HashMap::new() };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let store = Self {
            log: Some(Mutex::new(file)),
            ..Self::default()
        };
        {
            let mut map = store.sessions.write().unwrap_or_else(|e| e.into_inner());
            for (id, s) in sessions {
                map.insert(id, Arc::new(Mutex::new(s)));
            }
        }
        Ok(store)
    }

    fn append(&self, entry: &LogEntry) -> Result<(), Error> {
        if let Some(f) = &self.log {
            let mut line = serde_json::to_string(entry).map_err(|e| Error::Contract(e.to_string()))?;
            line.push('\n');
            let mut f = lock(f);
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<SessionCell> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn snapshot(&self, id: &str) -> Option<Session> {
        self.get(id).map(|c| lock(&c).clone())
    }

    /// Inserts a fresh session and runs its first prediction. Nothing is
    /// stored if the prediction fails.
    pub fn create(&self, session: Session, models: &ModelSet) -> Result<Session, Error> {
        let fresh = session.clone();
        let mut s = session;
        step(&mut s, Input::Predict, models)?;
        let id = s.id.clone();
        self.append(&LogEntry::Create { session: fresh })?;
        self.append(&LogEntry::Step {
            id: id.clone(),
            input: Input::Predict,
        })?;
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, Arc::new(Mutex::new(s.clone())));
        Ok(s)
    }

    /// Applies one input under the session's lock. The transition runs on a
    /// copy and is committed only if it succeeds.
    pub fn apply(&self, cell: &SessionCell, input: Input, models: &ModelSet) -> Result<Session, Error> {
        let mut guard = lock(cell);
        self.apply_locked(&mut guard, input, models)
    }

    pub fn apply_locked(&self, current: &mut Session, input: Input, models: &ModelSet) -> Result<Session, Error> {
        let mut next = current.clone();
        step(&mut next, input.clone(), models)?;
        self.append(&LogEntry::Step {
            id: next.id.clone(),
            input,
        })?;
        *current = next.clone();
        Ok(next)
    }

    pub fn remembered(&self, key: &str) -> Option<StoredResponse> {
        lock(&self.idempotent).get(key).cloned()
    }

    pub fn remember(&self, key: String, response: StoredResponse) {
        lock(&self.idempotent).insert(key, response);
    }

    pub fn create_guard(&self) -> std::sync::MutexGuard<'_, ()> {
        lock(&self.create_lock)
    }
}

/// Rebuilds every session recorded in a log.
pub fn replay(path: &Path, models: &ModelSet) -> Result<HashMap<String, Session>, LogError> {
    let reader = BufReader::new(File::open(path)?);
    let mut sessions: HashMap<String, Session> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| LogError::Corrupt { line: i + 1, message };
        let entry: LogEntry = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        match entry {
            LogEntry::Create { session } => {
                if sessions.contains_key(&session.id) {
                    return Err(corrupt(format!("session {} created twice", session.id)));
                }
                sessions.insert(session.id.clone(), session);
            }
            LogEntry::Step { id, input } => {
                let s = sessions.get_mut(&id).ok_or_else(|| corrupt(format!("unknown session {id}")))?;
                step(s, input, models).map_err(|e| corrupt(e.to_string()))?;
            }
        }
    }
    Ok(sessions)
}
