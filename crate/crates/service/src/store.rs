//! On-disk persistence: one directory per session holding an append-only
//! `events.jsonl` and an atomically replaced `snapshot.json`.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use steerbench_core::codec;

use crate::error::ServiceError;
use crate::session::{Engine, Event, StudySession};

const EVENTS: &str = "events.jsonl";
const SNAPSHOT: &str = "snapshot.json";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn io(path: &Path, e: std::io::Error) -> ServiceError {
    ServiceError::Core(steerbench_core::Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        let sessions = root.join("sessions");
        fs::create_dir_all(&sessions).map_err(|e| io(&sessions, e))?;
        Ok(Store { root })
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    pub fn events_path(&self, id: &str) -> PathBuf {
        self.dir(id).join(EVENTS)
    }

    pub fn append(&self, id: &str, event: &Event) -> Result<(), ServiceError> {
        Ok(codec::append_line(&self.events_path(id), event)?)
    }

    pub fn snapshot(&self, session: &StudySession) -> Result<(), ServiceError> {
        let line = codec::to_line(session);
        Ok(codec::atomic_write(&self.dir(&session.id).join(SNAPSHOT), line.as_bytes())?)
    }

    /// Hex SHA-256 of the session's raw event log.
    pub fn log_digest(&self, id: &str) -> Result<String, ServiceError> {
        let path = self.events_path(id);
        let bytes = fs::read(&path).map_err(|e| io(&path, e))?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    /// Read a session's events. A torn final line from an interrupted
    /// append is cut off; damage anywhere else is an error.
    pub fn read_events(&self, id: &str) -> Result<Vec<Event>, ServiceError> {
        let path = self.events_path(id);
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let mut events = Vec::new();
        let mut offset = 0;
        for chunk in text.split_inclusive('\n') {
            let last = offset + chunk.len() == text.len();
            match (codec::from_line::<Event>(chunk), chunk.ends_with('\n')) {
                (Ok(e), true) => {
                    events.push(e);
                    offset += chunk.len();
                }
                _ if last => {
                    tracing::warn!(session = id, "dropping torn event log tail");
                    let f = fs::OpenOptions::new().write(true).open(&path).map_err(|e| io(&path, e))?;
                    f.set_len(offset as u64).map_err(|e| io(&path, e))?;
                }
                (Err(e), _) => {
                    return Err(ServiceError::Corrupt(format!("{}: event {}: {e}", path.display(), events.len())));
                }
                (Ok(_), false) => unreachable!("only the final chunk can lack a newline"),
            }
        }
        Ok(events)
    }

    /// Rebuild one session from its snapshot (when usable) and log.
    pub fn load(&self, engine: &Engine, id: &str) -> Result<StudySession, ServiceError> {
        let events = self.read_events(id)?;
        let first = events
            .first()
            .ok_or_else(|| ServiceError::Corrupt(format!("session {id} has an empty log")))?;
        let snap_path = self.dir(id).join(SNAPSHOT);
        let snapshot = fs::read_to_string(&snap_path)
            .ok()
            .and_then(|s| codec::from_line::<StudySession>(&s).ok())
            .filter(|s| s.id == id && s.events as usize <= events.len() && s.events > 0);
        let mut session = match snapshot {
            Some(s) => s,
            None => StudySession::create(engine, first)?,
        };
        for e in &events[session.events as usize..] {
            session.apply(engine, e)?;
        }
        Ok(session)
    }

    pub fn session_ids(&self) -> Result<Vec<String>, ServiceError> {
        let dir = self.root.join("sessions");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| io(&dir, e))? {
            let entry = entry.map_err(|e| io(&dir, e))?;
            if entry.path().join(EVENTS).is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }
}
