//! Session storage, optionally mirrored to a directory of session documents.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use cuegraph_core::engine::{EngineError, ExplorationSession};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot read session directory {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("session document {path} is invalid: {source}")]
    Invalid { path: PathBuf, source: EngineError },
}

pub type SessionHandle = Arc<Mutex<ExplorationSession>>;

#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, SessionHandle>>,
    dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads every `*.json` session document in `dir` and persists future
    /// changes there.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let io_err = |source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io_err)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(dir).map_err(io_err)? {
            let path = entry.map_err(io_err)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
            let session = ExplorationSession::import(&text).map_err(|source| StoreError::Invalid {
                path: path.clone(),
                source,
            })?;
            sessions.insert(session.id().to_string(), Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            sessions: RwLock::new(sessions),
            dir: Some(dir.to_path_buf()),
        })
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.read().expect("store lock").get(id).cloned()
    }

    pub fn insert(&self, session: ExplorationSession) -> io::Result<SessionHandle> {
        self.persist(&session)?;
        let id = session.id().to_string();
        let handle = Arc::new(Mutex::new(session));
        self.sessions.write().expect("store lock").insert(id, handle.clone());
        Ok(handle)
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("store lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Writes the session document through a temporary file so a crash never
    /// leaves a half-written document behind.
    pub fn persist(&self, session: &ExplorationSession) -> io::Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(format!("{}.json", session.id()));
        let tmp = dir.join(format!(".{}.json.tmp", session.id()));
        fs::write(&tmp, session.export())?;
        fs::rename(tmp, path)
    }
}
