//! HTTP service around the engagement engine: sessions, sources, calibration,
//! chat with hidden score injection, live engagement events and export.

pub mod api;
pub mod gateway;
pub mod session;
pub mod source;
pub mod store;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use neurochat_core::Config;

use crate::gateway::ChatClient;
use crate::session::{Session, SessionError};
use crate::store::SessionRecord;

struct Inner {
    data_dir: PathBuf,
    config: Config,
    gateway: Arc<dyn ChatClient>,
    default_source: Option<String>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

/// Shared handle passed to every route.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Open the data directory, reloading every stored session with its
    /// history, settings and calibration. Sources are not restarted.
    pub fn open(
        data_dir: &Path,
        config: Config,
        gateway: Arc<dyn ChatClient>,
        default_source: Option<String>,
    ) -> Result<Self, SessionError> {
        std::fs::create_dir_all(data_dir)?;
        let (records, errors) = store::load_all(data_dir)?;
        for e in errors {
            tracing::warn!("skipping unreadable session: {e}");
        }
        let mut sessions = HashMap::new();
        for mut rec in records {
            // a restarted service has no live source
            rec.source = None;
            let sess = Session::open(data_dir, rec, config.clone())?;
            sessions.insert(sess.id.clone(), sess);
        }
        Ok(Self {
            inner: Arc::new(Inner {
                data_dir: data_dir.to_path_buf(),
                config,
                gateway,
                default_source,
                sessions: RwLock::new(sessions),
            }),
        })
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.inner
            .sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
    }

    /// All sessions, oldest first.
    pub fn sessions(&self) -> Vec<Arc<Session>> {
        let mut all: Vec<_> = self
            .inner
            .sessions
            .read()
            .expect("sessions lock")
            .values()
            .cloned()
            .collect();
        all.sort_by_key(|s| (s.snapshot().created_ms, s.id.clone()));
        all
    }

    pub fn add_session(&self, record: SessionRecord) -> Result<Arc<Session>, SessionError> {
        let sess = Session::open(&self.inner.data_dir, record, self.inner.config.clone())?;
        self.inner
            .sessions
            .write()
            .expect("sessions lock")
            .insert(sess.id.clone(), sess.clone());
        Ok(sess)
    }

    pub fn config(&self) -> &Config {
        &self.inner.config
    }

    pub fn gateway(&self) -> Arc<dyn ChatClient> {
        self.inner.gateway.clone()
    }

    pub fn default_source(&self) -> Option<String> {
        self.inner.default_source.clone()
    }

    /// Stop every source; used on shutdown.
    pub fn shutdown(&self) {
        for s in self.sessions() {
            s.stop_source();
        }
    }
}

pub fn app(state: AppState) -> axum::Router {
    api::router(state)
}
