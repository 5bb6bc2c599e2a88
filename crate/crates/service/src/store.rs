//! On-disk session records.
//!
//! Layout under the data directory:
//!
//! ```text
//! sessions/<id>/session.json    SessionRecord, rewritten atomically on every change
//! sessions/<id>/metrics.jsonl   engine metrics log, append-only
//! sessions/<id>/raw.csv         rebased input frames
//! sessions/<id>/filtered.csv    filter output
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use neurochat_core::llm::ChatTurn;
use neurochat_core::CalibrationResult;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    /// Adaptive prompt with the hidden score; off means the control prompt.
    pub mood_mode: bool,
    /// The UI shows the live score only when set.
    pub debug_mode: bool,
    pub dark_mode: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            mood_mode: true,
            debug_mode: false,
            dark_mode: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingsPatch {
    pub mood_mode: Option<bool>,
    pub debug_mode: Option<bool>,
    pub dark_mode: Option<bool>,
}

impl Settings {
    pub fn apply(&mut self, patch: &SettingsPatch) {
        if let Some(v) = patch.mood_mode {
            self.mood_mode = v;
        }
        if let Some(v) = patch.debug_mode {
            self.debug_mode = v;
        }
        if let Some(v) = patch.dark_mode {
            self.dark_mode = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chat {
    pub id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folder: Option<String>,
    pub created_ms: u64,
    #[serde(default)]
    pub turns: Vec<ChatTurn>,
}

/// Everything the chat import/export carries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatHistory {
    #[serde(default)]
    pub folders: Vec<String>,
    #[serde(default)]
    pub chats: Vec<Chat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub created_ms: u64,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub calibration: Option<CalibrationResult>,
    #[serde(default)]
    pub settings: Settings,
    #[serde(default)]
    pub history: ChatHistory,
}

impl SessionRecord {
    pub fn new(id: String, created_ms: u64) -> Self {
        Self {
            id,
            created_ms,
            source: None,
            calibration: None,
            settings: Settings::default(),
            history: ChatHistory::default(),
        }
    }

    pub fn chat(&self, chat_id: &str) -> Option<&Chat> {
        self.history.chats.iter().find(|c| c.id == chat_id)
    }

    pub fn chat_mut(&mut self, chat_id: &str) -> Option<&mut Chat> {
        self.history.chats.iter_mut().find(|c| c.id == chat_id)
    }
}

/// Paths of one session's files.
#[derive(Debug, Clone)]
pub struct SessionPaths {
    pub dir: PathBuf,
}

impl SessionPaths {
    pub fn new(data_dir: &Path, id: &str) -> Self {
        Self {
            dir: data_dir.join("sessions").join(id),
        }
    }

    pub fn record(&self) -> PathBuf {
        self.dir.join("session.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.jsonl")
    }

    pub fn raw(&self) -> PathBuf {
        self.dir.join("raw.csv")
    }

    pub fn filtered(&self) -> PathBuf {
        self.dir.join("filtered.csv")
    }
}

/// Write via a temp file in the same directory and rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn save_record(paths: &SessionPaths, record: &SessionRecord) -> std::io::Result<()> {
    std::fs::create_dir_all(&paths.dir)?;
    let bytes = serde_json::to_vec_pretty(record).map_err(std::io::Error::other)?;
    write_atomic(&paths.record(), &bytes)
}

/// Load every session under `data_dir`; unreadable records are reported and skipped.
pub fn load_all(data_dir: &Path) -> std::io::Result<(Vec<SessionRecord>, Vec<String>)> {
    let root = data_dir.join("sessions");
    let mut records = Vec::new();
    let mut errors = Vec::new();
    if !root.exists() {
        return Ok((records, errors));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let path = dir.join("session.json");
        match std::fs::read(&path)
            .map_err(|e| e.to_string())
            .and_then(|b| serde_json::from_slice::<SessionRecord>(&b).map_err(|e| e.to_string()))
        {
            Ok(r) => records.push(r),
            Err(e) => errors.push(format!("{}: {e}", path.display())),
        }
    }
    Ok((records, errors))
}
