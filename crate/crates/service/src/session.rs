//! One live session: its record, engine, recordings and chat loop.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Cursor, Read, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use neurochat_core::engine::{CalibrationStatus, EngineError, FreezeState, MetricsRecord};
use neurochat_core::ingest::{CsvWriter, Rebaser};
use neurochat_core::llm::{ChatMode, ChatTurn, PromptBundle, ENGAGEMENT_MARKER};
use neurochat_core::{Config, EegFrame, EngagementEngine, EngagementSample};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;

use crate::gateway::{send_chat, ChatClient, GatewayError, RetryPolicy};
use crate::source::{spawn_producer, Feed, SourceError, SourceSpec};
use crate::store::{
    save_record, Chat, ChatHistory, SessionPaths, SessionRecord, Settings, SettingsPatch,
};

const WATCHDOG: Duration = Duration::from_millis(250);

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
}

pub fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

struct Sink {
    metrics: BufWriter<File>,
    raw: CsvWriter<BufWriter<File>>,
    filtered: CsvWriter<BufWriter<File>>,
}

fn open_csv(path: &std::path::Path) -> std::io::Result<CsvWriter<BufWriter<File>>> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
    if fresh {
        CsvWriter::new(file).map_err(std::io::Error::other)
    } else {
        Ok(CsvWriter::append(file))
    }
}

impl Sink {
    fn open(paths: &SessionPaths) -> std::io::Result<Self> {
        std::fs::create_dir_all(&paths.dir)?;
        let metrics = OpenOptions::new()
            .create(true)
            .append(true)
            .open(paths.metrics())?;
        Ok(Self {
            metrics: BufWriter::new(metrics),
            raw: open_csv(&paths.raw())?,
            filtered: open_csv(&paths.filtered())?,
        })
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.metrics.flush()?;
        self.raw.flush().map_err(std::io::Error::other)?;
        self.filtered.flush().map_err(std::io::Error::other)
    }
}

/// Returned by a completed message post.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exchange {
    pub user: ChatTurn,
    pub assistant: ChatTurn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportManifest {
    pub session_id: String,
    /// A completion was in flight; its turns are not in `chats.json`.
    pub pending_completion: bool,
    pub files: Vec<String>,
}

pub const EXPORT_FILES: [&str; 5] = [
    "manifest.json",
    "chats.json",
    "metrics.jsonl",
    "raw.csv",
    "filtered.csv",
];

pub struct Session {
    pub id: String,
    paths: SessionPaths,
    record: Mutex<SessionRecord>,
    /// Serialises message posts; held across the model call.
    chat_lock: tokio::sync::Mutex<()>,
    engine: Mutex<EngagementEngine>,
    sink: Mutex<Sink>,
    samples: broadcast::Sender<EngagementSample>,
    feed: Mutex<Option<Arc<Feed>>>,
    in_flight: AtomicBool,
}

impl Session {
    /// Open (or reopen) a session from its record. Calibration bounds in the
    /// record are installed in a fresh engine.
    pub fn open(
        data_dir: &std::path::Path,
        record: SessionRecord,
        cfg: Config,
    ) -> Result<Arc<Self>, SessionError> {
        let paths = SessionPaths::new(data_dir, &record.id);
        let sink = Sink::open(&paths)?;
        save_record(&paths, &record)?;
        let mut engine = EngagementEngine::new(cfg).with_event_log();
        if let Some(cal) = record.calibration {
            engine.set_calibration(cal);
        }
        let (samples, _) = broadcast::channel(256);
        Ok(Arc::new(Self {
            id: record.id.clone(),
            paths,
            record: Mutex::new(record),
            chat_lock: tokio::sync::Mutex::new(()),
            engine: Mutex::new(engine),
            sink: Mutex::new(sink),
            samples,
            feed: Mutex::new(None),
            in_flight: AtomicBool::new(false),
        }))
    }

    pub fn snapshot(&self) -> SessionRecord {
        self.record.lock().expect("record lock").clone()
    }

    /// Apply `f` to the record and persist it before releasing the lock.
    pub fn update<T>(
        &self,
        f: impl FnOnce(&mut SessionRecord) -> Result<T, SessionError>,
    ) -> Result<T, SessionError> {
        let mut rec = self.record.lock().expect("record lock");
        let mut next = rec.clone();
        let out = f(&mut next)?;
        save_record(&self.paths, &next)?;
        *rec = next;
        Ok(out)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<EngagementSample> {
        self.samples.subscribe()
    }

    pub fn latest(&self) -> Option<EngagementSample> {
        self.engine.lock().expect("engine lock").last_sample()
    }

    pub fn calibration_status(&self) -> CalibrationStatus {
        self.engine
            .lock()
            .expect("engine lock")
            .calibration_status()
    }

    pub fn settings(&self) -> Settings {
        self.record.lock().expect("record lock").settings
    }

    pub fn patch_settings(&self, patch: &SettingsPatch) -> Result<Settings, SessionError> {
        self.update(|r| {
            r.settings.apply(patch);
            Ok(r.settings)
        })
    }

    // --- engine side ----------------------------------------------------

    /// Write pending engine records, fan out samples and persist a changed
    /// calibration. Call with no engine lock held.
    fn flush_engine(&self) -> Result<(), SessionError> {
        let (records, calibration) = {
            let mut engine = self.engine.lock().expect("engine lock");
            (engine.drain_events(), engine.calibration())
        };
        {
            let mut sink = self.sink.lock().expect("sink lock");
            for r in &records {
                r.write_line(&mut sink.metrics)?;
            }
            sink.flush()?;
        }
        for r in records {
            if let MetricsRecord::Sample(s) = r {
                // no subscribers is fine
                let _ = self.samples.send(s);
            }
        }
        if self.record.lock().expect("record lock").calibration != calibration {
            self.update(|r| {
                r.calibration = calibration;
                Ok(())
            })?;
        }
        Ok(())
    }

    fn ingest(
        &self,
        rebaser: &mut Rebaser,
        frames: Vec<EegFrame>,
        events: Vec<String>,
    ) -> Result<(), SessionError> {
        {
            let mut engine = self.engine.lock().expect("engine lock");
            let mut sink = self.sink.lock().expect("sink lock");
            for e in events {
                engine.log_quality(e);
            }
            for frame in frames {
                let f = rebaser.rebase(frame, engine.now_ms());
                match engine.push_frame(&f) {
                    Ok(filtered) => {
                        sink.raw.write_frame(&f).map_err(std::io::Error::other)?;
                        sink.filtered
                            .write_frame(&EegFrame::new(f.timestamp_ms, filtered))
                            .map_err(std::io::Error::other)?;
                        engine.tick(f.timestamp_ms);
                    }
                    Err(e) => engine.log_quality(format!("frame rejected: {e}")),
                }
            }
        }
        self.flush_engine()
    }

    fn watchdog_tick(&self, now_ms: f64) -> Result<(), SessionError> {
        self.engine.lock().expect("engine lock").tick(now_ms);
        self.flush_engine()
    }

    /// Replace the running source. The engine clock carries on, so the new
    /// stream is rebased to follow the old one.
    pub fn set_source(self: &Arc<Self>, descriptor: &str) -> Result<(), SessionError> {
        let spec: SourceSpec = descriptor.parse()?;
        self.stop_source();
        let feed = Feed::new();
        spawn_producer(&spec, feed.clone())?;
        *self.feed.lock().expect("feed lock") = Some(feed.clone());
        tokio::spawn(run_consumer(self.clone(), feed));
        self.update(|r| {
            r.source = Some(descriptor.to_string());
            Ok(())
        })
    }

    /// Pause ingestion. The recording and calibration are kept.
    pub fn stop_source(&self) {
        if let Some(feed) = self.feed.lock().expect("feed lock").take() {
            feed.stop();
        }
    }

    pub fn start_calibration(&self) -> Result<CalibrationStatus, SessionError> {
        let status = self
            .engine
            .lock()
            .expect("engine lock")
            .start_calibration()?;
        self.flush_engine()?;
        Ok(status)
    }

    pub fn resume_calibration(&self) -> Result<CalibrationStatus, SessionError> {
        let status = self
            .engine
            .lock()
            .expect("engine lock")
            .resume_calibration()?;
        self.flush_engine()?;
        Ok(status)
    }

    pub fn typing_started(&self) -> Result<FreezeState, SessionError> {
        let state = self.engine.lock().expect("engine lock").on_typing_started();
        self.flush_engine()?;
        Ok(state)
    }

    fn delivered(&self) -> Result<(), SessionError> {
        self.engine
            .lock()
            .expect("engine lock")
            .on_response_delivered();
        self.flush_engine()
    }

    // --- chats ----------------------------------------------------------

    pub fn create_chat(
        &self,
        title: Option<String>,
        folder: Option<String>,
    ) -> Result<Chat, SessionError> {
        self.update(|r| {
            if let Some(f) = &folder {
                if !r.history.folders.contains(f) {
                    return Err(SessionError::NotFound(format!("folder {f:?}")));
                }
            }
            let chat = Chat {
                id: uuid::Uuid::new_v4().to_string(),
                title: title.unwrap_or_else(|| "New chat".into()),
                folder,
                created_ms: unix_ms(),
                turns: Vec::new(),
            };
            r.history.chats.push(chat.clone());
            Ok(chat)
        })
    }

    /// Full loop for one learner message: freeze, inject when mood mode is
    /// on, call the model, deliver, unfreeze. On failure the history is left
    /// untouched.
    pub async fn post_message(
        &self,
        chat_id: &str,
        text: &str,
        client: &dyn ChatClient,
        cfg: &Config,
    ) -> Result<Exchange, SessionError> {
        let _guard = self.chat_lock.lock().await;
        if text.trim().is_empty() {
            return Err(SessionError::BadRequest("message text is empty".into()));
        }
        if text.contains(ENGAGEMENT_MARKER) {
            return Err(SessionError::BadRequest(
                "message contains a reserved marker".into(),
            ));
        }
        let rec = self.snapshot();
        let chat = rec
            .chat(chat_id)
            .ok_or_else(|| SessionError::NotFound(format!("chat {chat_id}")))?;
        let mode = if rec.settings.mood_mode {
            if rec.calibration.is_none() {
                return Err(SessionError::Conflict(
                    "calibration must complete before chatting in mood mode".into(),
                ));
            }
            ChatMode::Adaptive
        } else {
            ChatMode::Control
        };

        let freeze = self.typing_started()?;
        let mut user = ChatTurn::user(text, mode, Some(freeze.frozen_score), unix_ms() as f64);
        user.default_score = mode == ChatMode::Adaptive && freeze.default_flag;
        let mut history = chat.turns.clone();
        history.push(user.clone());
        let bundle = PromptBundle {
            mode,
            history,
            model: cfg.llm.model.clone(),
            temperature: cfg.llm.temperature,
        };
        let request = match bundle.to_request() {
            Ok(r) => r,
            Err(e) => {
                self.delivered()?;
                return Err(SessionError::BadRequest(e.to_string()));
            }
        };

        self.in_flight.store(true, Ordering::SeqCst);
        let result = send_chat(client, &request, RetryPolicy::from(&cfg.llm)).await;
        self.in_flight.store(false, Ordering::SeqCst);
        self.delivered()?;
        let completion = result?;

        let mut assistant = ChatTurn::assistant(completion.text, mode, unix_ms() as f64);
        assistant.latency_ms = Some(completion.latency_ms);
        let exchange = Exchange { user, assistant };
        self.update(|r| {
            let chat = r
                .chat_mut(chat_id)
                .ok_or_else(|| SessionError::NotFound(format!("chat {chat_id}")))?;
            chat.turns.push(exchange.user.clone());
            chat.turns.push(exchange.assistant.clone());
            Ok(())
        })?;
        Ok(exchange)
    }

    /// Clear chats and folders; calibration and settings stay.
    pub fn reset(&self) -> Result<(), SessionError> {
        self.update(|r| {
            r.history = ChatHistory::default();
            Ok(())
        })
    }

    pub fn history_json(&self) -> Vec<u8> {
        let mut out =
            serde_json::to_vec_pretty(&self.snapshot().history).expect("history serialises");
        out.push(b'\n');
        out
    }

    pub fn import_history(&self, bytes: &[u8]) -> Result<(), SessionError> {
        let history: ChatHistory = serde_json::from_slice(bytes)
            .map_err(|e| SessionError::BadRequest(format!("chat import: {e}")))?;
        let leaked = history
            .chats
            .iter()
            .flat_map(|c| &c.turns)
            .any(|t| t.visible_text.contains(ENGAGEMENT_MARKER));
        if leaked {
            return Err(SessionError::BadRequest(
                "imported text contains a reserved marker".into(),
            ));
        }
        self.update(|r| {
            r.history = history;
            Ok(())
        })
    }

    /// Zip of the manifest, chats and the three recordings, in fixed order
    /// with fixed timestamps.
    pub fn export_zip(&self) -> Result<Vec<u8>, SessionError> {
        self.sink.lock().expect("sink lock").flush()?;
        let manifest = ExportManifest {
            session_id: self.id.clone(),
            pending_completion: self.in_flight.load(Ordering::SeqCst),
            files: EXPORT_FILES.iter().map(|s| s.to_string()).collect(),
        };
        let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
        let opts = zip::write::SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Deflated)
            .last_modified_time(zip::DateTime::default());
        let read = |p: std::path::PathBuf| -> std::io::Result<Vec<u8>> {
            let mut buf = Vec::new();
            File::open(p)?.read_to_end(&mut buf)?;
            Ok(buf)
        };
        for name in EXPORT_FILES {
            let bytes = match name {
                "manifest.json" => {
                    serde_json::to_vec_pretty(&manifest).expect("manifest serialises")
                }
                "chats.json" => self.history_json(),
                "metrics.jsonl" => read(self.paths.metrics())?,
                "raw.csv" => read(self.paths.raw())?,
                _ => read(self.paths.filtered())?,
            };
            zip.start_file(name, opts).map_err(std::io::Error::other)?;
            zip.write_all(&bytes)?;
        }
        Ok(zip.finish().map_err(std::io::Error::other)?.into_inner())
    }
}

/// Consumer half of a feed: rebase, score, record. Advances the engine clock
/// on its own when the source goes quiet so stale samples and stream loss
/// still surface.
async fn run_consumer(session: Arc<Session>, feed: Arc<Feed>) {
    let mut rebaser = Rebaser::new();
    let mut quiet_since = Instant::now();
    let mut clock_at_quiet = session.engine.lock().expect("engine lock").now_ms();
    let mut reported_end = false;
    while !feed.stopped() {
        let batch = feed.take();
        let got_frames = !batch.frames.is_empty();
        if got_frames || !batch.events.is_empty() {
            if let Err(e) = session.ingest(&mut rebaser, batch.frames, batch.events) {
                tracing::error!(session = %session.id, error = %e, "ingest failed");
            }
            if got_frames {
                quiet_since = Instant::now();
                clock_at_quiet = session.engine.lock().expect("engine lock").now_ms();
                continue;
            }
        }
        if batch.finished && !reported_end {
            reported_end = true;
            session
                .engine
                .lock()
                .expect("engine lock")
                .log_quality("source ended");
        }
        if tokio::time::timeout(WATCHDOG, feed.notify.notified())
            .await
            .is_err()
        {
            let now = clock_at_quiet + quiet_since.elapsed().as_secs_f64() * 1000.0;
            if let Err(e) = session.watchdog_tick(now) {
                tracing::error!(session = %session.id, error = %e, "watchdog tick failed");
            }
        }
    }
}
