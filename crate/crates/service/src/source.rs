//! Frame sources for a session and the producer side of its feed.
//!
//! Descriptors:
//!
//! ```text
//! bridge://host:port
//! replay://<path>[?speed=realtime|max|<n>x]
//! synth://<spec.toml|spec.json>[?speed=realtime|max|<n>x]
//! ```

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use neurochat_core::ingest::{
    read_csv, synth_generate, BridgeDecoder, BridgeEvent, CsvReplay, DropOldestQueue, QueueEvent,
    ReplaySpeed, SynthSpec,
};
use neurochat_core::EegFrame;
use thiserror::Error;
use tokio::io::AsyncReadExt;
use tokio::sync::Notify;

#[derive(Debug, Error, PartialEq)]
pub enum SourceError {
    #[error("unrecognised source descriptor {0:?}")]
    Descriptor(String),
    #[error("{0}")]
    Load(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Bridge { addr: String },
    Replay { path: PathBuf, speed: ReplaySpeed },
    Synth { path: PathBuf, speed: ReplaySpeed },
}

impl FromStr for SourceSpec {
    type Err = SourceError;

    fn from_str(s: &str) -> Result<Self, SourceError> {
        let bad = || SourceError::Descriptor(s.to_string());
        let (scheme, rest) = s.split_once("://").ok_or_else(bad)?;
        let (target, query) = match rest.split_once('?') {
            Some((t, q)) => (t, Some(q)),
            None => (rest, None),
        };
        if target.is_empty() {
            return Err(bad());
        }
        let mut speed = ReplaySpeed::Realtime;
        for pair in query.into_iter().flat_map(|q| q.split('&')) {
            match pair.split_once('=') {
                Some(("speed", v)) => speed = v.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        match scheme {
            "bridge" if query.is_none() && target.contains(':') => Ok(SourceSpec::Bridge {
                addr: target.to_string(),
            }),
            "replay" => Ok(SourceSpec::Replay {
                path: target.into(),
                speed,
            }),
            "synth" => Ok(SourceSpec::Synth {
                path: target.into(),
                speed,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug)]
struct FeedState {
    queue: DropOldestQueue<EegFrame>,
    events: Vec<String>,
    dropped: u64,
    finished: bool,
}

/// Bounded hand-off between one producer and the session's consumer.
/// Paced producers drop the oldest frames when the consumer falls two
/// seconds behind; max-speed producers wait for room instead.
#[derive(Debug)]
pub struct Feed {
    state: Mutex<FeedState>,
    pub notify: Notify,
    stop: AtomicBool,
}

pub struct Batch {
    pub frames: Vec<EegFrame>,
    pub events: Vec<String>,
    pub finished: bool,
}

impl Feed {
    pub fn new() -> Arc<Self> {
        Arc::new(Self {
            state: Mutex::new(FeedState {
                queue: DropOldestQueue::default(),
                events: Vec::new(),
                dropped: 0,
                finished: false,
            }),
            notify: Notify::new(),
            stop: AtomicBool::new(false),
        })
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        self.notify.notify_one();
    }

    pub fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    fn has_room(&self) -> bool {
        let s = self.state.lock().expect("feed lock");
        s.queue.len() < s.queue.capacity()
    }

    pub fn push(&self, frame: EegFrame) {
        let mut s = self.state.lock().expect("feed lock");
        if let Some(QueueEvent::Dropped { count }) = s.queue.push(frame) {
            s.dropped += count;
        }
        drop(s);
        self.notify.notify_one();
    }

    pub fn event(&self, event: impl Into<String>) {
        self.state
            .lock()
            .expect("feed lock")
            .events
            .push(event.into());
        self.notify.notify_one();
    }

    pub fn finish(&self) {
        self.state.lock().expect("feed lock").finished = true;
        self.notify.notify_one();
    }

    pub fn take(&self) -> Batch {
        let mut s = self.state.lock().expect("feed lock");
        if s.dropped > 0 {
            let n = std::mem::take(&mut s.dropped);
            s.events
                .push(format!("consumer behind: dropped {n} oldest frame(s)"));
        }
        Batch {
            frames: s.queue.drain().collect(),
            events: std::mem::take(&mut s.events),
            finished: s.finished,
        }
    }
}

fn load_frames(
    spec: &SourceSpec,
) -> Result<(Vec<EegFrame>, Vec<String>, ReplaySpeed), SourceError> {
    match spec {
        SourceSpec::Replay { path, speed } => {
            let (frames, warnings) =
                read_csv(path).map_err(|e| SourceError::Load(e.to_string()))?;
            Ok((frames, warnings, *speed))
        }
        SourceSpec::Synth { path, speed } => {
            let synth = SynthSpec::load(path).map_err(|e| SourceError::Load(e.to_string()))?;
            let frames = synth_generate(&synth).map_err(|e| SourceError::Load(e.to_string()))?;
            Ok((frames, Vec::new(), *speed))
        }
        SourceSpec::Bridge { .. } => unreachable!("bridge frames arrive over the network"),
    }
}

/// Start the producer for `spec`. File-backed sources are loaded up front so
/// a bad path fails the request instead of the background task.
pub fn spawn_producer(spec: &SourceSpec, feed: Arc<Feed>) -> Result<(), SourceError> {
    match spec {
        SourceSpec::Bridge { addr } => {
            let addr = addr.clone();
            tokio::spawn(run_bridge(addr, feed));
        }
        _ => {
            let (frames, warnings, speed) = load_frames(spec)?;
            for w in warnings {
                feed.event(w);
            }
            tokio::task::spawn_blocking(move || run_paced(frames, speed, feed));
        }
    }
    Ok(())
}

fn run_paced(frames: Vec<EegFrame>, speed: ReplaySpeed, feed: Arc<Feed>) {
    for frame in CsvReplay::new(frames, speed, Vec::new()) {
        if feed.stopped() {
            return;
        }
        if speed == ReplaySpeed::Max {
            while !feed.has_room() {
                if feed.stopped() {
                    return;
                }
                std::thread::sleep(Duration::from_millis(1));
            }
        }
        feed.push(frame);
    }
    feed.finish();
}

async fn run_bridge(addr: String, feed: Arc<Feed>) {
    let mut stream = match tokio::net::TcpStream::connect(&addr).await {
        Ok(s) => s,
        Err(e) => {
            feed.event(format!("bridge connect to {addr} failed: {e}"));
            feed.finish();
            return;
        }
    };
    let started = Instant::now();
    let mut decoder = BridgeDecoder::new();
    let mut buf = vec![0u8; 8192];
    loop {
        if feed.stopped() {
            return;
        }
        let n = tokio::select! {
            r = stream.read(&mut buf) => r,
            _ = tokio::time::sleep(Duration::from_millis(200)) => continue,
        };
        let n = match n {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) => {
                feed.event(format!("bridge read failed: {e}"));
                break;
            }
        };
        let arrival = started.elapsed().as_secs_f64() * 1000.0;
        match decoder.push_bytes(&buf[..n], arrival) {
            Ok(events) => {
                for ev in events {
                    match ev {
                        BridgeEvent::Frame(f) => feed.push(f),
                        BridgeEvent::Gap { after_seq, missing } => {
                            feed.event(format!("{missing} frame(s) missing after seq {after_seq}"))
                        }
                        BridgeEvent::Malformed { line, reason } => {
                            tracing::debug!(line, %reason, "malformed bridge line")
                        }
                        BridgeEvent::OutOfOrder { seq } => {
                            feed.event(format!("out-of-order frame seq {seq} dropped"))
                        }
                    }
                }
            }
            Err(e) => {
                feed.event(format!("bridge aborted: {e}"));
                break;
            }
        }
    }
    feed.finish();
}
