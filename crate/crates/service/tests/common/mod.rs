#![allow(dead_code)]

use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::StreamExt;
use neurochat_core::ingest::{SynthComponent, SynthSpec};
use neurochat_core::Config;
use neurochat_service::gateway::{ChatClient, MockClient};
use neurochat_service::{app, AppState};
use serde_json::{json, Value};
use tempfile::TempDir;

pub struct Harness {
    pub base: String,
    pub state: AppState,
    pub dir: TempDir,
    pub http: reqwest::Client,
}

/// Probe 2 s, tasks of 8 s, 2 s calibration windows, at least 3 windows.
pub fn short_config() -> Config {
    let mut cfg = Config::default();
    cfg.engine.probe_s = 2.0;
    cfg.engine.calibration_task_s = 8.0;
    cfg.engine.calibration_window_s = 2.0;
    cfg.engine.min_calibration_windows = 3;
    cfg.llm.retry_backoff_ms = 10;
    cfg
}

pub async fn serve(state: AppState) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app(state)).await.unwrap();
    });
    format!("http://{addr}")
}

impl Harness {
    pub async fn start(cfg: Config) -> Self {
        Self::with_client(cfg, Arc::new(MockClient::new())).await
    }

    pub async fn with_client(cfg: Config, client: Arc<dyn ChatClient>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let state = AppState::open(dir.path(), cfg, client, None).unwrap();
        let base = serve(state.clone()).await;
        Self {
            base,
            state,
            dir,
            http: reqwest::Client::new(),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/api/v1{path}", self.base)
    }

    pub async fn get(&self, path: &str) -> reqwest::Response {
        self.http.get(self.url(path)).send().await.unwrap()
    }

    pub async fn get_json(&self, path: &str) -> Value {
        let resp = self.get(path).await;
        assert!(resp.status().is_success(), "GET {path}: {}", resp.status());
        resp.json().await.unwrap()
    }

    pub async fn post(&self, path: &str, body: Value) -> reqwest::Response {
        self.http
            .post(self.url(path))
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    pub async fn post_ok(&self, path: &str, body: Value) -> Value {
        let resp = self.post(path, body).await;
        let status = resp.status();
        let text = resp.text().await.unwrap();
        assert!(status.is_success(), "POST {path}: {status} {text}");
        serde_json::from_str(&text).unwrap()
    }

    pub async fn patch(&self, path: &str, body: Value) -> reqwest::Response {
        self.http
            .patch(self.url(path))
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    pub async fn put(&self, path: &str, body: Value) -> reqwest::Response {
        self.http
            .put(self.url(path))
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    pub async fn delete(&self, path: &str) -> reqwest::Response {
        self.http.delete(self.url(path)).send().await.unwrap()
    }

    /// New session with mood mode as given; returns its id.
    pub async fn session(&self, mood_mode: bool) -> String {
        let rec = self
            .post_ok(
                "/sessions",
                json!({ "settings": { "mood_mode": mood_mode } }),
            )
            .await;
        rec["id"].as_str().unwrap().to_string()
    }

    pub async fn chat(&self, sid: &str) -> String {
        let chat = self
            .post_ok(&format!("/sessions/{sid}/chats"), json!({}))
            .await;
        chat["id"].as_str().unwrap().to_string()
    }

    pub async fn set_source(&self, sid: &str, descriptor: &str) {
        let resp = self
            .put(
                &format!("/sessions/{sid}/source"),
                json!({ "source": descriptor }),
            )
            .await;
        assert!(
            resp.status().is_success(),
            "source {descriptor}: {}",
            resp.text().await.unwrap()
        );
    }

    /// Write `spec` under the temp dir and return a synth descriptor for it.
    pub fn synth_source(&self, name: &str, spec: &SynthSpec, speed: &str) -> String {
        let path = self.dir.path().join(format!("{name}.json"));
        std::fs::write(&path, serde_json::to_vec(spec).unwrap()).unwrap();
        format!("synth://{}?speed={speed}", path.display())
    }

    pub async fn latest_t(&self, sid: &str) -> Option<f64> {
        let v = self
            .get_json(&format!("/sessions/{sid}/engagement/latest"))
            .await;
        v["t_ms"].as_f64()
    }

    /// Wait until the session clock reaches `t_ms`.
    pub async fn wait_clock(&self, sid: &str, t_ms: f64, limit: Duration) {
        let deadline = Instant::now() + limit;
        loop {
            if self.latest_t(sid).await.is_some_and(|t| t >= t_ms) {
                return;
            }
            assert!(Instant::now() < deadline, "clock never reached {t_ms} ms");
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    /// Start calibration once the probe can pass and wait for completion.
    pub async fn calibrate(&self, sid: &str) -> Value {
        self.wait_clock(sid, 4000.0, Duration::from_secs(20)).await;
        let resp = self
            .post(&format!("/sessions/{sid}/calibration/start"), json!({}))
            .await;
        assert!(
            resp.status().is_success(),
            "calibration start: {}",
            resp.text().await.unwrap()
        );
        let deadline = Instant::now() + Duration::from_secs(30);
        loop {
            let status = self.get_json(&format!("/sessions/{sid}/calibration")).await;
            match status["phase"]["phase"].as_str().unwrap() {
                "complete" => return status["result"].clone(),
                "failed" | "interrupted" => panic!("calibration ended badly: {status}"),
                _ => {}
            }
            assert!(
                Instant::now() < deadline,
                "calibration did not finish: {status}"
            );
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    pub async fn export(&self, sid: &str) -> Vec<(String, Vec<u8>)> {
        let resp = self.get(&format!("/sessions/{sid}/export")).await;
        assert_eq!(resp.status(), 200);
        assert_eq!(resp.headers()["content-type"], "application/zip");
        unzip(&resp.bytes().await.unwrap())
    }

    pub fn session_dir(&self, sid: &str) -> PathBuf {
        self.dir.path().join("sessions").join(sid)
    }
}

pub fn unzip(bytes: &[u8]) -> Vec<(String, Vec<u8>)> {
    let mut archive = zip::ZipArchive::new(std::io::Cursor::new(bytes)).unwrap();
    (0..archive.len())
        .map(|i| {
            let mut f = archive.by_index(i).unwrap();
            let mut buf = Vec::new();
            f.read_to_end(&mut buf).unwrap();
            (f.name().to_string(), buf)
        })
        .collect()
}

pub fn entry<'a>(files: &'a [(String, Vec<u8>)], name: &str) -> &'a [u8] {
    &files.iter().find(|(n, _)| n == name).unwrap().1
}

/// Clean three-tone signal whose beta amplitude swings slowly, so any
/// stretch of it calibrates to a usable range.
pub fn modulated_spec(duration_s: f64, seed: u64) -> SynthSpec {
    SynthSpec::new(
        SynthComponent::new(10.0, 5.0),
        SynthComponent::new(10.0, 9.0),
        SynthComponent::new(10.0, 15.0),
    )
    .modulate_beta(0.6, 12.0)
    .noise(0.5)
    .duration(duration_s)
    .seed(seed)
}

/// Reads `engagement` events from a server-sent event stream.
pub struct SseReader {
    stream: futures::stream::BoxStream<'static, reqwest::Result<axum::body::Bytes>>,
    buf: String,
}

impl SseReader {
    pub async fn open(url: &str) -> Self {
        let resp = reqwest::Client::new().get(url).send().await.unwrap();
        assert_eq!(resp.status(), 200);
        assert!(resp.headers()["content-type"]
            .to_str()
            .unwrap()
            .starts_with("text/event-stream"));
        Self {
            stream: resp.bytes_stream().boxed(),
            buf: String::new(),
        }
    }

    /// Next engagement payload, or `None` after `limit`.
    pub async fn next(&mut self, limit: Duration) -> Option<Value> {
        let deadline = tokio::time::Instant::now() + limit;
        loop {
            while let Some(end) = self.buf.find("\n\n") {
                let block: String = self.buf.drain(..end + 2).collect();
                let mut event = None;
                let mut data = String::new();
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("event:") {
                        event = Some(v.trim().to_string());
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.trim_start());
                    }
                }
                if event.as_deref() == Some("engagement") {
                    return Some(serde_json::from_str(&data).unwrap());
                }
            }
            let chunk = tokio::time::timeout_at(deadline, self.stream.next())
                .await
                .ok()??;
            self.buf
                .push_str(std::str::from_utf8(&chunk.unwrap()).unwrap());
        }
    }
}

pub fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}
