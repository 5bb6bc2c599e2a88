//! Runtime configuration, loaded from a TOML file.
//!
//! Every key is optional; missing keys fall back to the defaults below.
//!
//! ```toml
//! [signal]
//! sample_rate_hz = 256
//! bandpass_low_hz = 1.0
//! bandpass_high_hz = 30.0
//! bandpass_order = 4        # Butterworth order of each band edge
//! notch_hz = 60.0
//! notch_q = 30.0
//! window = "hann"           # or "rectangular"
//! epsilon = 1e-12           # engagement denominator guard, uV^2
//!
//! [bands]
//! theta = [4.0, 7.0]
//! alpha = [7.0, 11.0]
//! beta = [11.0, 20.0]
//!
//! [engine]
//! main_window_s = 15.0
//! calibration_window_s = 10.0
//! calibration_task_s = 120.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{Band, Bands, SpectralWindow, SAMPLE_RATE_HZ};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub signal: SignalConfig,
    pub bands: Bands,
    pub engine: EngineConfig,
    pub llm: LlmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub sample_rate_hz: u32,
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub bandpass_order: usize,
    pub notch_hz: f64,
    pub notch_q: f64,
    pub window: SpectralWindow,
    pub epsilon: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: SAMPLE_RATE_HZ,
            bandpass_low_hz: 1.0,
            bandpass_high_hz: 30.0,
            bandpass_order: 4,
            notch_hz: 60.0,
            notch_q: 30.0,
            window: SpectralWindow::Hann,
            epsilon: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Sliding window for live scoring.
    pub main_window_s: f64,
    /// Sliding window used while calibrating.
    pub calibration_window_s: f64,
    /// Duration of each calibration task.
    pub calibration_task_s: f64,
    /// Minimum number of valid window scores per calibration task.
    pub min_calibration_windows: usize,
    /// Smallest accepted `e_max - e_min`.
    pub min_calibration_span: f64,
    /// Length of the signal-quality probe before calibration starts.
    pub probe_s: f64,
    /// Required fraction of valid epochs during the probe.
    pub probe_min_quality: f64,
    /// Peak absolute amplitude above which an epoch is flagged.
    pub artifact_threshold_uv: f64,
    /// A sample is stale when its valid-epoch fraction is below this.
    pub stale_quality: f64,
    /// No epochs for this long during a calibration task interrupts it.
    pub stream_loss_s: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            main_window_s: 15.0,
            calibration_window_s: 10.0,
            calibration_task_s: 120.0,
            min_calibration_windows: 30,
            min_calibration_span: 1e-6,
            probe_s: 5.0,
            probe_min_quality: 0.8,
            artifact_threshold_uv: 200.0,
            stale_quality: 0.5,
            stream_loss_s: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub model: String,
    /// `None` leaves the provider default in place.
    pub temperature: Option<f64>,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub timeout_s: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4-turbo".to_string(),
            temperature: None,
            max_retries: 2,
            retry_backoff_ms: 250,
            timeout_s: 60,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.signal;
        if s.sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(ConfigError::Invalid(format!(
                "sample_rate_hz must be {SAMPLE_RATE_HZ}, got {}",
                s.sample_rate_hz
            )));
        }
        let nyquist = f64::from(s.sample_rate_hz) / 2.0;
        if !(s.bandpass_low_hz > 0.0
            && s.bandpass_low_hz < s.bandpass_high_hz
            && s.bandpass_high_hz < nyquist)
        {
            return Err(ConfigError::Invalid(format!(
                "bandpass edges must satisfy 0 < low < high < {nyquist}"
            )));
        }
        if s.bandpass_order == 0 || !s.bandpass_order.is_multiple_of(2) {
            return Err(ConfigError::Invalid(
                "bandpass_order must be a positive even number".into(),
            ));
        }
        if !(s.notch_hz > 0.0 && s.notch_hz < nyquist) || s.notch_q <= 0.0 {
            return Err(ConfigError::Invalid("notch_hz/notch_q out of range".into()));
        }
        if !(s.epsilon > 0.0 && s.epsilon.is_finite()) {
            return Err(ConfigError::Invalid("epsilon must be positive".into()));
        }
        for (name, band) in [
            ("theta", self.bands.theta),
            ("alpha", self.bands.alpha),
            ("beta", self.bands.beta),
        ] {
            band.validate()
                .map_err(|e| ConfigError::Invalid(format!("{name}: {e}")))?;
        }
        let e = &self.engine;
        let positive = [
            e.main_window_s,
            e.calibration_window_s,
            e.calibration_task_s,
            e.probe_s,
            e.artifact_threshold_uv,
            e.stream_loss_s,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ConfigError::Invalid(
                "engine durations and thresholds must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&e.stale_quality) || !(0.0..=1.0).contains(&e.probe_min_quality) {
            return Err(ConfigError::Invalid(
                "quality thresholds lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

impl Band {
    fn validate(&self) -> Result<(), String> {
        if !(self.low_hz >= 1.0 && self.high_hz <= 30.0 && self.low_hz < self.high_hz) {
            return Err(format!(
                "band [{}, {}) must lie within [1, 30] Hz and be non-empty",
                self.low_hz, self.high_hz
            ));
        }
        Ok(())
    }
}
