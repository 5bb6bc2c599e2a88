//! Pure DSP: filters, epoching, spectra, band powers and the engagement index.

mod engagement;
mod epoch;
mod filter;
mod spectrum;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engagement::{
    band_power, engagement_index, normalize_engagement, sliding_window_mean, BandPowers,
    CalibrationResult, EngagementValue, TimedValue,
};
pub use epoch::{Epoch, Epocher};
pub use filter::{Biquad, BiquadCascade, ChannelFilter, Preprocessor};
pub use spectrum::{ChannelPsd, PsdEstimator, SpectralWindow};

/// The headset streams at a fixed rate; nothing else is accepted.
pub const SAMPLE_RATE_HZ: u32 = 256;
pub const CHANNEL_COUNT: usize = 4;
pub const CHANNEL_NAMES: [&str; CHANNEL_COUNT] = ["TP9", "AF7", "AF8", "TP10"];
/// One epoch is one second of samples.
pub const EPOCH_LEN: usize = SAMPLE_RATE_HZ as usize;
/// Epochs start every 250 ms.
pub const EPOCH_HOP: usize = EPOCH_LEN / 4;
pub const SAMPLE_PERIOD_MS: f64 = 1000.0 / SAMPLE_RATE_HZ as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("engagement undefined: alpha + theta = {denominator:e} is below the guard")]
    InvalidEngagement { denominator: f64 },
    #[error("no valid engagement values in window")]
    StaleScore,
    #[error("degenerate calibration: e_min = {e_min}, e_max = {e_max}")]
    Calibration { e_min: f64, e_max: f64 },
}

/// One multi-channel sample in microvolts, channels ordered TP9, AF7, AF8, TP10.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EegFrame {
    pub timestamp_ms: f64,
    pub channels: [f64; CHANNEL_COUNT],
}

impl EegFrame {
    pub fn new(timestamp_ms: f64, channels: [f64; CHANNEL_COUNT]) -> Self {
        Self {
            timestamp_ms,
            channels,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.timestamp_ms.is_finite() && self.channels.iter().all(|v| v.is_finite())
    }
}

/// Half-open frequency interval `[low_hz, high_hz)` over bin centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Band {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Band {
    pub const fn new(low_hz: f64, high_hz: f64) -> Self {
        Self { low_hz, high_hz }
    }

    pub fn contains(&self, f_hz: f64) -> bool {
        self.low_hz <= f_hz && f_hz < self.high_hz
    }
}

impl From<[f64; 2]> for Band {
    fn from(v: [f64; 2]) -> Self {
        Band::new(v[0], v[1])
    }
}

impl From<Band> for [f64; 2] {
    fn from(b: Band) -> Self {
        [b.low_hz, b.high_hz]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bands {
    pub theta: Band,
    pub alpha: Band,
    pub beta: Band,
}

impl Default for Bands {
    fn default() -> Self {
        Self {
            theta: Band::new(4.0, 7.0),
            alpha: Band::new(7.0, 11.0),
            beta: Band::new(11.0, 20.0),
        }
    }
}
