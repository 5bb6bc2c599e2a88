//! Band powers, the engagement index and its calibrated normalisation.

use serde::{Deserialize, Serialize};

use super::{Band, Bands, ChannelPsd, SignalError};

/// Sum of PSD bins whose centre lies in `[low, high)`, times the bin width.
pub fn band_power(psd: &ChannelPsd, band: Band) -> Result<f64, SignalError> {
    if !(band.low_hz >= 1.0 && band.high_hz <= 30.0) {
        return Err(SignalError::Contract(format!(
            "band [{}, {}) outside [1, 30] Hz",
            band.low_hz, band.high_hz
        )));
    }
    let mut hit = false;
    let mut sum = 0.0;
    for (k, p) in psd.bins.iter().enumerate() {
        if band.contains(psd.frequency(k)) {
            hit = true;
            sum += p * psd.bin_width_hz;
        }
    }
    if !hit {
        return Err(SignalError::Contract(format!(
            "band [{}, {}) contains no bins",
            band.low_hz, band.high_hz
        )));
    }
    Ok(sum)
}

/// Theta, alpha and beta power of one epoch, averaged over channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPowers {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epoch_start_ms: f64,
}

impl BandPowers {
    pub fn new(theta: f64, alpha: f64, beta: f64) -> Self {
        Self {
            theta,
            alpha,
            beta,
            epoch_start_ms: 0.0,
        }
    }

    /// Per-channel band powers averaged into one triple.
    pub fn from_channels(
        psds: &[ChannelPsd],
        bands: &Bands,
        epoch_start_ms: f64,
    ) -> Result<Self, SignalError> {
        if psds.is_empty() {
            return Err(SignalError::Contract("no channels".into()));
        }
        let n = psds.len() as f64;
        let mut acc = [0.0; 3];
        for psd in psds {
            acc[0] += band_power(psd, bands.theta)?;
            acc[1] += band_power(psd, bands.alpha)?;
            acc[2] += band_power(psd, bands.beta)?;
        }
        Ok(Self {
            theta: acc[0] / n,
            alpha: acc[1] / n,
            beta: acc[2] / n,
            epoch_start_ms,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementValue {
    pub raw_e: f64,
}

/// `beta / (alpha + theta)`, refusing a denominator below `epsilon`.
pub fn engagement_index(bands: &BandPowers, epsilon: f64) -> Result<EngagementValue, SignalError> {
    let parts = [bands.theta, bands.alpha, bands.beta];
    if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(SignalError::Contract(format!(
            "band powers must be finite and non-negative: {parts:?}"
        )));
    }
    let denominator = bands.alpha + bands.theta;
    if denominator < epsilon {
        return Err(SignalError::InvalidEngagement { denominator });
    }
    Ok(EngagementValue {
        raw_e: bands.beta / denominator,
    })
}

/// A timestamped value that may have been flagged out of window means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedValue {
    pub t_ms: f64,
    pub value: f64,
    pub valid: bool,
}

/// Plain mean of the valid values with `now - window < t <= now`.
pub fn sliding_window_mean(
    values: &[TimedValue],
    window_ms: f64,
    now_ms: f64,
) -> Result<f64, SignalError> {
    let lower = now_ms - window_ms;
    let (sum, n) = values
        .iter()
        .filter(|v| v.valid && v.t_ms > lower && v.t_ms <= now_ms)
        .fold((0.0, 0usize), |(s, n), v| (s + v.value, n + 1));
    if n == 0 {
        return Err(SignalError::StaleScore);
    }
    Ok(sum / n as f64)
}

/// Per-user bounds of the raw engagement index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub e_min: f64,
    pub e_max: f64,
}

impl CalibrationResult {
    pub fn new(e_min: f64, e_max: f64) -> Result<Self, SignalError> {
        let cal = Self { e_min, e_max };
        cal.check()?;
        Ok(cal)
    }

    fn check(&self) -> Result<(), SignalError> {
        if self.e_min.is_finite() && self.e_max.is_finite() && self.e_min < self.e_max {
            Ok(())
        } else {
            Err(SignalError::Calibration {
                e_min: self.e_min,
                e_max: self.e_max,
            })
        }
    }
}

/// `(e - e_min) / (e_max - e_min)`, clamped to `[0, 1]`.
pub fn normalize_engagement(e: f64, cal: &CalibrationResult) -> Result<f64, SignalError> {
    cal.check()?;
    if !e.is_finite() {
        return Err(SignalError::Contract(format!("non-finite engagement {e}")));
    }
    Ok(((e - cal.e_min) / (cal.e_max - cal.e_min)).clamp(0.0, 1.0))
}
