//! Browser bindings for three pieces of the signal chain: the preprocessing
//! filter response, the engagement index of a synthetic epoch, and
//! calibrated normalisation.
//!
//! Build with `wasm-pack build --target web --out-dir www/pkg`.

use neurochat_core::config::SignalConfig;
use neurochat_core::ingest::{synth_generate, SynthComponent, SynthSpec};
use neurochat_core::signal::{
    engagement_index, normalize_engagement, Bands, Preprocessor, PsdEstimator, CHANNEL_COUNT,
    EPOCH_LEN,
};
use neurochat_core::{BandPowers, CalibrationResult, Epoch};
use wasm_bindgen::prelude::*;

/// Gain in dB of the default filter chain at each frequency.
#[wasm_bindgen]
pub fn filter_response_db(freqs_hz: &[f64]) -> Vec<f64> {
    let cfg = SignalConfig::default();
    let fs = f64::from(cfg.sample_rate_hz);
    let chain = Preprocessor::design(&cfg);
    freqs_hz
        .iter()
        .map(|&f| 20.0 * chain.magnitude(f, fs).max(1e-12).log10())
        .collect()
}

#[wasm_bindgen]
pub struct EpochReport {
    psd: Vec<f64>,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub engagement: f64,
}

#[wasm_bindgen]
impl EpochReport {
    /// Channel-averaged PSD, one bin per Hz from 0 to 128 Hz.
    #[wasm_bindgen(getter)]
    pub fn psd(&self) -> Vec<f64> {
        self.psd.clone()
    }
}

/// Filter three seconds of a 5/9/15 Hz synthetic signal and score its last
/// one-second epoch.
pub fn score_synthetic(
    theta_uv: f64,
    alpha_uv: f64,
    beta_uv: f64,
    noise_uv: f64,
    seed: u64,
) -> Result<EpochReport, String> {
    let spec = SynthSpec::new(
        SynthComponent::new(theta_uv, 5.0),
        SynthComponent::new(alpha_uv, 9.0),
        SynthComponent::new(beta_uv, 15.0),
    )
    .noise(noise_uv)
    .duration(3.0)
    .seed(seed);
    let cfg = SignalConfig::default();
    spec.validate(&Bands::default())
        .map_err(|e| e.to_string())?;
    let frames = synth_generate(&spec).map_err(|e| e.to_string())?;
    let mut pre = Preprocessor::new(&cfg);
    let mut filtered = Vec::with_capacity(frames.len());
    for f in &frames {
        filtered.push(pre.process_frame(f).map_err(|e| e.to_string())?);
    }
    let tail = &filtered[filtered.len() - EPOCH_LEN..];
    let epoch = Epoch {
        start_ms: 0.0,
        samples: std::array::from_fn(|c| tail.iter().map(|s| s[c]).collect()),
        discontinuous: false,
    };
    let psds = PsdEstimator::new(cfg.window, f64::from(cfg.sample_rate_hz))
        .epoch_psd(&epoch)
        .map_err(|e| e.to_string())?;
    let bands =
        BandPowers::from_channels(&psds, &Bands::default(), 0.0).map_err(|e| e.to_string())?;
    let e = engagement_index(&bands, cfg.epsilon).map_err(|e| e.to_string())?;
    let bins = psds[0].bins.len();
    let psd = (0..bins)
        .map(|k| psds.iter().map(|p| p.bins[k]).sum::<f64>() / CHANNEL_COUNT as f64)
        .collect();
    Ok(EpochReport {
        psd,
        theta: bands.theta,
        alpha: bands.alpha,
        beta: bands.beta,
        engagement: e.raw_e,
    })
}

#[wasm_bindgen]
pub fn analyze_synthetic(
    theta_uv: f64,
    alpha_uv: f64,
    beta_uv: f64,
    noise_uv: f64,
    seed: u32,
) -> Result<EpochReport, JsError> {
    score_synthetic(theta_uv, alpha_uv, beta_uv, noise_uv, u64::from(seed))
        .map_err(|e| JsError::new(&e))
}

pub fn normalize_value(e: f64, e_min: f64, e_max: f64) -> Result<f64, String> {
    let cal = CalibrationResult::new(e_min, e_max).map_err(|e| e.to_string())?;
    normalize_engagement(e, &cal).map_err(|e| e.to_string())
}

/// `(e - e_min) / (e_max - e_min)` clamped to `[0, 1]`.
#[wasm_bindgen]
pub fn normalize(e: f64, e_min: f64, e_max: f64) -> Result<f64, JsError> {
    normalize_value(e, e_min, e_max).map_err(|e| JsError::new(&e))
}
