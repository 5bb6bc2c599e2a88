//! One-sided power spectral density of a single epoch.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{Epoch, SignalError, CHANNEL_COUNT, EPOCH_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpectralWindow {
    #[default]
    Hann,
    /// No taper. Satisfies Parseval exactly.
    Rectangular,
}

impl SpectralWindow {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            // periodic Hann
            SpectralWindow::Hann => (0..n)
                .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
                .collect(),
            SpectralWindow::Rectangular => vec![1.0; n],
        }
    }
}

/// PSD bins for one channel, `psd[k]` at `k * bin_width_hz`, in uV^2/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPsd {
    pub bins: Vec<f64>,
    pub bin_width_hz: f64,
}

impl ChannelPsd {
    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.bin_width_hz
    }
}

/// FFT-based periodogram with window power correction.
#[derive(Clone)]
pub struct PsdEstimator {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    kind: SpectralWindow,
    fs: f64,
    /// `fs * sum(w^2)`
    scale: f64,
}

impl fmt::Debug for PsdEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PsdEstimator")
            .field("kind", &self.kind)
            .field("len", &self.window.len())
            .field("fs", &self.fs)
            .finish()
    }
}

impl PsdEstimator {
    pub fn new(kind: SpectralWindow, fs: f64) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(EPOCH_LEN);
        let window = kind.coefficients(EPOCH_LEN);
        let scale = fs * window.iter().map(|w| w * w).sum::<f64>();
        Self {
            fft,
            window,
            kind,
            fs,
            scale,
        }
    }

    pub fn window(&self) -> SpectralWindow {
        self.kind
    }

    /// 129 one-sided bins at 1 Hz spacing for a 256-sample input.
    pub fn psd(&self, samples: &[f64]) -> Result<ChannelPsd, SignalError> {
        let n = self.window.len();
        if samples.len() != n {
            return Err(SignalError::Contract(format!(
                "epoch has {} samples, expected {n}",
                samples.len()
            )));
        }
        let mut buf: Vec<Complex<f64>> = samples
            .iter()
            .zip(&self.window)
            .map(|(&x, &w)| Complex::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        let half = n / 2;
        let bins = buf[..=half]
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let p = c.norm_sqr() / self.scale;
                if k == 0 || k == half {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect();
        Ok(ChannelPsd {
            bins,
            bin_width_hz: self.fs / n as f64,
        })
    }

    pub fn epoch_psd(&self, epoch: &Epoch) -> Result<[ChannelPsd; CHANNEL_COUNT], SignalError> {
        let mut out: [Option<ChannelPsd>; CHANNEL_COUNT] = Default::default();
        for (slot, ch) in out.iter_mut().zip(&epoch.samples) {
            *slot = Some(self.psd(ch)?);
        }
        Ok(out.map(|p| p.expect("filled above")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const FS: f64 = 256.0;

    /// Direct O(n^2) DFT, the independent route for every check below.
    fn dft_power(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                let p = (re * re + im * im) / (FS * n as f64);
                if k == 0 || k == n / 2 {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect()
    }

    fn sine(f: f64) -> Vec<f64> {
        (0..256)
            .map(|i| (2.0 * PI * f * i as f64 / FS).sin())
            .collect()
    }

    #[test]
    fn bin_layout() {
        let est = PsdEstimator::new(SpectralWindow::Hann, FS);
        let p = est.psd(&sine(10.0)).unwrap();
        assert_eq!(p.bins.len(), 129);
        assert_eq!(p.frequency(128), 128.0);
    }

    #[test]
    fn rectangular_matches_direct_dft() {
        let est = PsdEstimator::new(SpectralWindow::Rectangular, FS);
        let x: Vec<f64> = (0..256).map(|i| ((i * 37) % 17) as f64 - 8.0).collect();
        let fast = est.psd(&x).unwrap();
        for (a, b) in fast.bins.iter().zip(dft_power(&x)) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn ten_hz_sine_concentrates_in_one_bin() {
        let est = PsdEstimator::new(SpectralWindow::Rectangular, FS);
        let p = est.psd(&sine(10.0)).unwrap();
        let total: f64 = p.bins.iter().sum();
        assert!(p.bins[10] / total >= 0.95);
        let oracle = dft_power(&sine(10.0));
        assert!((p.bins[10] - oracle[10]).abs() < 1e-12);
    }

    #[test]
    fn parseval_on_white_noise() {
        let est = PsdEstimator::new(SpectralWindow::Rectangular, FS);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 10.0).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..256).map(|_| normal.sample(&mut rng)).collect();
            let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / 256.0;
            let p = est.psd(&x).unwrap();
            let total: f64 = p.bins.iter().map(|b| b * p.bin_width_hz).sum();
            assert!(((total - mean_sq) / mean_sq).abs() < 0.01);
        }
    }

    #[test]
    fn hann_keeps_sine_power() {
        // power-corrected Hann preserves the total power of a bin-centred tone
        let est = PsdEstimator::new(SpectralWindow::Hann, FS);
        let p = est.psd(&sine(12.0)).unwrap();
        let total: f64 = p.bins.iter().sum();
        assert!((total - 0.5).abs() < 1e-9, "total {total}");
        assert!(p.bins[12] > p.bins[11] && p.bins[11] > p.bins[10]);
    }

    #[test]
    fn zero_epoch_zero_psd() {
        let est = PsdEstimator::new(SpectralWindow::Hann, FS);
        assert!(est.psd(&[0.0; 256]).unwrap().bins.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn wrong_length_is_contract_violation() {
        let est = PsdEstimator::new(SpectralWindow::Hann, FS);
        assert!(matches!(
            est.psd(&[0.0; 255]),
            Err(SignalError::Contract(_))
        ));
    }
}
