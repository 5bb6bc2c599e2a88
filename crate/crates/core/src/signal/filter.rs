//! Stateful causal IIR filtering.
//!
//! The band-pass is a cascade of a Butterworth high-pass at the lower edge and a
//! Butterworth low-pass at the upper edge, each realised as second-order
//! sections from the bilinear transform with frequency pre-warping. The notch is
//! a single second-order section.

use std::f64::consts::PI;

use super::{EegFrame, SignalError, CHANNEL_COUNT};
use crate::config::SignalConfig;

/// Normalised second-order section (`a0 == 1`), run in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn from_unnormalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b0: b[0] / a[0],
            b1: b[1] / a[0],
            b2: b[2] / a[0],
            a1: a[1] / a[0],
            a2: a[2] / a[0],
        }
    }

    pub fn lowpass(cutoff_hz: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        Self::from_unnormalized(
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0],
            [1.0 + alpha, -2.0 * cos, 1.0 - alpha],
        )
    }

    pub fn highpass(cutoff_hz: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        Self::from_unnormalized(
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0],
            [1.0 + alpha, -2.0 * cos, 1.0 - alpha],
        )
    }

    pub fn notch(center_hz: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * center_hz / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        Self::from_unnormalized(
            [1.0, -2.0 * cos, 1.0],
            [1.0 + alpha, -2.0 * cos, 1.0 - alpha],
        )
    }

    /// `|H(e^{jw})|` at `f_hz`, evaluated from the coefficients.
    pub fn magnitude(&self, f_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f_hz / fs;
        // z^-1 = e^{-jw}
        let (s1, c1) = (-w).sin_cos();
        let (s2, c2) = (-2.0 * w).sin_cos();
        let num = (
            self.b0 + self.b1 * c1 + self.b2 * c2,
            self.b1 * s1 + self.b2 * s2,
        );
        let den = (
            1.0 + self.a1 * c1 + self.a2 * c2,
            self.a1 * s1 + self.a2 * s2,
        );
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Chain of second-order sections sharing one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade {
    sections: Vec<Biquad>,
}

impl BiquadCascade {
    pub fn new(sections: Vec<Biquad>) -> Self {
        Self { sections }
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Quality factors of the Butterworth pole pairs for an even `order`.
    fn butterworth_qs(order: usize) -> impl Iterator<Item = f64> {
        debug_assert!(order.is_multiple_of(2) && order > 0);
        (0..order / 2).map(move |k| {
            let angle = (2 * k + 1) as f64 * PI / (2 * order) as f64;
            1.0 / (2.0 * angle.cos())
        })
    }

    pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, fs: f64) -> Self {
        Self::new(
            Self::butterworth_qs(order)
                .map(|q| Biquad::lowpass(cutoff_hz, fs, q))
                .collect(),
        )
    }

    pub fn butterworth_highpass(order: usize, cutoff_hz: f64, fs: f64) -> Self {
        Self::new(
            Self::butterworth_qs(order)
                .map(|q| Biquad::highpass(cutoff_hz, fs, q))
                .collect(),
        )
    }

    /// High-pass at `low_hz` followed by low-pass at `high_hz`, each of `order`.
    pub fn butterworth_bandpass(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Self {
        let mut sections = Self::butterworth_highpass(order, low_hz, fs).sections;
        sections.extend(Self::butterworth_lowpass(order, high_hz, fs).sections);
        Self::new(sections)
    }

    pub fn then(mut self, other: BiquadCascade) -> Self {
        self.sections.extend(other.sections);
        self
    }

    pub fn magnitude(&self, f_hz: f64, fs: f64) -> f64 {
        self.sections
            .iter()
            .map(|s| s.magnitude(f_hz, fs))
            .product()
    }
}

/// One channel's filter: coefficients plus delay-line state.
#[derive(Debug, Clone)]
pub struct ChannelFilter {
    cascade: BiquadCascade,
    state: Vec<[f64; 2]>,
}

impl ChannelFilter {
    pub fn new(cascade: BiquadCascade) -> Self {
        let state = vec![[0.0; 2]; cascade.sections.len()];
        Self { cascade, state }
    }

    pub fn cascade(&self) -> &BiquadCascade {
        &self.cascade
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = [0.0; 2]);
    }

    /// Advance one sample. The caller guarantees `x` is finite.
    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let mut v = x;
        for (s, z) in self.cascade.sections.iter().zip(self.state.iter_mut()) {
            let y = s.b0 * v + z[0];
            z[0] = s.b1 * v - s.a1 * y + z[1];
            z[1] = s.b2 * v - s.a2 * y;
            v = y;
        }
        v
    }

    /// Filter a block, continuing from the current state. A non-finite sample
    /// rejects the whole block and leaves the state untouched.
    pub fn filter_block(&mut self, input: &[f64]) -> Result<Vec<f64>, SignalError> {
        if let Some(index) = input.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite { index });
        }
        Ok(input.iter().map(|&x| self.step(x)).collect())
    }
}

/// Band-pass then notch, applied independently to each of the four channels.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    channels: [ChannelFilter; CHANNEL_COUNT],
    fs: f64,
}

impl Preprocessor {
    pub fn new(cfg: &SignalConfig) -> Self {
        let fs = f64::from(cfg.sample_rate_hz);
        let chain = Self::design(cfg);
        Self {
            channels: std::array::from_fn(|_| ChannelFilter::new(chain.clone())),
            fs,
        }
    }

    pub fn design(cfg: &SignalConfig) -> BiquadCascade {
        let fs = f64::from(cfg.sample_rate_hz);
        BiquadCascade::butterworth_bandpass(
            cfg.bandpass_order,
            cfg.bandpass_low_hz,
            cfg.bandpass_high_hz,
            fs,
        )
        .then(BiquadCascade::new(vec![Biquad::notch(
            cfg.notch_hz,
            fs,
            cfg.notch_q,
        )]))
    }

    pub fn sample_rate(&self) -> f64 {
        self.fs
    }

    pub fn process_frame(&mut self, frame: &EegFrame) -> Result<[f64; CHANNEL_COUNT], SignalError> {
        if let Some(index) = frame.channels.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite { index });
        }
        let mut out = [0.0; CHANNEL_COUNT];
        for (o, (f, &x)) in out
            .iter_mut()
            .zip(self.channels.iter_mut().zip(frame.channels.iter()))
        {
            *o = f.step(x);
        }
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.channels.iter_mut().for_each(ChannelFilter::reset);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 256.0;

    fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / FS).sin())
            .collect()
    }

    fn peak(xs: &[f64]) -> f64 {
        xs.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Analog-prototype magnitudes mapped through the pre-warped bilinear
    /// transform. Independent of the biquad coefficients.
    fn warp(f: f64) -> f64 {
        (PI * f / FS).tan()
    }

    fn butter_lp_oracle(order: usize, fc: f64, f: f64) -> f64 {
        let r = warp(f) / warp(fc);
        1.0 / (1.0 + r.powi(2 * order as i32)).sqrt()
    }

    fn butter_hp_oracle(order: usize, fc: f64, f: f64) -> f64 {
        if f == 0.0 {
            return 0.0;
        }
        let r = warp(fc) / warp(f);
        1.0 / (1.0 + r.powi(2 * order as i32)).sqrt()
    }

    fn notch_oracle(f0: f64, q: f64, f: f64) -> f64 {
        let w = warp(f) / warp(f0);
        let num = (1.0 - w * w).abs();
        num / ((1.0 - w * w).powi(2) + (w / q).powi(2)).sqrt()
    }

    #[test]
    fn cascade_matches_analog_butterworth() {
        let bp = BiquadCascade::butterworth_bandpass(4, 1.0, 30.0, FS);
        for f in [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 45.0, 60.0, 100.0] {
            let oracle = butter_hp_oracle(4, 1.0, f) * butter_lp_oracle(4, 30.0, f);
            assert!(
                (bp.magnitude(f, FS) - oracle).abs() < 1e-9,
                "f={f}: {} vs {oracle}",
                bp.magnitude(f, FS)
            );
        }
        let notch = Biquad::notch(60.0, FS, 30.0);
        for f in [10.0, 20.0, 55.0, 59.0, 60.0, 61.0, 80.0] {
            assert!((notch.magnitude(f, FS) - notch_oracle(60.0, 30.0, f)).abs() < 1e-9);
        }
    }

    #[test]
    fn ten_hz_passes_with_unit_gain() {
        let mut f = ChannelFilter::new(BiquadCascade::butterworth_bandpass(4, 1.0, 30.0, FS));
        let y = f.filter_block(&sine(10.0, 1.0, 4 * 256)).unwrap();
        let gain = peak(&y[256..]);
        assert!((0.9..=1.1).contains(&gain), "gain {gain}");
        let oracle = butter_hp_oracle(4, 1.0, 10.0) * butter_lp_oracle(4, 30.0, 10.0);
        assert!((peak(&y[2 * 256..]) - oracle).abs() < 0.01);
    }

    #[test]
    fn dc_offset_is_removed() {
        let mut f = ChannelFilter::new(BiquadCascade::butterworth_bandpass(4, 1.0, 30.0, FS));
        let y = f.filter_block(&vec![100.0; 20 * 256]).unwrap();
        assert!(
            peak(&y[10 * 256..]) < 5.0,
            "residual {}",
            peak(&y[10 * 256..])
        );
    }

    #[test]
    fn notch_kills_sixty_hz_and_keeps_passband() {
        let mut n = ChannelFilter::new(BiquadCascade::new(vec![Biquad::notch(60.0, FS, 30.0)]));
        let y = n.filter_block(&sine(60.0, 1.0, 8 * 256)).unwrap();
        assert!(
            peak(&y[4 * 256..]) <= 0.01,
            "60 Hz residual {}",
            peak(&y[4 * 256..])
        );
        for f in [10.0, 20.0] {
            n.reset();
            let y = n.filter_block(&sine(f, 1.0, 8 * 256)).unwrap();
            let g = peak(&y[4 * 256..]);
            assert!((0.89..=1.12).contains(&g), "{f} Hz gain {g}");
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let mut p = Preprocessor::new(&SignalConfig::default());
        for i in 0..1000 {
            let out = p.process_frame(&EegFrame::new(i as f64, [0.0; 4])).unwrap();
            assert_eq!(out, [0.0; 4]);
        }
    }

    #[test]
    fn non_finite_sample_reports_index_and_keeps_state() {
        let mut f = ChannelFilter::new(BiquadCascade::butterworth_bandpass(4, 1.0, 30.0, FS));
        let err = f.filter_block(&[1.0, 2.0, f64::NAN, 3.0]).unwrap_err();
        assert_eq!(err, SignalError::NonFinite { index: 2 });
        assert_eq!(f.filter_block(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn prefix_of_output_is_output_of_prefix() {
        let x = sine(13.0, 3.0, 700);
        let mut a = ChannelFilter::new(Preprocessor::design(&SignalConfig::default()));
        let mut b = a.clone();
        let full = a.filter_block(&x).unwrap();
        let part = b.filter_block(&x[..321]).unwrap();
        assert_eq!(&full[..321], &part[..]);
    }

    #[test]
    fn filter_is_linear() {
        let x: Vec<f64> = (0..512).map(|i| ((i * 7919) % 101) as f64 - 50.0).collect();
        let base = ChannelFilter::new(Preprocessor::design(&SignalConfig::default()))
            .filter_block(&x)
            .unwrap();
        for a in [0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = x.iter().map(|v| v * a).collect();
            let y = ChannelFilter::new(Preprocessor::design(&SignalConfig::default()))
                .filter_block(&scaled)
                .unwrap();
            for (u, v) in y.iter().zip(&base) {
                assert!((u - a * v).abs() <= 1e-9 * (a * v).abs().max(1.0));
            }
        }
    }
}
