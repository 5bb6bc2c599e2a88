//! Seeded synthetic EEG: one sinusoid per band plus Gaussian noise.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::signal::{Band, Bands, EegFrame, CHANNEL_COUNT, SAMPLE_PERIOD_MS, SAMPLE_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthComponent {
    pub amplitude_uv: f64,
    pub frequency_hz: f64,
}

impl SynthComponent {
    pub const fn new(amplitude_uv: f64, frequency_hz: f64) -> Self {
        Self {
            amplitude_uv,
            frequency_hz,
        }
    }
}

/// Slow sinusoidal change of the beta amplitude, `1 + depth * sin(2 pi t / period)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulation {
    pub depth: f64,
    pub period_s: f64,
}

/// Every channel carries the same three tones; noise is independent per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub theta: SynthComponent,
    pub alpha: SynthComponent,
    pub beta: SynthComponent,
    #[serde(default)]
    pub noise_std_uv: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub start_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_modulation: Option<Modulation>,
}

impl SynthSpec {
    pub fn new(theta: SynthComponent, alpha: SynthComponent, beta: SynthComponent) -> Self {
        Self {
            theta,
            alpha,
            beta,
            noise_std_uv: 0.0,
            duration_s: 10.0,
            seed: 0,
            start_ms: 0.0,
            beta_modulation: None,
        }
    }

    pub fn modulate_beta(mut self, depth: f64, period_s: f64) -> Self {
        self.beta_modulation = Some(Modulation { depth, period_s });
        self
    }

    pub fn noise(mut self, std_uv: f64) -> Self {
        self.noise_std_uv = std_uv;
        self
    }

    pub fn duration(mut self, seconds: f64) -> Self {
        self.duration_s = seconds;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Read a spec from `.json` or `.toml`.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)?;
        let spec: SynthSpec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| IngestError::InvalidSpec(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| IngestError::InvalidSpec(e.to_string()))?
        };
        spec.validate(&Bands::default())?;
        Ok(spec)
    }

    pub fn validate(&self, bands: &Bands) -> Result<(), IngestError> {
        let check = |name: &str, c: &SynthComponent, band: Band| {
            if !(c.amplitude_uv >= 0.0 && c.amplitude_uv.is_finite()) {
                return Err(IngestError::InvalidSpec(format!(
                    "{name} amplitude must be >= 0"
                )));
            }
            if !band.contains(c.frequency_hz) {
                return Err(IngestError::InvalidSpec(format!(
                    "{name} frequency {} Hz outside [{}, {})",
                    c.frequency_hz, band.low_hz, band.high_hz
                )));
            }
            Ok(())
        };
        check("theta", &self.theta, bands.theta)?;
        check("alpha", &self.alpha, bands.alpha)?;
        check("beta", &self.beta, bands.beta)?;
        if !(self.noise_std_uv >= 0.0 && self.noise_std_uv.is_finite()) {
            return Err(IngestError::InvalidSpec("noise_std_uv must be >= 0".into()));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(IngestError::InvalidSpec(
                "duration_s must be positive".into(),
            ));
        }
        if let Some(m) = self.beta_modulation {
            if !((0.0..=1.0).contains(&m.depth) && m.period_s > 0.0 && m.period_s.is_finite()) {
                return Err(IngestError::InvalidSpec(
                    "beta_modulation needs depth in [0, 1] and a positive period".into(),
                ));
            }
        }
        if !self.start_ms.is_finite() {
            return Err(IngestError::InvalidSpec("start_ms must be finite".into()));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration_s * f64::from(SAMPLE_RATE_HZ)).round() as usize
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<EegFrame>, IngestError> {
    spec.validate(&Bands::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise_std_uv > 0.0)
        .then(|| Normal::new(0.0, spec.noise_std_uv).expect("validated std"));
    let tones = [spec.theta, spec.alpha, spec.beta];
    let frames = (0..spec.sample_count())
        .map(|i| {
            let t_s = i as f64 / f64::from(SAMPLE_RATE_HZ);
            let beta_gain = spec.beta_modulation.map_or(1.0, |m| {
                1.0 + m.depth * (std::f64::consts::TAU * t_s / m.period_s).sin()
            });
            let clean: f64 = tones
                .iter()
                .zip([1.0, 1.0, beta_gain])
                .map(|(c, g)| {
                    g * c.amplitude_uv * (std::f64::consts::TAU * c.frequency_hz * t_s).sin()
                })
                .sum();
            let mut channels = [clean; CHANNEL_COUNT];
            if let Some(n) = &noise {
                for v in &mut channels {
                    *v += n.sample(&mut rng);
                }
            }
            EegFrame::new(spec.start_ms + i as f64 * SAMPLE_PERIOD_MS, channels)
        })
        .collect();
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec::new(
            SynthComponent::new(1.0, 5.0),
            SynthComponent::new(1.0, 10.0),
            SynthComponent::new(10.0, 15.0),
        )
        .noise(2.0)
        .duration(3.0)
        .seed(9)
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synth_generate(&spec()).unwrap();
        let b = synth_generate(&spec()).unwrap();
        let bits = |fs: &[EegFrame]| -> Vec<u64> {
            fs.iter()
                .flat_map(|f| std::iter::once(f.timestamp_ms).chain(f.channels))
                .map(f64::to_bits)
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = synth_generate(&spec().seed(10)).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn length_and_clock() {
        let frames = synth_generate(&spec()).unwrap();
        assert_eq!(frames.len(), 768);
        assert_eq!(frames[256].timestamp_ms, 1000.0);
    }

    #[test]
    fn silent_spec_is_flat() {
        let flat = SynthSpec::new(
            SynthComponent::new(0.0, 5.0),
            SynthComponent::new(0.0, 10.0),
            SynthComponent::new(0.0, 15.0),
        );
        assert!(synth_generate(&flat)
            .unwrap()
            .iter()
            .all(|f| f.channels == [0.0; 4]));
    }

    #[test]
    fn modulation_scales_beta_only() {
        let flat = SynthSpec::new(
            SynthComponent::new(0.0, 5.0),
            SynthComponent::new(0.0, 10.0),
            SynthComponent::new(4.0, 15.0),
        )
        .duration(2.0);
        let plain = synth_generate(&flat).unwrap();
        let modded = synth_generate(&flat.clone().modulate_beta(0.5, 4.0)).unwrap();
        for i in [37, 300, 411] {
            let t = i as f64 / 256.0;
            let gain = 1.0 + 0.5 * (std::f64::consts::TAU * t / 4.0).sin();
            assert!(plain[i].channels[0].abs() > 0.1);
            assert!((modded[i].channels[0] - gain * plain[i].channels[0]).abs() < 1e-9);
        }
        assert!(synth_generate(&flat.modulate_beta(1.5, 4.0)).is_err());
    }

    #[test]
    fn frequency_outside_band_rejected() {
        let mut s = spec();
        s.alpha.frequency_hz = 12.0;
        assert!(matches!(
            synth_generate(&s),
            Err(IngestError::InvalidSpec(_))
        ));
    }

    #[test]
    fn loads_toml_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("s.toml");
        std::fs::write(
            &toml_path,
            "duration_s = 2.0\nseed = 3\ntheta = { amplitude_uv = 1.0, frequency_hz = 5.0 }\n\
             alpha = { amplitude_uv = 1.0, frequency_hz = 9.0 }\nbeta = { amplitude_uv = 4.0, frequency_hz = 15.0 }\n",
        )
        .unwrap();
        let s = SynthSpec::load(&toml_path).unwrap();
        assert_eq!(s.seed, 3);
        let json_path = dir.path().join("s.json");
        std::fs::write(&json_path, serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(SynthSpec::load(&json_path).unwrap(), s);
    }
}
