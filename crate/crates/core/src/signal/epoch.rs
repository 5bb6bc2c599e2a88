//! Overlapping one-second epochs, one every 250 ms.

use std::collections::VecDeque;

use super::{CHANNEL_COUNT, EPOCH_HOP, EPOCH_LEN, SAMPLE_PERIOD_MS};

/// Timestamp jumps larger than this break continuity.
pub const MAX_GAP_MS: f64 = 250.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub start_ms: f64,
    /// Channel-major: `samples[c]` holds `EPOCH_LEN` filtered values.
    pub samples: [Vec<f64>; CHANNEL_COUNT],
    /// The epoch spans a gap in the input stream.
    pub discontinuous: bool,
}

impl Epoch {
    pub fn peak_abs(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Streaming segmenter.
///
/// Sample times come from a sample-count clock anchored at the first sample
/// after each gap, so hops on a continuous stream are exactly 250 ms apart even
/// when the source timestamps are rounded to whole milliseconds.
#[derive(Debug, Clone, Default)]
pub struct Epocher {
    buffer: VecDeque<(f64, [f64; CHANNEL_COUNT])>,
    total: u64,
    anchor_ms: f64,
    since_anchor: u64,
    last_source_ms: Option<f64>,
    /// Samples received since the most recent gap, `None` if no gap yet.
    since_gap: Option<u64>,
}

impl Epocher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Push one filtered multi-channel sample; returns an epoch when a hop
    /// boundary is reached.
    pub fn push(&mut self, source_ms: f64, sample: [f64; CHANNEL_COUNT]) -> Option<Epoch> {
        let gap = self
            .last_source_ms
            .is_some_and(|last| source_ms - last > MAX_GAP_MS);
        if self.last_source_ms.is_none() || gap {
            self.anchor_ms = source_ms;
            self.since_anchor = 0;
        }
        if gap {
            self.since_gap = Some(0);
        }
        self.last_source_ms = Some(source_ms);

        let t = self.anchor_ms + self.since_anchor as f64 * SAMPLE_PERIOD_MS;
        self.since_anchor += 1;
        if let Some(n) = self.since_gap.as_mut() {
            *n += 1;
        }
        self.total += 1;
        self.buffer.push_back((t, sample));
        if self.buffer.len() > EPOCH_LEN {
            self.buffer.pop_front();
        }

        let len = EPOCH_LEN as u64;
        if self.total < len || !(self.total - len).is_multiple_of(EPOCH_HOP as u64) {
            return None;
        }
        let discontinuous = self.since_gap.is_some_and(|n| n < len);
        let samples = std::array::from_fn(|c| self.buffer.iter().map(|(_, s)| s[c]).collect());
        Some(Epoch {
            start_ms: self.buffer[0].0,
            samples,
            discontinuous,
        })
    }

    /// Segment a whole recording at once.
    pub fn segment(samples: &[(f64, [f64; CHANNEL_COUNT])]) -> Vec<Epoch> {
        let mut e = Self::new();
        samples.iter().filter_map(|&(t, s)| e.push(t, s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn continuous(seconds: f64) -> Vec<(f64, [f64; 4])> {
        let n = (seconds * 256.0).round() as usize;
        (0..n)
            .map(|i| (i as f64 * SAMPLE_PERIOD_MS, [i as f64; 4]))
            .collect()
    }

    #[test]
    fn epoch_counts() {
        assert_eq!(Epocher::segment(&continuous(16.0)).len(), 61);
        assert_eq!(Epocher::segment(&continuous(1.0)).len(), 1);
        assert_eq!(Epocher::segment(&continuous(0.9)).len(), 0);
    }

    #[test]
    fn starts_are_exactly_250_ms_apart() {
        let epochs = Epocher::segment(&continuous(10.0));
        let first = epochs[0].start_ms;
        for (k, e) in epochs.iter().enumerate() {
            assert_eq!(e.start_ms, first + 250.0 * k as f64);
            assert_eq!(e.samples[0].len(), EPOCH_LEN);
            assert!(!e.discontinuous);
        }
    }

    #[test]
    fn rounded_source_timestamps_keep_exact_hops() {
        let frames: Vec<_> = (0..2048)
            .map(|i| ((i as f64 * SAMPLE_PERIOD_MS).round() + 1000.0, [0.0; 4]))
            .collect();
        let epochs = Epocher::segment(&frames);
        for (k, e) in epochs.iter().enumerate() {
            assert_eq!(e.start_ms, 1000.0 + 250.0 * k as f64);
        }
    }

    #[test]
    fn overlapping_epochs_share_samples() {
        let epochs = Epocher::segment(&continuous(2.0));
        assert_eq!(epochs[1].samples[2][0], epochs[0].samples[2][EPOCH_HOP]);
    }

    #[test]
    fn gap_marks_spanning_epochs_discontinuous() {
        let mut frames = continuous(3.0);
        let resume = frames.last().unwrap().0 + 400.0;
        frames.extend((0..3 * 256).map(|i| (resume + i as f64 * SAMPLE_PERIOD_MS, [0.0; 4])));
        let epochs = Epocher::segment(&frames);
        let flagged: Vec<bool> = epochs.iter().map(|e| e.discontinuous).collect();
        assert!(flagged.iter().any(|&d| d));
        // epochs entirely after the gap are clean again
        assert!(!flagged.last().unwrap());
        // epochs entirely before the gap are clean
        assert!(!flagged[0]);
        let post_gap_start = epochs
            .iter()
            .find(|e| e.start_ms >= resume)
            .expect("post-gap epoch");
        assert!(!post_gap_start.discontinuous);
        assert_eq!(post_gap_start.start_ms, resume);
    }
}
