//! Frame sources: the bridge wire protocol, CSV replay/export and a seeded
//! synthetic generator. All of them yield [`EegFrame`]s in microvolts.

mod bridge;
mod csv;
mod queue;
mod synth;

use thiserror::Error;

pub use self::bridge::{
    decode_bridge_stream, BridgeDecoder, BridgeEvent, BridgeFrame, MAX_LINE_BYTES,
};
pub use self::csv::{
    parse_csv, read_csv, replay_csv, write_csv, CsvReplay, CsvWriter, ReplaySpeed, CSV_HEADER,
};
pub use self::queue::{DropOldestQueue, QueueEvent};
pub use self::synth::{synth_generate, Modulation, SynthComponent, SynthSpec};

use crate::signal::{EegFrame, SAMPLE_PERIOD_MS};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("protocol error: {malformed} of {total} lines malformed in the last 10 s")]
    Protocol { malformed: usize, total: usize },
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
}

/// Maps source timestamps onto the consumer's monotonic clock.
///
/// The first frame is placed one sample period after the consumer's current
/// time; later frames keep their source deltas. A frame that would land at or
/// before the consumer's clock (clock skew, a source restart) re-anchors the
/// offset instead of going backwards.
#[derive(Debug, Clone, Default)]
pub struct Rebaser {
    offset: Option<f64>,
}

impl Rebaser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rebase(&mut self, frame: EegFrame, consumer_now_ms: f64) -> EegFrame {
        let floor = consumer_now_ms + SAMPLE_PERIOD_MS;
        let offset = match self.offset {
            Some(o) if frame.timestamp_ms + o > consumer_now_ms => o,
            _ => floor - frame.timestamp_ms,
        };
        self.offset = Some(offset);
        EegFrame {
            timestamp_ms: frame.timestamp_ms + offset,
            ..frame
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rebaser_keeps_deltas_and_never_goes_back() {
        let mut r = Rebaser::new();
        let a = r.rebase(EegFrame::new(1_000_000.0, [0.0; 4]), 50.0);
        assert_eq!(a.timestamp_ms, 50.0 + SAMPLE_PERIOD_MS);
        let b = r.rebase(EegFrame::new(1_000_004.0, [0.0; 4]), a.timestamp_ms);
        assert_eq!(b.timestamp_ms - a.timestamp_ms, 4.0);
        // source clock jumps backwards: re-anchor past the consumer
        let c = r.rebase(EegFrame::new(10.0, [0.0; 4]), b.timestamp_ms);
        assert!(c.timestamp_ms > b.timestamp_ms);
    }
}
