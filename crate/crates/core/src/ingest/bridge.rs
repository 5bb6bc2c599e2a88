//! Decoder for the bridge wire protocol.
//!
//! Each record is one line of UTF-8 JSON terminated by `\n` (a trailing `\r`
//! is tolerated):
//!
//! ```text
//! record = "{" members "}" LF
//! keys   = exactly "t", "seq", "ch" in any order
//! t      = non-negative integer, milliseconds on the bridge's monotonic clock
//! seq    = non-negative integer, +1 per frame
//! ch     = array of exactly 4 JSON numbers, microvolts, TP9, AF7, AF8, TP10
//! ```
//!
//! Blank lines are ignored. Anything else is malformed and skipped; more than
//! 5% malformed lines within any 10 s span aborts the stream.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::signal::EegFrame;

/// Longer lines are discarded as malformed without buffering them.
pub const MAX_LINE_BYTES: usize = 1024;
const ABORT_SPAN_MS: f64 = 10_000.0;
const ABORT_FRACTION: f64 = 0.05;
/// The malformed fraction is only judged once a span holds this many lines.
const ABORT_MIN_LINES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeFrame {
    pub t: u64,
    pub seq: u64,
    pub ch: [f64; 4],
}

impl BridgeFrame {
    /// Encode as one protocol line, newline included.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("plain struct serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BridgeEvent {
    Frame(EegFrame),
    /// `missing` frames were skipped between `after_seq` and the next frame.
    Gap {
        after_seq: u64,
        missing: u64,
    },
    Malformed {
        line: u64,
        reason: String,
    },
    /// Frame dropped because its `seq` or `t` did not advance.
    OutOfOrder {
        seq: u64,
    },
}

#[derive(Debug, Default)]
pub struct BridgeDecoder {
    last_seq: Option<u64>,
    last_t: Option<u64>,
    recent: VecDeque<(f64, bool)>,
    recent_malformed: usize,
    lines: u64,
    malformed: u64,
    partial: Vec<u8>,
    overflowed: bool,
    aborted: Option<(usize, usize)>,
}

impl BridgeDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn malformed_count(&self) -> u64 {
        self.malformed
    }

    pub fn line_count(&self) -> u64 {
        self.lines
    }

    /// Feed raw bytes as they arrive off the socket.
    pub fn push_bytes(
        &mut self,
        bytes: &[u8],
        arrival_ms: f64,
    ) -> Result<Vec<BridgeEvent>, IngestError> {
        let mut events = Vec::new();
        for &b in bytes {
            if b == b'\n' {
                let line = std::mem::take(&mut self.partial);
                if std::mem::take(&mut self.overflowed) {
                    events.push(self.reject(arrival_ms, "line too long".into())?);
                } else {
                    events.extend(self.push_line(&line, arrival_ms)?);
                }
            } else if !self.overflowed {
                if self.partial.len() >= MAX_LINE_BYTES {
                    self.partial.clear();
                    self.overflowed = true;
                } else {
                    self.partial.push(b);
                }
            }
        }
        Ok(events)
    }

    /// Decode one line (without its terminator).
    pub fn push_line(
        &mut self,
        line: &[u8],
        arrival_ms: f64,
    ) -> Result<Vec<BridgeEvent>, IngestError> {
        if let Some((malformed, total)) = self.aborted {
            return Err(IngestError::Protocol { malformed, total });
        }
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if line.iter().all(u8::is_ascii_whitespace) {
            return Ok(Vec::new());
        }
        if line.len() > MAX_LINE_BYTES {
            return Ok(vec![self.reject(arrival_ms, "line too long".into())?]);
        }
        let parsed = std::str::from_utf8(line)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<BridgeFrame>(s).map_err(|e| e.to_string()));
        let frame = match parsed {
            Ok(f) => f,
            Err(reason) => return Ok(vec![self.reject(arrival_ms, reason)?]),
        };
        self.account(arrival_ms, false)?;

        let mut events = Vec::with_capacity(2);
        match (self.last_seq, self.last_t) {
            (Some(ls), Some(lt)) if frame.seq <= ls || frame.t <= lt => {
                events.push(BridgeEvent::OutOfOrder { seq: frame.seq });
                return Ok(events);
            }
            (Some(ls), _) if frame.seq > ls + 1 => events.push(BridgeEvent::Gap {
                after_seq: ls,
                missing: frame.seq - ls - 1,
            }),
            _ => {}
        }
        self.last_seq = Some(frame.seq);
        self.last_t = Some(frame.t);
        events.push(BridgeEvent::Frame(EegFrame::new(frame.t as f64, frame.ch)));
        Ok(events)
    }

    fn reject(&mut self, arrival_ms: f64, reason: String) -> Result<BridgeEvent, IngestError> {
        self.malformed += 1;
        let line = self.lines + 1;
        self.account(arrival_ms, true)?;
        Ok(BridgeEvent::Malformed { line, reason })
    }

    fn account(&mut self, arrival_ms: f64, malformed: bool) -> Result<(), IngestError> {
        self.lines += 1;
        self.recent.push_back((arrival_ms, malformed));
        if malformed {
            self.recent_malformed += 1;
        }
        while let Some(&(t, bad)) = self.recent.front() {
            if arrival_ms - t < ABORT_SPAN_MS {
                break;
            }
            self.recent.pop_front();
            if bad {
                self.recent_malformed -= 1;
            }
        }
        let total = self.recent.len();
        if total >= ABORT_MIN_LINES && self.recent_malformed as f64 > ABORT_FRACTION * total as f64
        {
            self.aborted = Some((self.recent_malformed, total));
            return Err(IngestError::Protocol {
                malformed: self.recent_malformed,
                total,
            });
        }
        Ok(())
    }
}

/// Decode a complete byte stream, with arrival times taken from the frame
/// clock (`sample_period_ms` per line).
pub fn decode_bridge_stream(
    bytes: &[u8],
    line_period_ms: f64,
) -> Result<Vec<BridgeEvent>, IngestError> {
    let mut dec = BridgeDecoder::new();
    let mut out = Vec::new();
    for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
        out.extend(dec.push_line(line, i as f64 * line_period_ms)?);
    }
    Ok(out)
}
