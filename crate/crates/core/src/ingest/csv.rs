//! CSV export and replay. One row per sample, LF line endings, `.` decimals:
//!
//! ```text
//! timestamp_ms,TP9,AF7,AF8,TP10
//! 0,12.5,-3.25,0.5,7
//! 3.90625,11.75,-2.5,0.25,6.5
//! ```
//!
//! Values are written in shortest round-trip form, so a re-read reproduces
//! every `f64` exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use super::IngestError;
use crate::signal::EegFrame;

pub const CSV_HEADER: &str = "timestamp_ms,TP9,AF7,AF8,TP10";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplaySpeed {
    /// Emit frames paced by their timestamp deltas.
    Realtime,
    /// Pace at `factor` times real time.
    Factor(f64),
    /// As fast as the consumer pulls.
    Max,
}

impl std::str::FromStr for ReplaySpeed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "realtime" => Ok(Self::Realtime),
            "max" => Ok(Self::Max),
            other => other
                .strip_suffix('x')
                .unwrap_or(other)
                .parse::<f64>()
                .ok()
                .filter(|f| *f > 0.0 && f.is_finite())
                .map(Self::Factor)
                .ok_or_else(|| format!("unknown replay speed {other:?}")),
        }
    }
}

pub struct CsvWriter<W: Write> {
    out: W,
}

impl CsvWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, IngestError> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W) -> Result<Self, IngestError> {
        writeln!(out, "{CSV_HEADER}")?;
        Ok(Self { out })
    }

    /// Continue an existing file without writing the header again.
    pub fn append(out: W) -> Self {
        Self { out }
    }

    pub fn write_frame(&mut self, f: &EegFrame) -> Result<(), IngestError> {
        let [a, b, c, d] = f.channels;
        writeln!(self.out, "{},{a},{b},{c},{d}", f.timestamp_ms)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), IngestError> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn write_csv(path: &Path, frames: &[EegFrame]) -> Result<(), IngestError> {
    let mut w = CsvWriter::create(path)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.flush()
}

/// Parse CSV text. Returns the frames plus one warning per skipped row.
pub fn parse_csv<R: Read>(input: R) -> Result<(Vec<EegFrame>, Vec<String>), IngestError> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = rdr.records();
    match records.next() {
        Some(Ok(h)) if h.iter().collect::<Vec<_>>().join(",") == CSV_HEADER => {}
        Some(Ok(h)) => {
            return Err(IngestError::Format(format!(
                "expected header {CSV_HEADER:?}, found {:?}",
                h.iter().collect::<Vec<_>>().join(",")
            )))
        }
        Some(Err(e)) => return Err(IngestError::Format(e.to_string())),
        None => return Err(IngestError::Format("empty file".into())),
    }
    let mut frames = Vec::new();
    let mut warnings = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                warnings.push(format!("row {row}: {e}"));
                continue;
            }
        };
        let values: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match values {
            Ok(v) if v.len() == 5 && v.iter().all(|x| x.is_finite()) => {
                frames.push(EegFrame::new(v[0], [v[1], v[2], v[3], v[4]]));
            }
            Ok(v) if v.len() != 5 => warnings.push(format!("row {row}: {} fields", v.len())),
            _ => warnings.push(format!("row {row}: non-numeric cell")),
        }
    }
    Ok((frames, warnings))
}

pub fn read_csv(path: &Path) -> Result<(Vec<EegFrame>, Vec<String>), IngestError> {
    parse_csv(BufReader::new(File::open(path)?))
}

/// Iterator over a CSV recording, optionally paced in wall-clock time.
pub struct CsvReplay {
    frames: std::vec::IntoIter<EegFrame>,
    speed: ReplaySpeed,
    start: Option<(Instant, f64)>,
    pub warnings: Vec<String>,
}

pub fn replay_csv(path: &Path, speed: ReplaySpeed) -> Result<CsvReplay, IngestError> {
    let (frames, warnings) = read_csv(path)?;
    Ok(CsvReplay::new(frames, speed, warnings))
}

impl CsvReplay {
    pub fn new(frames: Vec<EegFrame>, speed: ReplaySpeed, warnings: Vec<String>) -> Self {
        Self {
            frames: frames.into_iter(),
            speed,
            start: None,
            warnings,
        }
    }
}

impl Iterator for CsvReplay {
    type Item = EegFrame;

    fn next(&mut self) -> Option<EegFrame> {
        let frame = self.frames.next()?;
        let factor = match self.speed {
            ReplaySpeed::Max => return Some(frame),
            ReplaySpeed::Realtime => 1.0,
            ReplaySpeed::Factor(f) => f,
        };
        let (t0, first_ms) = *self
            .start
            .get_or_insert((Instant::now(), frame.timestamp_ms));
        let due =
            Duration::from_secs_f64(((frame.timestamp_ms - first_ms) / 1000.0 / factor).max(0.0));
        if let Some(wait) = due.checked_sub(t0.elapsed()) {
            std::thread::sleep(wait);
        }
        Some(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows_in_order() {
        let text = format!("{CSV_HEADER}\n0,1,2,3,4\n3.90625,5,6,7,8\n");
        let (frames, warnings) = parse_csv(text.as_bytes()).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(
            frames,
            vec![
                EegFrame::new(0.0, [1.0, 2.0, 3.0, 4.0]),
                EegFrame::new(3.90625, [5.0, 6.0, 7.0, 8.0])
            ]
        );
    }

    #[test]
    fn bad_header_is_format_error() {
        let err = parse_csv("t,a,b,c,d\n0,1,2,3,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::Format(_)));
        assert!(parse_csv("".as_bytes()).is_err());
    }

    #[test]
    fn non_numeric_row_skipped() {
        let text = format!("{CSV_HEADER}\n0,1,2,3,4\n4,x,2,3,4\n8,1,2,3\n12,1,2,3,4\n");
        let (frames, warnings) = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn written_values_reread_exactly() {
        let frames = vec![
            EegFrame::new(
                0.1 + 0.2,
                [1.0 / 3.0, -2.5e-7, 123456.789, f64::MIN_POSITIVE],
            ),
            EegFrame::new(1e9, [0.0, -0.0, 1e300, -1e-300]),
        ];
        let mut w = CsvWriter::new(Vec::new()).unwrap();
        for f in &frames {
            w.write_frame(f).unwrap();
        }
        let bytes = w.into_inner();
        assert!(!bytes.contains(&b'\r'));
        let (back, _) = parse_csv(&bytes[..]).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn speed_parsing() {
        assert_eq!("max".parse::<ReplaySpeed>().unwrap(), ReplaySpeed::Max);
        assert_eq!(
            "realtime".parse::<ReplaySpeed>().unwrap(),
            ReplaySpeed::Realtime
        );
        assert_eq!(
            "10x".parse::<ReplaySpeed>().unwrap(),
            ReplaySpeed::Factor(10.0)
        );
        assert!("fast".parse::<ReplaySpeed>().is_err());
    }
}
