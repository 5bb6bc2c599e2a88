//! Append-only per-session metrics log, one JSON object per line.
//!
//! Every record carries a `kind` tag:
//!
//! ```text
//! {"kind":"sample","t_ms":16000.0,"raw_e_epoch":0.91,"e_window":0.88,"e_norm":0.42,"quality":1.0,"stale":false,"frozen":false}
//! {"kind":"calibration","t_ms":5000.0,"phase":"relaxation","detail":null,"e_min":null,"e_max":null}
//! {"kind":"freeze","t_ms":30000.0,"score":0.42,"default_flag":false}
//! {"kind":"unfreeze","t_ms":41000.0}
//! {"kind":"quality","t_ms":52000.0,"event":"3 frames missing after seq 1200"}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::EngagementSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsRecord {
    Sample(EngagementSample),
    Calibration {
        t_ms: f64,
        phase: String,
        detail: Option<String>,
        e_min: Option<f64>,
        e_max: Option<f64>,
    },
    Freeze {
        t_ms: f64,
        score: f64,
        default_flag: bool,
    },
    Unfreeze {
        t_ms: f64,
    },
    Quality {
        t_ms: f64,
        event: String,
    },
}

impl MetricsRecord {
    pub fn write_line<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, self)?;
        out.write_all(b"\n")
    }
}

/// Parse a metrics log, skipping blank lines. Unparseable lines are returned
/// as `(line_number, error)` pairs rather than aborting.
pub fn read_metrics<R: BufRead>(
    input: R,
) -> std::io::Result<(Vec<MetricsRecord>, Vec<(usize, String)>)> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            Err(e) => errors.push((i + 1, e.to_string())),
        }
    }
    Ok((records, errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip_through_lines() {
        let recs = vec![
            MetricsRecord::Sample(EngagementSample {
                t_ms: 1000.0,
                raw_e_epoch: Some(0.5),
                e_window: Some(0.6),
                e_norm: Some(0.25),
                quality: 1.0,
                stale: false,
                frozen: false,
            }),
            MetricsRecord::Freeze {
                t_ms: 2.0,
                score: 0.5,
                default_flag: true,
            },
            MetricsRecord::Unfreeze { t_ms: 3.0 },
        ];
        let mut buf = Vec::new();
        for r in &recs {
            r.write_line(&mut buf).unwrap();
        }
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"kind":"sample","t_ms":1000.0"#));
        let (back, errors) = read_metrics(&buf[..]).unwrap();
        assert_eq!(back, recs);
        assert!(errors.is_empty());
    }

    #[test]
    fn bad_lines_are_reported_not_fatal() {
        let text = "{\"kind\":\"unfreeze\",\"t_ms\":1.0}\nnot json\n\n";
        let (recs, errors) = read_metrics(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(errors[0].0, 2);
    }
}
