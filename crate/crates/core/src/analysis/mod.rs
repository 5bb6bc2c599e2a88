//! Offline cleaning, per-participant z-scoring and condition summaries over
//! exported metrics logs.
//!
//! Inputs are a directory of `<session_id>.jsonl` metrics files and a manifest
//! CSV with header `session_id,participant,condition,order`. Outputs are
//! `sessions.csv`, `condition_summary.csv`, `paired_differences.csv` and
//! `warnings.txt`, all byte-stable for identical inputs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{read_metrics, MetricsRecord};

/// Fewest samples `clean` accepts.
pub const MIN_CLEAN_SAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("need at least {MIN_CLEAN_SAMPLES} samples, got {0}")]
    InsufficientData(usize),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Control,
    Experimental,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Control => "control",
            Condition::Experimental => "experimental",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub session_id: String,
    pub participant: String,
    pub condition: Condition,
    pub order: u8,
}

/// One session's engagement series with its study labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantRecord {
    pub session_id: String,
    pub participant: String,
    pub condition: Condition,
    pub order: u8,
    pub samples: Vec<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1); zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Population standard deviation (n).
pub fn population_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Drop non-finite values, then one pass of the 3-sd rule using the mean and
/// sample sd of the finite values. With sd = 0 nothing further is removed.
pub fn clean(samples: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if samples.len() < MIN_CLEAN_SAMPLES {
        return Err(AnalysisError::InsufficientData(samples.len()));
    }
    let finite: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.len() < MIN_CLEAN_SAMPLES {
        return Err(AnalysisError::InsufficientData(finite.len()));
    }
    let m = mean(&finite);
    let sd = sample_sd(&finite);
    if sd == 0.0 {
        return Ok(finite);
    }
    Ok(finite
        .into_iter()
        .filter(|x| (x - m).abs() <= 3.0 * sd)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZScored {
    pub records: Vec<ParticipantRecord>,
    pub warnings: Vec<String>,
}

/// Standardise each participant's samples by the mean and population sd pooled
/// over all their sessions. Participants lacking either condition, or with
/// zero spread, are dropped with a warning.
pub fn zscore_per_participant(records: &[ParticipantRecord]) -> ZScored {
    let mut by_participant: BTreeMap<&str, Vec<&ParticipantRecord>> = BTreeMap::new();
    for r in records {
        by_participant.entry(&r.participant).or_default().push(r);
    }
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (participant, recs) in by_participant {
        let has = |c| {
            recs.iter()
                .any(|r| r.condition == c && !r.samples.is_empty())
        };
        if !(has(Condition::Control) && has(Condition::Experimental)) {
            warnings.push(format!(
                "participant {participant}: missing a condition, excluded"
            ));
            continue;
        }
        let pooled: Vec<f64> = recs
            .iter()
            .flat_map(|r| r.samples.iter().copied())
            .collect();
        let mu = mean(&pooled);
        let sigma = population_sd(&pooled);
        if !(sigma > 0.0) {
            warnings.push(format!(
                "participant {participant}: zero variance, excluded"
            ));
            continue;
        }
        out.extend(recs.into_iter().map(|r| ParticipantRecord {
            samples: r.samples.iter().map(|x| (x - mu) / sigma).collect(),
            ..r.clone()
        }));
    }
    ZScored {
        records: out,
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub condition: Condition,
    pub order: u8,
    /// Participants contributing a session mean.
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub sd_n_minus_1: f64,
    pub single_participant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedDifference {
    pub participant: String,
    pub experimental_mean: f64,
    pub control_mean: f64,
    /// experimental minus control.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub rows: Vec<SummaryRow>,
    pub paired: Vec<PairedDifference>,
}

impl ConditionSummary {
    pub fn mean_paired_difference(&self) -> Option<f64> {
        let d: Vec<f64> = self.paired.iter().map(|p| p.difference).collect();
        (!d.is_empty()).then(|| mean(&d))
    }

    /// Mean over participants' per-condition means.
    pub fn condition_mean(&self, condition: Condition) -> Option<f64> {
        let v: Vec<f64> = self
            .paired
            .iter()
            .map(|p| match condition {
                Condition::Experimental => p.experimental_mean,
                Condition::Control => p.control_mean,
            })
            .collect();
        (!v.is_empty()).then(|| mean(&v))
    }
}

/// Descriptive statistics of per-session mean z by condition and order, plus
/// the paired experimental-minus-control difference for each participant.
pub fn condition_summary(records: &[ParticipantRecord]) -> ConditionSummary {
    let mut groups: BTreeMap<(Condition, u8), Vec<f64>> = BTreeMap::new();
    let mut per_participant: BTreeMap<&str, BTreeMap<Condition, Vec<f64>>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.samples.is_empty()) {
        groups
            .entry((r.condition, r.order))
            .or_default()
            .push(mean(&r.samples));
        per_participant
            .entry(&r.participant)
            .or_default()
            .entry(r.condition)
            .or_default()
            .extend(&r.samples);
    }
    let rows = groups
        .into_iter()
        .map(|((condition, order), means)| SummaryRow {
            condition,
            order,
            n: means.len(),
            mean: mean(&means),
            median: median(&means),
            sd_n_minus_1: sample_sd(&means),
            single_participant: means.len() == 1,
        })
        .collect();
    let paired = per_participant
        .into_iter()
        .filter_map(|(p, by_cond)| {
            let e = mean(by_cond.get(&Condition::Experimental)?);
            let c = mean(by_cond.get(&Condition::Control)?);
            Some(PairedDifference {
                participant: p.to_string(),
                experimental_mean: e,
                control_mean: c,
                difference: e - c,
            })
        })
        .collect();
    ConditionSummary { rows, paired }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, AnalysisError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| AnalysisError::Manifest(format!("row {}: {e}", i + 2)))?;
        if !matches!(row.order, 1 | 2) {
            return Err(AnalysisError::Manifest(format!(
                "row {}: order must be 1 or 2",
                i + 2
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Engagement values of a metrics log. Stale or uncalibrated samples count as
/// missing and come back as NaN so `clean` drops them.
pub fn load_session_samples(path: &Path) -> Result<Vec<f64>, AnalysisError> {
    let (records, _) = read_metrics(BufReader::new(File::open(path)?))?;
    Ok(records
        .into_iter()
        .filter_map(|r| match r {
            MetricsRecord::Sample(s) => Some(match (s.stale, s.e_norm) {
                (false, Some(v)) => v,
                _ => f64::NAN,
            }),
            _ => None,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionRow {
    pub session_id: String,
    pub participant: String,
    pub condition: Condition,
    pub order: u8,
    pub n_raw: usize,
    pub n_clean: usize,
    pub mean_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub sessions: Vec<SessionRow>,
    pub summary: ConditionSummary,
    pub warnings: Vec<String>,
}

/// Clean, z-score and summarise in-memory records.
pub fn analyze_records(records: Vec<ParticipantRecord>) -> AnalysisReport {
    let mut warnings = Vec::new();
    let mut cleaned = Vec::new();
    let mut sessions = Vec::new();
    for r in records {
        let mut row = SessionRow {
            session_id: r.session_id.clone(),
            participant: r.participant.clone(),
            condition: r.condition,
            order: r.order,
            n_raw: r.samples.len(),
            n_clean: 0,
            mean_z: None,
        };
        match clean(&r.samples) {
            Ok(samples) => {
                row.n_clean = samples.len();
                cleaned.push(ParticipantRecord { samples, ..r });
            }
            Err(e) => warnings.push(format!("session {}: {e}, excluded", r.session_id)),
        }
        sessions.push(row);
    }
    let z = zscore_per_participant(&cleaned);
    warnings.extend(z.warnings);
    for row in &mut sessions {
        row.mean_z = z
            .records
            .iter()
            .find(|r| r.session_id == row.session_id)
            .map(|r| mean(&r.samples));
    }
    sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    AnalysisReport {
        sessions,
        summary: condition_summary(&z.records),
        warnings,
    }
}

/// Run the whole pipeline from files and write the output tables.
pub fn run_analysis(
    input_dir: &Path,
    manifest: &Path,
    out_dir: &Path,
) -> Result<AnalysisReport, AnalysisError> {
    let rows = read_manifest(manifest)?;
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for row in rows {
        let path: PathBuf = input_dir.join(format!("{}.jsonl", row.session_id));
        if !path.exists() {
            missing.push(format!(
                "session {}: no metrics file, excluded",
                row.session_id
            ));
            continue;
        }
        records.push(ParticipantRecord {
            samples: load_session_samples(&path)?,
            session_id: row.session_id,
            participant: row.participant,
            condition: row.condition,
            order: row.order,
        });
    }
    let mut report = analyze_records(records);
    missing.append(&mut report.warnings);
    report.warnings = missing;
    write_report(&report, out_dir)?;
    Ok(report)
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub fn write_report(report: &AnalysisReport, out_dir: &Path) -> Result<(), AnalysisError> {
    std::fs::create_dir_all(out_dir)?;

    let mut w = csv::Writer::from_path(out_dir.join("sessions.csv"))?;
    w.write_record([
        "session_id",
        "participant",
        "condition",
        "order",
        "n_raw",
        "n_clean",
        "mean_z",
    ])?;
    for s in &report.sessions {
        w.write_record([
            s.session_id.clone(),
            s.participant.clone(),
            s.condition.as_str().into(),
            s.order.to_string(),
            s.n_raw.to_string(),
            s.n_clean.to_string(),
            s.mean_z.map(fmt_f).unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out_dir.join("condition_summary.csv"))?;
    w.write_record([
        "condition",
        "order",
        "n",
        "mean",
        "median",
        "sd_n_minus_1",
        "single_participant",
    ])?;
    for r in &report.summary.rows {
        w.write_record([
            r.condition.as_str().into(),
            r.order.to_string(),
            r.n.to_string(),
            fmt_f(r.mean),
            fmt_f(r.median),
            fmt_f(r.sd_n_minus_1),
            r.single_participant.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out_dir.join("paired_differences.csv"))?;
    w.write_record([
        "participant",
        "experimental_mean",
        "control_mean",
        "difference",
    ])?;
    for p in &report.summary.paired {
        w.write_record([
            p.participant.clone(),
            fmt_f(p.experimental_mean),
            fmt_f(p.control_mean),
            fmt_f(p.difference),
        ])?;
    }
    w.flush()?;

    let mut text = report.warnings.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    std::fs::write(out_dir.join("warnings.txt"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(
        session: &str,
        p: &str,
        c: Condition,
        order: u8,
        samples: Vec<f64>,
    ) -> ParticipantRecord {
        ParticipantRecord {
            session_id: session.into(),
            participant: p.into(),
            condition: c,
            order,
            samples,
        }
    }

    #[test]
    fn spike_among_zeros_is_removed() {
        let mut xs = vec![0.0; 100];
        xs.push(10.0);
        // brute force: mean and n-1 sd written out term by term
        let n = xs.len() as f64;
        let mut sum = 0.0;
        for x in &xs {
            sum += x;
        }
        let m = sum / n;
        let mut ss = 0.0;
        for x in &xs {
            ss += (x - m) * (x - m);
        }
        let sd = (ss / (n - 1.0)).sqrt();
        assert!((10.0 - m).abs() > 3.0 * sd);
        let out = clean(&xs).unwrap();
        assert_eq!(out, vec![0.0; 100]);
    }

    #[test]
    fn clean_edge_cases() {
        assert_eq!(clean(&[3.0; 12]).unwrap(), vec![3.0; 12]);
        let mut xs = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        xs.push(f64::NAN);
        let out = clean(&xs).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|x| x.is_finite()));
        assert!(matches!(
            clean(&[1.0; 9]),
            Err(AnalysisError::InsufficientData(9))
        ));
    }

    #[test]
    fn two_point_zscore() {
        let recs = vec![
            rec("a", "p", Condition::Control, 1, vec![0.0]),
            rec("b", "p", Condition::Experimental, 2, vec![2.0]),
        ];
        let z = zscore_per_participant(&recs);
        assert_eq!(z.records[0].samples, vec![-1.0]);
        assert_eq!(z.records[1].samples, vec![1.0]);
    }

    #[test]
    fn zscore_exclusions() {
        let recs = vec![
            rec("a", "flat", Condition::Control, 1, vec![1.0; 5]),
            rec("b", "flat", Condition::Experimental, 2, vec![1.0; 5]),
            rec("c", "half", Condition::Control, 1, vec![1.0, 2.0]),
        ];
        let z = zscore_per_participant(&recs);
        assert!(z.records.is_empty());
        assert_eq!(z.warnings.len(), 2);
    }

    #[test]
    fn shifted_experimental_condition_wins() {
        let mut recs = Vec::new();
        for p in 0..6 {
            let base: Vec<f64> = (0..30)
                .map(|i| ((i * 7 + p * 3) % 11) as f64 / 10.0)
                .collect();
            let shifted: Vec<f64> = base.iter().map(|x| x + 0.3).collect();
            let pid = format!("p{p}");
            recs.push(rec(
                &format!("{pid}c"),
                &pid,
                Condition::Control,
                1 + (p % 2) as u8,
                base,
            ));
            recs.push(rec(
                &format!("{pid}e"),
                &pid,
                Condition::Experimental,
                2 - (p % 2) as u8,
                shifted,
            ));
        }
        let report = analyze_records(recs);
        let s = &report.summary;
        assert!(s.condition_mean(Condition::Experimental) > s.condition_mean(Condition::Control));
        assert_eq!(s.paired.len(), 6);
        assert!(s.paired.iter().all(|p| p.difference > 0.0));
    }

    #[test]
    fn identical_conditions_and_single_participant() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let recs = vec![
            rec("a", "p", Condition::Control, 1, xs.clone()),
            rec("b", "p", Condition::Experimental, 2, xs),
        ];
        let report = analyze_records(recs);
        assert_eq!(report.summary.paired[0].difference, 0.0);
        assert!(report
            .summary
            .rows
            .iter()
            .all(|r| r.n == 1 && r.single_participant));
    }

    #[test]
    fn files_end_to_end_are_deterministic() {
        use crate::engine::EngagementSample;
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in");
        std::fs::create_dir(&input).unwrap();
        let mut manifest = String::from("session_id,participant,condition,order\n");
        for (sid, cond, order, offset) in
            [("s1", "control", 1, 0.0), ("s2", "experimental", 2, 0.2)]
        {
            let mut buf = Vec::new();
            for i in 0..40 {
                MetricsRecord::Sample(EngagementSample {
                    t_ms: i as f64 * 1000.0,
                    raw_e_epoch: None,
                    e_window: None,
                    e_norm: Some(0.3 + offset + (i % 5) as f64 * 0.01),
                    quality: 1.0,
                    stale: i == 3,
                    frozen: false,
                })
                .write_line(&mut buf)
                .unwrap();
            }
            std::fs::write(input.join(format!("{sid}.jsonl")), buf).unwrap();
            manifest.push_str(&format!("{sid},p1,{cond},{order}\n"));
        }
        manifest.push_str("s3,p2,control,1\n");
        let manifest_path = dir.path().join("manifest.csv");
        std::fs::write(&manifest_path, manifest).unwrap();

        let out1 = dir.path().join("o1");
        let out2 = dir.path().join("o2");
        let report = run_analysis(&input, &manifest_path, &out1).unwrap();
        run_analysis(&input, &manifest_path, &out2).unwrap();
        for f in [
            "sessions.csv",
            "condition_summary.csv",
            "paired_differences.csv",
            "warnings.txt",
        ] {
            assert_eq!(
                std::fs::read(out1.join(f)).unwrap(),
                std::fs::read(out2.join(f)).unwrap(),
                "{f}"
            );
        }
        assert_eq!(report.sessions[0].n_clean, 39);
        assert!(report.summary.paired[0].difference > 0.0);
        assert!(report.warnings.iter().any(|w| w.contains("s3")));
        let header = std::fs::read_to_string(out1.join("condition_summary.csv")).unwrap();
        assert!(header.starts_with("condition,order,n,mean,median,sd_n_minus_1,"));
    }

    proptest! {
        #[test]
        fn clean_is_idempotent_without_outliers(xs in prop::collection::vec(-1.0f64..1.0, 10..60)) {
            let once = clean(&xs).unwrap();
            prop_assume!(once.len() == xs.len());
            prop_assert_eq!(clean(&once).unwrap(), once);
        }

        #[test]
        fn zscore_has_zero_mean_and_is_shift_invariant(
            a in prop::collection::vec(-5.0f64..5.0, 2..30),
            b in prop::collection::vec(-5.0f64..5.0, 2..30),
            shift in -100.0f64..100.0,
        ) {
            let recs = vec![
                rec("a", "p", Condition::Control, 1, a.clone()),
                rec("b", "p", Condition::Experimental, 2, b.clone()),
            ];
            let z = zscore_per_participant(&recs);
            prop_assume!(!z.records.is_empty());
            let pooled: Vec<f64> = z.records.iter().flat_map(|r| r.samples.clone()).collect();
            prop_assert!(mean(&pooled).abs() < 1e-12);

            let shifted = vec![
                rec("a", "p", Condition::Control, 1, a.iter().map(|x| x + shift).collect()),
                rec("b", "p", Condition::Experimental, 2, b.iter().map(|x| x + shift).collect()),
            ];
            let zs = zscore_per_participant(&shifted);
            for (r, s) in z.records.iter().zip(&zs.records) {
                for (x, y) in r.samples.iter().zip(&s.samples) {
                    prop_assert!((x - y).abs() < 1e-8);
                }
            }
            // sign of the condition difference survives standardisation
            let raw = mean(&b) - mean(&a);
            let zd = mean(&z.records[1].samples) - mean(&z.records[0].samples);
            prop_assert!(raw == 0.0 || raw.signum() == zd.signum());
        }
    }
}
