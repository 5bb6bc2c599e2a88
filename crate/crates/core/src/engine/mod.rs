//! Per-session engagement engine.
//!
//! Frames go in through [`EngagementEngine::push_frame`]; the caller drives
//! [`EngagementEngine::tick`] with the session clock (every frame is fine, the
//! engine emits at most one sample per second). Calibration, artifact gating
//! and score freezing while the learner types all live here.

mod calibration;
mod metrics;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibration::{CalibrationFailure, CalibrationPhase, CalibrationStatus, CalibrationTask};
pub use metrics::{read_metrics, MetricsRecord};

use calibration::CalibrationState;

use crate::config::Config;
use crate::signal::{
    engagement_index, normalize_engagement, sliding_window_mean, BandPowers, CalibrationResult,
    EegFrame, Epoch, Epocher, Preprocessor, PsdEstimator, SignalError, TimedValue, CHANNEL_COUNT,
    SAMPLE_PERIOD_MS,
};

const EPOCH_MS: f64 = 1000.0;
const TICK_MS: f64 = 1000.0;
/// Frozen score used when no score exists yet in the session.
pub const DEFAULT_FROZEN_SCORE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("signal quality insufficient: {0}")]
    Quality(String),
    #[error("degenerate calibration: e_min {e_min} vs e_max {e_max}")]
    DegenerateCalibration { e_min: f64, e_max: f64 },
    #[error("invalid calibration state: {0}")]
    InvalidState(String),
    #[error("frame at {t_ms} ms does not advance past {last_ms} ms")]
    NonMonotonic { t_ms: f64, last_ms: f64 },
    #[error("stream ended during {0}")]
    StreamEnded(&'static str),
}

impl From<CalibrationFailure> for EngineError {
    fn from(f: CalibrationFailure) -> Self {
        match f {
            CalibrationFailure::Quality { detail } => EngineError::Quality(detail),
            CalibrationFailure::Degenerate { e_min, e_max } => {
                EngineError::DegenerateCalibration { e_min, e_max }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum GateVerdict {
    Valid,
    Amplitude { peak_uv: f64 },
    Discontinuous,
}

/// Flags epochs that span a stream gap or whose peak exceeds `threshold_uv`.
pub fn artifact_gate(epoch: &Epoch, threshold_uv: f64) -> GateVerdict {
    if epoch.discontinuous {
        return GateVerdict::Discontinuous;
    }
    let peak = epoch.peak_abs();
    if peak > threshold_uv {
        GateVerdict::Amplitude { peak_uv: peak }
    } else {
        GateVerdict::Valid
    }
}

/// Per-epoch result kept for window means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochScore {
    pub start_ms: f64,
    /// `None` when the index was undefined (flat signal).
    pub raw_e: Option<f64>,
    /// Passed the artifact gate and has a defined index.
    pub valid: bool,
}

/// One 1 Hz engagement reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementSample {
    pub t_ms: f64,
    /// Index of the most recent epoch.
    pub raw_e_epoch: Option<f64>,
    /// Mean raw index over the main window.
    pub e_window: Option<f64>,
    /// `e_window` normalised by the calibration bounds, in `[0, 1]`.
    pub e_norm: Option<f64>,
    /// Fraction of valid epochs in the window.
    pub quality: f64,
    pub stale: bool,
    /// Whether a score was frozen for injection when this sample was taken.
    pub frozen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreezeState {
    pub frozen: bool,
    pub frozen_score: f64,
    pub frozen_at_ms: f64,
    /// No score existed yet; `frozen_score` is the neutral default.
    pub default_flag: bool,
}

#[derive(Debug, Clone)]
pub struct EngagementEngine {
    cfg: Config,
    pre: Preprocessor,
    epocher: Epocher,
    psd: PsdEstimator,
    epochs: VecDeque<EpochScore>,
    /// `[start, end)` of typing intervals; `end` is `None` while typing.
    typing: VecDeque<(f64, Option<f64>)>,
    /// Windows never reach back past the last response delivery.
    window_floor_ms: f64,
    freeze: Option<FreezeState>,
    cal: CalibrationState,
    calibration: Option<CalibrationResult>,
    next_tick_ms: Option<f64>,
    last_sample: Option<EngagementSample>,
    last_good_norm: Option<f64>,
    now_ms: f64,
    last_frame_ms: Option<f64>,
    log_events: bool,
    events: Vec<MetricsRecord>,
}

impl EngagementEngine {
    pub fn new(cfg: Config) -> Self {
        let pre = Preprocessor::new(&cfg.signal);
        let psd = PsdEstimator::new(cfg.signal.window, f64::from(cfg.signal.sample_rate_hz));
        Self {
            cfg,
            pre,
            epocher: Epocher::new(),
            psd,
            epochs: VecDeque::new(),
            typing: VecDeque::new(),
            window_floor_ms: f64::NEG_INFINITY,
            freeze: None,
            cal: CalibrationState::default(),
            calibration: None,
            next_tick_ms: None,
            last_sample: None,
            last_good_norm: None,
            now_ms: 0.0,
            last_frame_ms: None,
            log_events: false,
            events: Vec::new(),
        }
    }

    /// Record samples, calibration and freeze events for [`Self::drain_events`].
    pub fn with_event_log(mut self) -> Self {
        self.log_events = true;
        self
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn now_ms(&self) -> f64 {
        self.now_ms
    }

    pub fn calibration(&self) -> Option<CalibrationResult> {
        self.calibration
    }

    /// Install bounds from a previous run (a restored session).
    pub fn set_calibration(&mut self, result: CalibrationResult) {
        self.calibration = Some(result);
        self.cal = CalibrationState {
            phase: CalibrationPhase::Complete { result },
            ..CalibrationState::default()
        };
    }

    pub fn last_sample(&self) -> Option<EngagementSample> {
        self.last_sample
    }

    pub fn freeze_state(&self) -> Option<FreezeState> {
        self.freeze
    }

    pub fn drain_events(&mut self) -> Vec<MetricsRecord> {
        std::mem::take(&mut self.events)
    }

    fn emit(&mut self, rec: MetricsRecord) {
        if self.log_events {
            self.events.push(rec);
        }
    }

    pub fn log_quality(&mut self, event: impl Into<String>) {
        let t_ms = self.now_ms;
        self.emit(MetricsRecord::Quality {
            t_ms,
            event: event.into(),
        });
    }

    /// Filter one frame and, on hop boundaries, score a new epoch. Returns the
    /// filtered sample for recording.
    pub fn push_frame(&mut self, frame: &EegFrame) -> Result<[f64; CHANNEL_COUNT], EngineError> {
        if let Some(last_ms) = self.last_frame_ms {
            if !(frame.timestamp_ms > last_ms) {
                return Err(EngineError::NonMonotonic {
                    t_ms: frame.timestamp_ms,
                    last_ms,
                });
            }
        }
        if !frame.timestamp_ms.is_finite() {
            return Err(SignalError::Contract("non-finite timestamp".into()).into());
        }
        let filtered = self.pre.process_frame(frame)?;
        self.last_frame_ms = Some(frame.timestamp_ms);
        self.now_ms = self.now_ms.max(frame.timestamp_ms);
        if let Some(epoch) = self.epocher.push(frame.timestamp_ms, filtered) {
            let score = self.score_epoch(&epoch);
            self.record_epoch_score(score);
        }
        Ok(filtered)
    }

    pub fn score_epoch(&self, epoch: &Epoch) -> EpochScore {
        let gate = artifact_gate(epoch, self.cfg.engine.artifact_threshold_uv);
        let raw_e = self
            .psd
            .epoch_psd(epoch)
            .and_then(|psds| BandPowers::from_channels(&psds, &self.cfg.bands, epoch.start_ms))
            .and_then(|bands| engagement_index(&bands, self.cfg.signal.epsilon))
            .map(|v| v.raw_e)
            .ok();
        EpochScore {
            start_ms: epoch.start_ms,
            raw_e,
            valid: gate == GateVerdict::Valid && raw_e.is_some(),
        }
    }

    /// Lower-level entry point: append an already scored epoch.
    pub fn record_epoch_score(&mut self, score: EpochScore) {
        self.epochs.push_back(score);
        let e = &self.cfg.engine;
        let keep_ms = 1000.0
            * e.main_window_s
                .max(e.calibration_window_s)
                .max(e.probe_s)
                .max(e.stream_loss_s)
            + 2.0 * EPOCH_MS;
        let horizon = score.start_ms - keep_ms;
        while self.epochs.front().is_some_and(|s| s.start_ms < horizon) {
            self.epochs.pop_front();
        }
        let floor = self.window_floor_ms.min(horizon);
        while self
            .typing
            .front()
            .is_some_and(|&(_, end)| end.is_some_and(|end| end < floor))
        {
            self.typing.pop_front();
        }
    }

    fn typing_excluded(&self, start_ms: f64) -> bool {
        self.typing
            .iter()
            .any(|&(t0, t1)| start_ms + EPOCH_MS > t0 && t1.is_none_or(|t1| start_ms < t1))
    }

    /// Window values over `(lower, now]` with typing epochs removed, plus the
    /// valid fraction among them.
    fn window(&self, lower_ms: f64, now_ms: f64) -> (Vec<TimedValue>, f64) {
        let values: Vec<TimedValue> = self
            .epochs
            .iter()
            .filter(|s| s.start_ms > lower_ms && s.start_ms <= now_ms)
            .filter(|s| !self.typing_excluded(s.start_ms))
            .map(|s| TimedValue {
                t_ms: s.start_ms,
                value: s.raw_e.unwrap_or(0.0),
                valid: s.valid,
            })
            .collect();
        let quality = if values.is_empty() {
            0.0
        } else {
            values.iter().filter(|v| v.valid).count() as f64 / values.len() as f64
        };
        (values, quality)
    }

    /// Advance the session clock. Emits one sample per elapsed second and
    /// drives the calibration tasks. Safe to call on every frame.
    pub fn tick(&mut self, now_ms: f64) -> Option<EngagementSample> {
        self.now_ms = self.now_ms.max(now_ms);
        let now_ms = self.now_ms;
        let due = *self.next_tick_ms.get_or_insert(now_ms);
        if now_ms < due {
            return None;
        }
        let skipped = ((now_ms - due) / TICK_MS).floor();
        self.next_tick_ms = Some(due + (skipped + 1.0) * TICK_MS);

        self.calibration_tick(now_ms);

        let sample = self.compute_sample(now_ms);
        if !sample.stale {
            if let Some(n) = sample.e_norm {
                self.last_good_norm = Some(n);
            }
        }
        self.last_sample = Some(sample);
        self.emit(MetricsRecord::Sample(sample));
        Some(sample)
    }

    fn compute_sample(&self, now_ms: f64) -> EngagementSample {
        let window_ms = 1000.0 * self.cfg.engine.main_window_s;
        let lower = (now_ms - window_ms).max(self.window_floor_ms);
        let (values, quality) = self.window(lower, now_ms);
        let e_window = sliding_window_mean(&values, now_ms - lower, now_ms).ok();
        let e_norm = match (e_window, self.calibration) {
            (Some(e), Some(cal)) => normalize_engagement(e, &cal).ok(),
            _ => None,
        };
        EngagementSample {
            t_ms: now_ms,
            raw_e_epoch: self.epochs.back().and_then(|s| s.raw_e),
            e_window,
            e_norm,
            quality,
            stale: e_window.is_none() || quality < self.cfg.engine.stale_quality,
            frozen: self.freeze.is_some(),
        }
    }

    // --- score freezing -------------------------------------------------

    /// Freeze the most recent good score for injection. Idempotent while frozen.
    pub fn on_typing_started(&mut self) -> FreezeState {
        if let Some(f) = self.freeze {
            return f;
        }
        let (frozen_score, default_flag) = match self.last_good_norm {
            Some(s) => (s, false),
            None => (DEFAULT_FROZEN_SCORE, true),
        };
        let state = FreezeState {
            frozen: true,
            frozen_score,
            frozen_at_ms: self.now_ms,
            default_flag,
        };
        self.freeze = Some(state);
        self.typing.push_back((self.now_ms, None));
        self.emit(MetricsRecord::Freeze {
            t_ms: self.now_ms,
            score: frozen_score,
            default_flag,
        });
        state
    }

    /// Unfreeze; the next windows only see epochs from this instant on.
    pub fn on_response_delivered(&mut self) {
        if self.freeze.take().is_none() {
            return;
        }
        let now = self.now_ms;
        if let Some(last) = self.typing.back_mut() {
            last.1.get_or_insert(now);
        }
        self.window_floor_ms = now;
        self.emit(MetricsRecord::Unfreeze { t_ms: now });
    }

    /// The score a message sent right now would carry.
    pub fn injectable_score(&self) -> FreezeState {
        self.freeze.unwrap_or(FreezeState {
            frozen: false,
            frozen_score: self.last_good_norm.unwrap_or(DEFAULT_FROZEN_SCORE),
            frozen_at_ms: self.now_ms,
            default_flag: self.last_good_norm.is_none(),
        })
    }

    // --- calibration ----------------------------------------------------

    pub fn calibration_status(&self) -> CalibrationStatus {
        let remaining_s = self.cal.phase.running_task().map(|(_, started)| {
            (self.cfg.engine.calibration_task_s - (self.now_ms - started) / 1000.0).max(0.0)
        });
        CalibrationStatus {
            phase: self.cal.phase.clone(),
            remaining_s,
            relaxation_windows: self.cal.relaxation.len(),
            word_association_windows: self.cal.word_association.len(),
            current_windows: self.cal.current.len(),
            result: self.calibration,
        }
    }

    fn probe(&self) -> Result<(), EngineError> {
        let probe_ms = 1000.0 * self.cfg.engine.probe_s;
        let (values, quality) = self.window(self.now_ms - probe_ms, self.now_ms);
        let expected = (probe_ms / 250.0).floor() as usize;
        if values.len() < expected / 2 {
            return Err(EngineError::Quality(format!(
                "{} epochs in the last {} s, need at least {}",
                values.len(),
                self.cfg.engine.probe_s,
                expected / 2
            )));
        }
        if quality < self.cfg.engine.probe_min_quality {
            return Err(EngineError::Quality(format!(
                "{:.0}% valid epochs, need {:.0}%",
                100.0 * quality,
                100.0 * self.cfg.engine.probe_min_quality
            )));
        }
        Ok(())
    }

    /// Window scores collected so far: relaxation, word association, and the
    /// running task.
    pub fn calibration_windows(&self) -> (&[f64], &[f64], &[f64]) {
        (
            &self.cal.relaxation,
            &self.cal.word_association,
            &self.cal.current,
        )
    }

    /// Start (or restart) calibration from the relaxation task. Previous
    /// bounds are dropped.
    pub fn start_calibration(&mut self) -> Result<CalibrationStatus, EngineError> {
        self.probe()?;
        self.calibration = None;
        self.cal.begin(CalibrationTask::Relaxation, self.now_ms);
        self.log_phase(None);
        Ok(self.calibration_status())
    }

    /// Restart the interrupted task, keeping a completed relaxation task.
    pub fn resume_calibration(&mut self) -> Result<CalibrationStatus, EngineError> {
        let CalibrationPhase::Interrupted { task, .. } = self.cal.phase else {
            return Err(EngineError::InvalidState(format!(
                "nothing to resume in phase {}",
                self.cal.phase.name()
            )));
        };
        self.probe()?;
        self.cal.begin(task, self.now_ms);
        self.log_phase(None);
        Ok(self.calibration_status())
    }

    fn log_phase(&mut self, detail: Option<String>) {
        let (e_min, e_max) = match self.cal.phase {
            CalibrationPhase::Complete { result } => (Some(result.e_min), Some(result.e_max)),
            _ => (None, None),
        };
        let rec = MetricsRecord::Calibration {
            t_ms: self.now_ms,
            phase: self.cal.phase.name().to_string(),
            detail,
            e_min,
            e_max,
        };
        self.emit(rec);
    }

    fn calibration_tick(&mut self, now_ms: f64) {
        let Some((task, started)) = self.cal.phase.running_task() else {
            return;
        };
        let e = &self.cfg.engine;
        let last_data = self
            .epochs
            .back()
            .map_or(started, |s| (s.start_ms + EPOCH_MS).max(started));
        if now_ms - last_data > 1000.0 * e.stream_loss_s {
            self.cal.current.clear();
            self.cal.phase = CalibrationPhase::Interrupted {
                task,
                at_ms: now_ms,
            };
            self.log_phase(Some("stream lost".into()));
            return;
        }

        let window_ms = 1000.0 * e.calibration_window_s;
        let elapsed = now_ms - started;
        if elapsed >= window_ms {
            let lower = (now_ms - window_ms).max(started - SAMPLE_PERIOD_MS / 2.0);
            let (values, quality) = self.window(lower, now_ms);
            if quality >= e.stale_quality {
                if let Ok(mean) = sliding_window_mean(&values, now_ms - lower, now_ms) {
                    self.cal.current.push(mean);
                }
            }
        }
        if elapsed >= 1000.0 * e.calibration_task_s {
            self.finish_task(task, now_ms);
        }
    }

    fn finish_task(&mut self, task: CalibrationTask, now_ms: f64) {
        let min_windows = self.cfg.engine.min_calibration_windows;
        let windows = std::mem::take(&mut self.cal.current);
        if windows.len() < min_windows {
            self.fail(CalibrationFailure::Quality {
                detail: format!(
                    "{task:?} produced {} valid windows, need {min_windows}",
                    windows.len()
                ),
            });
            return;
        }
        match task {
            CalibrationTask::Relaxation => {
                self.cal.relaxation = windows;
                self.cal.begin(CalibrationTask::WordAssociation, now_ms);
                self.log_phase(None);
            }
            CalibrationTask::WordAssociation => {
                self.cal.word_association = windows;
                let (e_min, e_max) = self
                    .cal
                    .pooled_bounds()
                    .expect("both tasks completed with windows");
                if e_max - e_min < self.cfg.engine.min_calibration_span {
                    self.fail(CalibrationFailure::Degenerate { e_min, e_max });
                    return;
                }
                match CalibrationResult::new(e_min, e_max) {
                    Ok(result) => {
                        self.calibration = Some(result);
                        self.cal.phase = CalibrationPhase::Complete { result };
                        self.log_phase(None);
                    }
                    Err(_) => self.fail(CalibrationFailure::Degenerate { e_min, e_max }),
                }
            }
        }
    }

    fn fail(&mut self, failure: CalibrationFailure) {
        let detail = failure.to_string();
        self.cal.phase = CalibrationPhase::Failed { failure };
        self.log_phase(Some(detail));
    }
}

/// Feed frames, ticking after each one; returns the samples emitted.
pub fn feed<I>(
    engine: &mut EngagementEngine,
    frames: I,
) -> Result<Vec<EngagementSample>, EngineError>
where
    I: IntoIterator<Item = EegFrame>,
{
    let mut out = Vec::new();
    for f in frames {
        engine.push_frame(&f)?;
        out.extend(engine.tick(f.timestamp_ms));
    }
    Ok(out)
}

/// Run both calibration tasks at stream speed on a fresh engine: a quality
/// probe and the relaxation task on `relaxation`, then the word-association
/// task on `word_association` (re-timed to follow on directly).
pub fn run_calibration<R, W>(
    cfg: Config,
    relaxation: R,
    word_association: W,
) -> Result<CalibrationResult, EngineError>
where
    R: IntoIterator<Item = EegFrame>,
    W: IntoIterator<Item = EegFrame>,
{
    calibrate_engine(
        &mut EngagementEngine::new(cfg),
        relaxation,
        word_association,
    )
}

/// As [`run_calibration`] but on a caller-owned engine, which keeps the
/// collected windows for inspection.
pub fn calibrate_engine<R, W>(
    engine: &mut EngagementEngine,
    relaxation: R,
    word_association: W,
) -> Result<CalibrationResult, EngineError>
where
    R: IntoIterator<Item = EegFrame>,
    W: IntoIterator<Item = EegFrame>,
{
    let probe_ms = 1000.0 * engine.cfg.engine.probe_s + EPOCH_MS;
    let mut relax = relaxation.into_iter();
    let mut first_ms = None;
    for f in relax.by_ref() {
        engine.push_frame(&f)?;
        engine.tick(f.timestamp_ms);
        let t0 = *first_ms.get_or_insert(f.timestamp_ms);
        if f.timestamp_ms - t0 >= probe_ms {
            break;
        }
    }
    engine.start_calibration()?;
    drive_task(engine, relax, CalibrationTask::Relaxation)?;

    // re-time the second stream so it continues the first without a gap
    let mut offset = None;
    let start_after = engine.now_ms() + SAMPLE_PERIOD_MS;
    let word = word_association.into_iter().map(move |f| {
        let o = *offset.get_or_insert(start_after - f.timestamp_ms);
        EegFrame {
            timestamp_ms: f.timestamp_ms + o,
            ..f
        }
    });
    drive_task(engine, word, CalibrationTask::WordAssociation)?;
    engine.calibration().ok_or(EngineError::InvalidState(
        "calibration did not complete".into(),
    ))
}

fn drive_task<I>(
    engine: &mut EngagementEngine,
    frames: I,
    task: CalibrationTask,
) -> Result<(), EngineError>
where
    I: Iterator<Item = EegFrame>,
{
    let in_task =
        |e: &EngagementEngine| matches!(e.cal.phase.running_task(), Some((t, _)) if t == task);
    for f in frames {
        engine.push_frame(&f)?;
        engine.tick(f.timestamp_ms);
        if !in_task(engine) {
            break;
        }
    }
    match &engine.cal.phase {
        CalibrationPhase::Failed { failure } => Err(failure.clone().into()),
        _ if in_task(engine) => Err(EngineError::StreamEnded(match task {
            CalibrationTask::Relaxation => "relaxation",
            CalibrationTask::WordAssociation => "word association",
        })),
        _ => Ok(()),
    }
}

/// Score a whole recording with fixed calibration bounds.
pub fn score_stream<I>(
    cfg: Config,
    calibration: CalibrationResult,
    frames: I,
) -> Result<Vec<EngagementSample>, EngineError>
where
    I: IntoIterator<Item = EegFrame>,
{
    let mut engine = EngagementEngine::new(cfg);
    engine.set_calibration(calibration);
    feed(&mut engine, frames)
}
