//! Two-task calibration: relaxation then word association.

use serde::{Deserialize, Serialize};

use crate::signal::CalibrationResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationTask {
    Relaxation,
    WordAssociation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationFailure {
    Quality { detail: String },
    Degenerate { e_min: f64, e_max: f64 },
}

impl std::fmt::Display for CalibrationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Quality { detail } => write!(f, "insufficient signal quality: {detail}"),
            Self::Degenerate { e_min, e_max } => {
                write!(f, "degenerate calibration: e_min {e_min} vs e_max {e_max}")
            }
        }
    }
}

/// Where the calibration state machine currently stands.
///
/// Transitions: `Idle -> Relaxation -> WordAssociation -> Complete`, with
/// `Interrupted` reachable from either task on stream loss (resuming restarts
/// only that task) and `Failed` on too few valid windows or a degenerate range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum CalibrationPhase {
    Idle,
    Relaxation { started_ms: f64 },
    WordAssociation { started_ms: f64 },
    Interrupted { task: CalibrationTask, at_ms: f64 },
    Complete { result: CalibrationResult },
    Failed { failure: CalibrationFailure },
}

impl CalibrationPhase {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Idle => "idle",
            Self::Relaxation { .. } => "relaxation",
            Self::WordAssociation { .. } => "word_association",
            Self::Interrupted { .. } => "interrupted",
            Self::Complete { .. } => "complete",
            Self::Failed { .. } => "failed",
        }
    }

    pub(crate) fn running_task(&self) -> Option<(CalibrationTask, f64)> {
        match *self {
            Self::Relaxation { started_ms } => Some((CalibrationTask::Relaxation, started_ms)),
            Self::WordAssociation { started_ms } => {
                Some((CalibrationTask::WordAssociation, started_ms))
            }
            _ => None,
        }
    }
}

/// Snapshot for status endpoints and the calibration modal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStatus {
    pub phase: CalibrationPhase,
    /// Seconds left in the running task.
    pub remaining_s: Option<f64>,
    pub relaxation_windows: usize,
    pub word_association_windows: usize,
    /// Windows collected so far in the running task.
    pub current_windows: usize,
    pub result: Option<CalibrationResult>,
}

#[derive(Debug, Clone)]
pub(crate) struct CalibrationState {
    pub phase: CalibrationPhase,
    pub relaxation: Vec<f64>,
    pub word_association: Vec<f64>,
    pub current: Vec<f64>,
}

impl Default for CalibrationState {
    fn default() -> Self {
        Self {
            phase: CalibrationPhase::Idle,
            relaxation: Vec::new(),
            word_association: Vec::new(),
            current: Vec::new(),
        }
    }
}

impl CalibrationState {
    pub fn begin(&mut self, task: CalibrationTask, now_ms: f64) {
        self.current.clear();
        match task {
            CalibrationTask::Relaxation => {
                self.relaxation.clear();
                self.word_association.clear();
                self.phase = CalibrationPhase::Relaxation { started_ms: now_ms };
            }
            CalibrationTask::WordAssociation => {
                self.word_association.clear();
                self.phase = CalibrationPhase::WordAssociation { started_ms: now_ms };
            }
        }
    }

    /// Pool both tasks' window scores. Only called once both are complete.
    pub fn pooled_bounds(&self) -> Option<(f64, f64)> {
        if self.relaxation.is_empty() || self.word_association.is_empty() {
            return None;
        }
        let all = self.relaxation.iter().chain(&self.word_association);
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        Some((lo, hi))
    }
}
