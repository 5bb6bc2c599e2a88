//! Closed-loop EEG engagement scoring for a neuroadaptive chat tutor.
//!
//! The crate is organised the way data flows through the system:
//!
//! * [`signal`]: causal filtering, epoching, spectral estimation and the
//!   engagement index `beta / (alpha + theta)` with its calibration-based
//!   normalisation.
//! * [`ingest`]: frame sources (bridge wire protocol, CSV replay, synthetic
//!   generator).
//! * [`engine`]: per-session state machine: calibration, 1 Hz scoring, artifact
//!   gating and score freezing while the learner types.
//! * [`llm`]: system prompts, hidden score injection, chat-completion wire types
//!   and a deterministic mock model.
//! * [`analysis`]: offline cleaning, z-scoring and condition summaries of
//!   exported metrics logs.

pub mod analysis;
pub mod config;
pub mod engine;
pub mod ingest;
pub mod llm;
pub mod signal;

pub use config::Config;
pub use engine::{EngagementEngine, EngagementSample};
pub use signal::{BandPowers, CalibrationResult, EegFrame, Epoch};
