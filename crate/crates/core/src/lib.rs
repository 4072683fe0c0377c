//! Gaze-intent inference and variable dwell-time selection.
//!
//! The pipeline has two probabilistic stages:
//!
//! 1. [`segmentation`] labels every 60 Hz gaze sample as fixation, saccade or
//!    outlier with a second-order autoregressive HMM and groups the samples
//!    into a [`Scanpath`].
//! 2. [`intent`] runs a factorial HMM (target identity x gaze behavior) over
//!    the most recent fixations and returns the probability that each
//!    hyperlink is the one the user is about to select.
//!
//! [`policy`] turns those probabilities into per-link dwell times,
//! [`engine`] is the real-time selection state machine, [`sim`] replays
//! recorded or synthetic trials to measure the speed/accuracy tradeoff, and
//! [`gateway`] exposes the engine over a framed socket protocol.

pub mod engine;
pub mod error;
pub mod gateway;
pub mod geometry;
pub mod intent;
pub mod math;
pub mod params;
pub mod policy;
pub mod segmentation;
pub mod sim;
pub mod trace;

pub use engine::{ButtonRegion, Command, Engine, EngineConfig, EngineEvent, Phase};
pub use error::{Error, Result};
pub use geometry::{assign_gaze, box_distance, BoundingBox, Hyperlink, LinkId, PageLayout, Point};
pub use intent::{forward_posterior, last_fixated_baseline, IntentModelParams, IntentPosterior};
pub use params::{DurationUnit, ModelParams};
pub use policy::{assign_dwells, DwellAssignment, PolicyParams, Quantization};
pub use segmentation::{
    extract_fixations, viterbi_labels, FixationEvent, GazeSample, LabelState, Scanpath,
    SegModelParams,
};
pub use sim::{PolicyEvalResult, TrialRecord};

/// Gaze tracker sampling period in milliseconds (60 Hz).
pub const SAMPLE_PERIOD_MS: f64 = 1000.0 / 60.0;

/// Default screen used when nothing else is known (the recording setup).
pub const DEFAULT_SCREEN: (f64, f64) = (1280.0, 1024.0);
