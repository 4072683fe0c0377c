//! Offline evaluation of dwell policies on recorded or synthetic trials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LinkId, PageLayout};
use crate::policy::PolicyParams;
use crate::segmentation::GazeSample;

pub mod grid;
pub mod replay;
pub mod synth;

pub use grid::{grid_search, pareto_frontier, write_csv, GridSpec, CSV_HEADER};
pub use replay::{
    evaluate_policy, pre_select_scanpath, prepare_trials, replay_with_engine, simulate_policy, PreparedTrial, TrialOutcome,
};
pub use synth::{synth_trials, PostSelectNoise, SynthConfig};

/// One selection attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub layout: PageLayout,
    /// From page presentation through the Select activation.
    pub pre_select: Vec<GazeSample>,
    /// From the first sample off the Select button onwards.
    pub post_select: Vec<GazeSample>,
    pub true_target: LinkId,
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl TrialRecord {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if !self.layout.contains_id(self.true_target) {
            return Err(Error::InvalidArgument(format!(
                "true_target {} is not in the layout",
                self.true_target
            )));
        }
        if self.pre_select.is_empty() {
            return Err(Error::InvalidArgument("pre_select is empty".into()));
        }
        check_consecutive(&self.pre_select, "pre_select")?;
        check_consecutive(&self.post_select, "post_select")?;
        if let (Some(a), Some(b)) = (self.pre_select.last(), self.post_select.first()) {
            if b.t <= a.t {
                return Err(Error::OutOfOrderSample { last: a.t, got: b.t });
            }
        }
        Ok(())
    }
}

/// Sample indices within a stream must increase by exactly one.
pub fn check_consecutive(samples: &[GazeSample], what: &str) -> Result<()> {
    for w in samples.windows(2) {
        if w[1].t != w[0].t + 1 {
            return Err(Error::InvalidArgument(format!(
                "{what}: sample index jumps from {} to {}",
                w[0].t, w[1].t
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvalResult {
    pub policy: PolicyParams,
    pub n_trials: usize,
    /// Wrong selections plus timeouts.
    pub errors: usize,
    pub timeouts: usize,
    pub error_rate: f64,
    pub error_ci: f64,
    /// Mean over trials that ended in a selection; NaN if none did.
    pub mean_response_time_ms: f64,
    pub response_time_ci: f64,
}

/// 95% normal-approximation half-width.
pub const Z95: f64 = 1.96;

impl PolicyEvalResult {
    /// Aggregates integer counts so the result does not depend on trial order.
    pub fn from_counts(
        policy: PolicyParams,
        n_trials: usize,
        errors: usize,
        timeouts: usize,
        rt_sum_samples: u64,
        rt_sq_sum_samples: u128,
    ) -> Self {
        let n = n_trials as f64;
        let error_rate = if n_trials == 0 { 0.0 } else { errors as f64 / n };
        let error_ci = if n_trials == 0 { 0.0 } else { Z95 * (error_rate * (1.0 - error_rate) / n).sqrt() };
        let k = n_trials - timeouts;
        let (mean_response_time_ms, response_time_ci) = if k == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let kf = k as f64;
            let mean = rt_sum_samples as f64 / kf;
            let ci = if k > 1 {
                let ss = rt_sq_sum_samples as f64 - (rt_sum_samples as f64) * mean;
                Z95 * (ss.max(0.0) / (kf - 1.0)).sqrt() / kf.sqrt()
            } else {
                0.0
            };
            (mean * crate::SAMPLE_PERIOD_MS, ci * crate::SAMPLE_PERIOD_MS)
        };
        PolicyEvalResult {
            policy,
            n_trials,
            errors,
            timeouts,
            error_rate,
            error_ci,
            mean_response_time_ms,
            response_time_ci,
        }
    }
}
