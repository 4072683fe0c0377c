use std::io::Write;

use rayon::prelude::*;

use super::replay::{evaluate_policy, PreparedTrial};
use super::PolicyEvalResult;
use crate::error::Result;
use crate::policy::{PolicyParams, Quantization};

pub const CSV_HEADER: &str = "tmax_ms,tmin_ms,tbreak_ms,pbreak,error_rate,err_ci,mean_rt_ms,rt_ci,n,timeouts";

/// `n` sample periods in ms, exact for whole milliseconds.
pub fn samples_to_ms(n: u32) -> f64 {
    n as f64 * 1000.0 / 60.0
}

/// Time and probability axes of the policy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub times_ms: Vec<f64>,
    pub p_breaks: Vec<f64>,
}

impl Default for GridSpec {
    /// One-sample steps up to 500 ms and probability steps of 0.1.
    fn default() -> Self {
        GridSpec::stepped(30, 1, 10)
    }
}

impl GridSpec {
    /// Times `k * step * T_s` for `k = 1..` up to `max_samples`, and `p_steps + 1` probabilities.
    pub fn stepped(max_samples: u32, step_samples: u32, p_steps: u32) -> Self {
        let step = step_samples.max(1);
        GridSpec {
            times_ms: (1..=max_samples / step).map(|k| samples_to_ms(k * step)).collect(),
            p_breaks: (0..=p_steps).map(|i| i as f64 / p_steps.max(1) as f64).collect(),
        }
    }

    /// Every `(t_max, t_min, t_break, p_break)` with `t_min <= t_break <= t_max`.
    pub fn policies(&self) -> Result<Vec<PolicyParams>> {
        let mut out = Vec::new();
        for &t_max in &self.times_ms {
            for &t_min in self.times_ms.iter().filter(|&&t| t <= t_max) {
                for &t_break in self.times_ms.iter().filter(|&&t| t_min <= t && t <= t_max) {
                    for &p in &self.p_breaks {
                        out.push(PolicyParams::new(t_max, t_min, t_break, p)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Evaluates every policy. Rows come back in input order whether or not `parallel` is set.
pub fn grid_search(
    prepared: &[PreparedTrial],
    policies: &[PolicyParams],
    mode: Quantization,
    parallel: bool,
) -> Result<Vec<PolicyEvalResult>> {
    if parallel {
        policies.par_iter().map(|p| evaluate_policy(prepared, p, mode)).collect()
    } else {
        policies.iter().map(|p| evaluate_policy(prepared, p, mode)).collect()
    }
}

/// Rows not dominated in (error rate, mean response time). Rows without selections are skipped.
pub fn pareto_frontier(results: &[PolicyEvalResult]) -> Vec<PolicyEvalResult> {
    let mut idx: Vec<usize> = (0..results.len()).filter(|&i| !results[i].mean_response_time_ms.is_nan()).collect();
    let key = |i: usize| (results[i].error_rate, results[i].mean_response_time_ms);
    idx.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).expect("no NaN").then(a.cmp(&b)));
    let mut keep = Vec::new();
    let mut best_rt = f64::INFINITY;
    let mut last: Option<(f64, f64)> = None;
    for i in idx {
        let (e, rt) = key(i);
        if rt < best_rt || last == Some((e, rt)) {
            keep.push(i);
            best_rt = best_rt.min(rt);
            last = Some((e, rt));
        }
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| results[i].clone()).collect()
}

pub fn write_csv<W: Write>(mut w: W, rows: &[PolicyEvalResult]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        let p = &r.policy;
        writeln!(
            w,
            "{:.3},{:.3},{:.3},{:.2},{:.6},{:.6},{:.3},{:.3},{},{}",
            p.t_max, p.t_min, p.t_break, p.p_break, r.error_rate, r.error_ci, r.mean_response_time_ms,
            r.response_time_ci, r.n_trials, r.timeouts
        )?;
    }
    Ok(())
}
