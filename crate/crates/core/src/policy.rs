//! Piecewise-linear dwell-time policies.
//!
//! A policy `[t_max, t_min, t_break, p_break]` maps a target probability `p`
//! to a nominal dwell time that falls linearly from `t_max` at `p = 0` to
//! `t_break` at `p = p_break` and then to `t_min` at `p = 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LinkId;
use crate::intent::IntentPosterior;
use crate::SAMPLE_PERIOD_MS;

/// Tmin of policy family I and lower bound of family II.
pub const FAMILY_T_MIN_MS: f64 = 16.67;
pub const FAMILY_T_MAX_MS: f64 = 500.0;
pub const FAMILY_I_T_BREAK_MS: f64 = 50.0;
pub const FAMILY_I_MAX_P_BREAK: f64 = 0.93;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub t_max: f64,
    pub t_min: f64,
    pub t_break: f64,
    pub p_break: f64,
}

impl PolicyParams {
    pub fn new(t_max: f64, t_min: f64, t_break: f64, p_break: f64) -> Result<Self> {
        let p = PolicyParams { t_max, t_min, t_break, p_break };
        p.validate()?;
        Ok(p)
    }

    /// The same dwell for every link.
    pub fn uniform(t: f64) -> Result<Self> {
        Self::new(t, t, t, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.t_max, self.t_min, self.t_break, self.p_break].iter().all(|v| v.is_finite());
        if !all_finite || !(0.0 < self.t_min && self.t_min <= self.t_break && self.t_break <= self.t_max) {
            return Err(Error::InvalidPolicy(format!("need 0 < t_min <= t_break <= t_max, got {self}")));
        }
        if !(0.0..=1.0).contains(&self.p_break) {
            return Err(Error::InvalidPolicy(format!("p_break {} outside [0, 1]", self.p_break)));
        }
        Ok(())
    }

    pub fn is_uniform(&self) -> bool {
        self.t_min == self.t_max
    }

    /// Nominal dwell (ms) for target probability `p`.
    pub fn nominal_dwell(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        if p == 0.0 {
            return self.t_max;
        }
        if p == self.p_break {
            return self.t_break;
        }
        if p == 1.0 {
            return self.t_min;
        }
        if p < self.p_break {
            self.t_max - (self.t_max - self.t_break) * (p / self.p_break)
        } else {
            self.t_break - (self.t_break - self.t_min) * ((p - self.p_break) / (1.0 - self.p_break))
        }
    }
}

impl fmt::Display for PolicyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.t_max, self.t_min, self.t_break, self.p_break)
    }
}

/// Parses `tmax,tmin,tbreak,pbreak` (ms, ms, ms, probability).
impl FromStr for PolicyParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::InvalidPolicy(format!("expected 'tmax,tmin,tbreak,pbreak', got '{s}'")));
        }
        let mut v = [0.0; 4];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::InvalidPolicy(format!("'{part}' is not a number")))?;
        }
        PolicyParams::new(v[0], v[1], v[2], v[3])
    }
}

/// `h(p)` of a policy; see [`PolicyParams::nominal_dwell`].
pub fn nominal_dwell(p: f64, policy: &PolicyParams) -> Result<f64> {
    policy.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    Ok(policy.nominal_dwell(p))
}

/// `[500 ms, 16.67 ms, 50 ms, p_break]`, `p_break` in `[0, 0.93]`.
pub fn policy_family_i(p_break: f64) -> Result<PolicyParams> {
    if !(0.0..=FAMILY_I_MAX_P_BREAK).contains(&p_break) {
        return Err(Error::InvalidArgument(format!("family I p_break {p_break} outside [0, 0.93]")));
    }
    PolicyParams::new(FAMILY_T_MAX_MS, FAMILY_T_MIN_MS, FAMILY_I_T_BREAK_MS, p_break)
}

/// `[500 ms, t_min, t_min, 1]`, `t_min` in `[16.67, 500]` ms. One sample period
/// (16.666.. ms) is accepted as the lower end.
pub fn policy_family_ii(t_min: f64) -> Result<PolicyParams> {
    if !(crate::SAMPLE_PERIOD_MS - 1e-9..=FAMILY_T_MAX_MS + 1e-9).contains(&t_min) {
        return Err(Error::InvalidArgument(format!("family II t_min {t_min} outside [16.67, 500] ms")));
    }
    let t_min = t_min.min(FAMILY_T_MAX_MS);
    PolicyParams::new(FAMILY_T_MAX_MS, t_min, t_min, 1.0)
}

/// How nominal dwell times are turned into whole samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quantization {
    /// Nearest sample (halves round up), at least one.
    #[default]
    PerSample,
    /// Down to a multiple of `q` samples, at least `q`.
    Coarse(u32),
}

impl FromStr for Quantization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "per-sample" {
            return Ok(Quantization::PerSample);
        }
        if let Some(q) = s.strip_prefix("coarse:") {
            let q: u32 = q
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad coarse step '{q}'")))?;
            if q == 0 {
                return Err(Error::InvalidArgument("coarse step must be positive".into()));
            }
            return Ok(Quantization::Coarse(q));
        }
        Err(Error::InvalidArgument(format!("expected 'per-sample' or 'coarse:<q>', got '{s}'")))
    }
}

impl fmt::Display for Quantization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantization::PerSample => f.write_str("per-sample"),
            Quantization::Coarse(q) => write!(f, "coarse:{q}"),
        }
    }
}

/// Ratio snapped to the nearest integer when within float noise of it.
fn sample_ratio(t_ms: f64, step_ms: f64) -> f64 {
    let x = t_ms / step_ms;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// Dwell in samples for a nominal dwell in milliseconds.
pub fn quantize_dwell(t_ms: f64, mode: Quantization) -> Result<u32> {
    if !(t_ms > 0.0) || !t_ms.is_finite() {
        return Err(Error::InvalidArgument(format!("dwell {t_ms} ms must be positive")));
    }
    Ok(quantize_unchecked(t_ms, mode))
}

#[inline]
pub(crate) fn quantize_unchecked(t_ms: f64, mode: Quantization) -> u32 {
    match mode {
        Quantization::PerSample => (sample_ratio(t_ms, SAMPLE_PERIOD_MS) + 0.5).floor().max(1.0) as u32,
        Quantization::Coarse(q) => {
            let blocks = sample_ratio(t_ms, q as f64 * SAMPLE_PERIOD_MS).floor().max(1.0) as u32;
            blocks * q
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkDwell {
    pub link: LinkId,
    /// Dwell in samples.
    pub samples: u32,
    /// Nominal dwell before quantization (ms).
    pub nominal_ms: f64,
}

/// Per-link dwell times, indexed by link id - 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellAssignment {
    pub dwells: Vec<LinkDwell>,
}

impl DwellAssignment {
    pub fn samples(&self, link: LinkId) -> u32 {
        self.dwells[link as usize - 1].samples
    }

    pub fn len(&self) -> usize {
        self.dwells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dwells.is_empty()
    }
}

pub fn assign_dwells(posterior: &IntentPosterior, policy: &PolicyParams, mode: Quantization) -> Result<DwellAssignment> {
    policy.validate()?;
    let dwells = posterior
        .probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let nominal_ms = policy.nominal_dwell(p);
            Ok(LinkDwell { link: i as LinkId + 1, samples: quantize_dwell(nominal_ms, mode)?, nominal_ms })
        })
        .collect::<Result<_>>()?;
    Ok(DwellAssignment { dwells })
}
