//! Second-stage model: a factorial HMM over the intended target link and the
//! gaze behavior (on the link, near it, away from it), ending in a terminal
//! state when "Select" is activated.
//!
//! The target chain stays on its link with probability `1 - p_s` and otherwise
//! jumps uniformly to another link. The behavior chain has a free 3x4
//! transition matrix whose last column is the probability of terminating.
//! Fixation locations are Gaussian around the link center for the first two
//! behaviors and uniform over the screen for the third; durations are
//! lognormal per behavior.

mod generate;
mod train;

pub use generate::{sample_scanpath, SampledScanpath};
pub use train::{train_intent, IntentTrainConfig, IntentTrainReport, LabeledScanpath};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{assign_gaze, LinkId, PageLayout, Point, ASSIGN_THRESHOLD_PX};
use crate::math::{diag_normal_logpdf, ln_prob, log_sum_exp, lognormal_logpdf, normalize_log};
use crate::params::DurationUnit;
use crate::segmentation::FixationEvent;

/// Number of most recent fixations used by inference.
pub const DEFAULT_HISTORY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BehaviorState {
    OnLink,
    NearLink,
    Away,
    Terminal,
}

impl BehaviorState {
    pub const EMITTING: [BehaviorState; 3] = [BehaviorState::OnLink, BehaviorState::NearLink, BehaviorState::Away];

    /// Column of the behavior transition matrix.
    pub fn index(self) -> usize {
        self as usize
    }
}

pub(crate) const TERMINAL: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct IntentModelParams {
    /// Rows: previous behavior 1..3. Columns: next behavior 1..3 then terminal.
    pub behavior_transition: [[f64; 4]; 3],
    /// Probability that the intended target changes between fixations.
    pub p_switch: f64,
    /// Size-proportional spread for behaviors 1 and 2 (dimensionless).
    pub beta_x: [f64; 2],
    pub beta_y: [f64; 2],
    /// Size-independent spread for behaviors 1 and 2 (px).
    pub sigma_x: [f64; 2],
    pub sigma_y: [f64; 2],
    /// Lognormal location / scale of the fixation duration per behavior.
    pub mu_d: [f64; 3],
    pub sigma_d: [f64; 3],
    pub initial: [f64; 3],
    pub duration_unit: DurationUnit,
    pub history: usize,
}

impl Default for IntentModelParams {
    /// Uninformative starting point for training.
    fn default() -> Self {
        IntentModelParams {
            behavior_transition: [[0.25; 4]; 3],
            p_switch: 0.05,
            beta_x: [0.1, 0.1],
            beta_y: [0.1, 0.1],
            sigma_x: [20.0, 100.0],
            sigma_y: [10.0, 50.0],
            mu_d: [2.7, 2.7, 2.7],
            sigma_d: [0.5, 0.5, 0.5],
            initial: [1.0 / 3.0; 3],
            duration_unit: DurationUnit::Samples,
            history: DEFAULT_HISTORY,
        }
    }
}

impl IntentModelParams {
    /// Published behavior transitions and emission parameters.
    pub fn fixture() -> Self {
        IntentModelParams {
            behavior_transition: [
                [0.57, 0.00, 0.08, 0.35],
                [0.34, 0.55, 0.03, 0.08],
                [0.05, 0.16, 0.59, 0.20],
            ],
            p_switch: 0.05,
            beta_x: [0.17, 0.0],
            beta_y: [0.48, 0.0],
            sigma_x: [39.38, 126.43],
            sigma_y: [14.07, 38.41],
            mu_d: [2.90, 2.64, 2.54],
            sigma_d: [0.62, 0.45, 0.47],
            initial: [0.08, 0.66, 0.26],
            duration_unit: DurationUnit::Samples,
            history: DEFAULT_HISTORY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        for (k, row) in self.behavior_transition.iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad(format!("behavior transition row {} is not a distribution: {row:?}", k + 1));
            }
        }
        if self.initial.iter().any(|p| !(0.0..=1.0).contains(p)) || (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("initial behavior distribution {:?} is not a distribution", self.initial));
        }
        if !(0.0..=1.0).contains(&self.p_switch) {
            return bad(format!("p_s = {} outside [0, 1]", self.p_switch));
        }
        for b in self.beta_x.iter().chain(&self.beta_y) {
            if !(*b >= 0.0 && b.is_finite()) {
                return bad(format!("beta {b} must be non-negative"));
            }
        }
        for s in self.sigma_x.iter().chain(&self.sigma_y).chain(&self.sigma_d) {
            if !(*s > 0.0 && s.is_finite()) {
                return bad(format!("scale {s} must be positive"));
            }
        }
        if self.sigma_x[1] < self.sigma_x[0] || self.sigma_y[1] < self.sigma_y[0] {
            return bad("near-link spread must not be smaller than on-link spread".into());
        }
        if self.history == 0 {
            return bad("history must be at least one fixation".into());
        }
        Ok(())
    }

    pub(crate) fn ln_behavior(&self) -> [[f64; 4]; 3] {
        let mut out = [[0.0; 4]; 3];
        for (k, row) in self.behavior_transition.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                out[k][j] = ln_prob(p);
            }
        }
        out
    }

    /// Diagonal location covariance for a link of the given size, behavior index 0 or 1.
    pub(crate) fn location_variance(&self, k: usize, width: f64, height: f64) -> (f64, f64) {
        let bx = self.beta_x[k] * width;
        let by = self.beta_y[k] * height;
        (bx * bx + self.sigma_x[k] * self.sigma_x[k], by * by + self.sigma_y[k] * self.sigma_y[k])
    }
}

/// Probability over links that each is the intended target.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentPosterior {
    pub probs: Vec<f64>,
}

impl IntentPosterior {
    pub fn uniform(m: usize) -> Self {
        IntentPosterior { probs: vec![1.0 / m as f64; m] }
    }

    pub fn prob(&self, id: LinkId) -> f64 {
        self.probs[id as usize - 1]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Most probable link, lowest id on ties.
    pub fn argmax(&self) -> LinkId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as LinkId + 1
    }
}

/// `ln p(x, y | I = link, B = behavior)`.
pub fn location_logdensity(
    f: &FixationEvent,
    link: LinkId,
    behavior: BehaviorState,
    layout: &PageLayout,
    params: &IntentModelParams,
) -> Result<f64> {
    let l = layout
        .link(link)
        .ok_or_else(|| Error::InvalidArgument(format!("link {link} not in layout")))?;
    match behavior {
        BehaviorState::OnLink | BehaviorState::NearLink => {
            let k = behavior.index();
            let c = l.bbox.center();
            let (vx, vy) = params.location_variance(k, l.bbox.width, l.bbox.height);
            Ok(diag_normal_logpdf(f.x - c.x, f.y - c.y, vx, vy))
        }
        BehaviorState::Away => Ok(uniform_screen_logdensity(layout)),
        BehaviorState::Terminal => Err(Error::InvalidArgument("terminal state emits nothing".into())),
    }
}

fn uniform_screen_logdensity(layout: &PageLayout) -> f64 {
    -(layout.screen_width() * layout.screen_height()).ln()
}

/// `ln p(d | B = behavior)` with `d` in milliseconds.
pub fn duration_logdensity(duration_ms: f64, behavior: BehaviorState, params: &IntentModelParams) -> Result<f64> {
    if !(duration_ms > 0.0) {
        return Err(Error::InvalidArgument(format!("fixation duration {duration_ms} must be positive")));
    }
    if behavior == BehaviorState::Terminal {
        return Err(Error::InvalidArgument("terminal state emits nothing".into()));
    }
    let k = behavior.index();
    let d = params.duration_unit.from_ms(duration_ms);
    Ok(lognormal_logpdf(d, params.mu_d[k], params.sigma_d[k]))
}

/// `p(I_t = to | I_{t-1} = from)` for `m` links.
pub fn target_transition(from: LinkId, to: LinkId, m: usize, p_switch: f64) -> f64 {
    if from == to {
        if m == 1 {
            1.0
        } else {
            1.0 - p_switch
        }
    } else if m <= 1 {
        0.0
    } else {
        p_switch / (m - 1) as f64
    }
}

/// Per-link, per-behavior emission log-densities of one fixation.
pub(crate) fn emission_table(f: &FixationEvent, layout: &PageLayout, params: &IntentModelParams) -> Result<Vec<[f64; 3]>> {
    let away = uniform_screen_logdensity(layout);
    let mut dur = [0.0; 3];
    for (k, b) in BehaviorState::EMITTING.iter().enumerate() {
        dur[k] = duration_logdensity(f.duration_ms, *b, params)?;
    }
    Ok(layout
        .links
        .iter()
        .map(|l| {
            let c = l.bbox.center();
            let mut e = [0.0; 3];
            for (k, slot) in e.iter_mut().enumerate().take(2) {
                let (vx, vy) = params.location_variance(k, l.bbox.width, l.bbox.height);
                *slot = diag_normal_logpdf(f.x - c.x, f.y - c.y, vx, vy) + dur[k];
            }
            e[2] = away + dur[2];
            e
        })
        .collect())
}

/// Forward variables `ln p(I_T = m, B_T = k, f_1..f_T)` over the whole slice.
pub fn forward_log_joint(
    fixations: &[FixationEvent],
    layout: &PageLayout,
    params: &IntentModelParams,
) -> Result<Vec<[f64; 3]>> {
    if fixations.is_empty() {
        return Err(Error::EmptyScanpath);
    }
    if layout.is_empty() {
        return Err(Error::EmptyLayout);
    }
    let m = layout.len();
    let ln_m = (m as f64).ln();
    let stay = if m == 1 { 1.0 } else { 1.0 - params.p_switch };
    let jump = if m == 1 { 0.0 } else { params.p_switch / (m - 1) as f64 };

    let e = emission_table(&fixations[0], layout, params)?;
    let mut alpha: Vec<[f64; 3]> = e
        .iter()
        .map(|row| {
            let mut a = [0.0; 3];
            for k in 0..3 {
                a[k] = ln_prob(params.initial[k]) - ln_m + row[k];
            }
            a
        })
        .collect();

    let mut lin = vec![[0.0f64; 3]; m];
    let mut prefix = vec![[0.0f64; 3]; m + 1];
    for f in &fixations[1..] {
        let e = emission_table(f, layout, params)?;
        let shift = alpha.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if shift == f64::NEG_INFINITY {
            return Ok(vec![[f64::NEG_INFINITY; 3]; m]);
        }
        // behavior step, in linear space relative to the running maximum
        for (dst, a) in lin.iter_mut().zip(&alpha) {
            let ex = [(a[0] - shift).exp(), (a[1] - shift).exp(), (a[2] - shift).exp()];
            for (kn, slot) in dst.iter_mut().enumerate() {
                *slot = (0..3).map(|k| ex[k] * params.behavior_transition[k][kn]).sum();
            }
        }
        // target step; sums over the other links come from prefix/suffix totals
        for i in 0..m {
            for k in 0..3 {
                prefix[i + 1][k] = prefix[i][k] + lin[i][k];
            }
        }
        let mut suffix = [0.0f64; 3];
        for i in (0..m).rev() {
            for k in 0..3 {
                let others = prefix[i][k] + suffix[k];
                let mixed = stay * lin[i][k] + jump * others;
                alpha[i][k] = ln_prob(mixed) + shift + e[i][k];
            }
            for k in 0..3 {
                suffix[k] += lin[i][k];
            }
        }
    }
    Ok(alpha)
}

/// Posterior over the intended target at "Select" activation, using the most
/// recent `params.history` fixations.
pub fn forward_posterior(scanpath: &[FixationEvent], layout: &PageLayout, params: &IntentModelParams) -> Result<IntentPosterior> {
    if scanpath.is_empty() {
        return Err(Error::EmptyScanpath);
    }
    let start = scanpath.len().saturating_sub(params.history);
    let alpha = forward_log_joint(&scanpath[start..], layout, params)?;
    let ln_b = params.ln_behavior();
    let weights: Vec<f64> = alpha
        .iter()
        .map(|a| log_sum_exp(&[a[0] + ln_b[0][TERMINAL], a[1] + ln_b[1][TERMINAL], a[2] + ln_b[2][TERMINAL]]))
        .collect();
    if log_sum_exp(&weights) == f64::NEG_INFINITY {
        return Ok(IntentPosterior::uniform(layout.len()));
    }
    Ok(IntentPosterior { probs: normalize_log(&weights) })
}

/// The link of the most recent fixation that lands on (or near) any link.
pub fn last_fixated_baseline(scanpath: &[FixationEvent], layout: &PageLayout) -> Option<LinkId> {
    scanpath
        .iter()
        .rev()
        .find_map(|f| assign_gaze(Point::new(f.x, f.y), layout, ASSIGN_THRESHOLD_PX))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn layout3() -> PageLayout {
        PageLayout::from_boxes(
            (1280.0, 1024.0),
            [
                BoundingBox::new(100.0, 100.0, 120.0, 18.0).unwrap(),
                BoundingBox::new(400.0, 300.0, 80.0, 18.0).unwrap(),
                BoundingBox::new(700.0, 600.0, 160.0, 18.0).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn fixture_validates() {
        IntentModelParams::fixture().validate().unwrap();
        IntentModelParams::default().validate().unwrap();
    }

    #[test]
    fn target_transition_rows() {
        assert_eq!(target_transition(2, 2, 5, 0.0), 1.0);
        assert_eq!(target_transition(2, 3, 5, 0.0), 0.0);
        assert!((target_transition(1, 4, 5, 0.2) - 0.05).abs() < 1e-15);
        assert_eq!(target_transition(1, 1, 1, 0.7), 1.0);
        for m in 1..8usize {
            let row: f64 = (1..=m as u32).map(|k| target_transition(1, k, m, 0.37)).sum();
            assert!((row - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn away_location_is_uniform_over_screen() {
        let p = IntentModelParams::fixture();
        let f = FixationEvent::new(3.0, 1000.0, 200.0);
        let v = location_logdensity(&f, 2, BehaviorState::Away, &layout3(), &p).unwrap();
        assert!((v - (1.0 / (1280.0 * 1024.0f64)).ln()).abs() < 1e-12);
    }

    #[test]
    fn on_link_peak_density() {
        let p = IntentModelParams::fixture();
        let lay = layout3();
        let c = lay.links[0].bbox.center();
        let f = FixationEvent::new(c.x, c.y, 200.0);
        let v = location_logdensity(&f, 1, BehaviorState::OnLink, &lay, &p).unwrap();
        let (vx, vy) = p.location_variance(0, 120.0, 18.0);
        let peak = (1.0 / (2.0 * std::f64::consts::PI * (vx * vy).sqrt())).ln();
        assert!((v - peak).abs() < 1e-12);
    }

    #[test]
    fn near_link_density_wider_far_from_center() {
        let p = IntentModelParams::fixture();
        let lay = layout3();
        let f = FixationEvent::new(160.0 + 150.0, 109.0 + 60.0, 200.0);
        let on = location_logdensity(&f, 1, BehaviorState::OnLink, &lay, &p).unwrap();
        let near = location_logdensity(&f, 1, BehaviorState::NearLink, &lay, &p).unwrap();
        assert!(near >= on);
    }

    #[test]
    fn duration_medians_are_ordered() {
        let p = IntentModelParams::fixture();
        assert!(p.mu_d[0] > p.mu_d[1] && p.mu_d[1] > p.mu_d[2]);
        // density at the on-link median beats a shifted location parameter
        let d_ms = p.duration_unit.to_ms(p.mu_d[0].exp());
        let at = duration_logdensity(d_ms, BehaviorState::OnLink, &p).unwrap();
        let mut q = p.clone();
        q.mu_d[0] += 0.3;
        let off = duration_logdensity(d_ms, BehaviorState::OnLink, &q).unwrap();
        assert!(at > off);
        assert!(duration_logdensity(0.0, BehaviorState::OnLink, &p).is_err());
    }

    #[test]
    fn single_link_posterior_is_one() {
        let lay = PageLayout::from_boxes((1280.0, 1024.0), [BoundingBox::new(10.0, 10.0, 50.0, 10.0).unwrap()]).unwrap();
        let sp = vec![FixationEvent::new(500.0, 500.0, 250.0), FixationEvent::new(30.0, 15.0, 300.0)];
        let post = forward_posterior(&sp, &lay, &IntentModelParams::fixture()).unwrap();
        assert_eq!(post.probs, vec![1.0]);
    }

    #[test]
    fn symmetric_links_give_uniform_posterior() {
        let lay = PageLayout::from_boxes(
            (1280.0, 1024.0),
            [BoundingBox::new(300.0, 400.0, 100.0, 20.0).unwrap(), BoundingBox::new(500.0, 400.0, 100.0, 20.0).unwrap()],
        )
        .unwrap();
        let sp: Vec<_> = [380.0, 520.0, 450.0].iter().map(|&y| FixationEvent::new(450.0, y, 300.0)).collect();
        let post = forward_posterior(&sp, &lay, &IntentModelParams::fixture()).unwrap();
        assert!((post.probs[0] - 0.5).abs() < 1e-12 && (post.probs[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let p = IntentModelParams::fixture();
        assert!(matches!(forward_posterior(&[], &layout3(), &p), Err(Error::EmptyScanpath)));
        let empty = PageLayout { screen: [10.0, 10.0], links: vec![] };
        let sp = [FixationEvent::new(1.0, 1.0, 100.0)];
        assert!(matches!(forward_posterior(&sp, &empty, &p), Err(Error::EmptyLayout)));
    }

    #[test]
    fn baseline_skips_unassigned_fixations() {
        let lay = layout3();
        let on2 = FixationEvent::new(440.0, 309.0, 200.0);
        let nowhere = FixationEvent::new(1200.0, 20.0, 200.0);
        assert_eq!(last_fixated_baseline(&[on2], &lay), Some(2));
        assert_eq!(last_fixated_baseline(&[on2, nowhere], &lay), Some(2));
        assert_eq!(last_fixated_baseline(&[nowhere], &lay), None);
    }
}
