//! First-stage model: a second-order autoregressive, second-order HMM that
//! labels each gaze sample as fixation, saccade or outlier.
//!
//! The label chain is second order, so decoding and training run on the
//! first-order chain of label *pairs* `(l[t-1], l[t])`. Pairs containing a
//! forbidden adjacent transition (outlier to or from saccade, outlier to
//! outlier) are not states at all. The first two samples carry only the
//! uniform initial term; emissions start at the third sample and depend on
//! the previous two samples and the full label triple.

mod fixations;
mod generate;
mod train;

pub use fixations::{extract_fixations, FixationEvent, Scanpath, MIN_FIXATION_MS};
pub use generate::sample_trace;
pub use train::{train_segmentation, SegTrainConfig, SegTrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::math::{diag_normal_logpdf, ln_prob, log_sum_exp};
use crate::DEFAULT_SCREEN;

/// One gaze point of a 60 Hz stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t: u64,
    pub point: Point,
}

impl GazeSample {
    pub fn new(t: u64, x: f64, y: f64) -> Self {
        GazeSample { t, point: Point::new(x, y) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelState {
    Fixation,
    Saccade,
    Outlier,
}

impl LabelState {
    pub const ALL: [LabelState; 3] = [LabelState::Fixation, LabelState::Saccade, LabelState::Outlier];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> LabelState {
        Self::ALL[i]
    }

    pub fn symbol(self) -> char {
        match self {
            LabelState::Fixation => 'f',
            LabelState::Saccade => 's',
            LabelState::Outlier => 'o',
        }
    }

    /// Whether `self -> next` may appear as adjacent labels.
    pub fn may_precede(self, next: LabelState) -> bool {
        use LabelState::*;
        !matches!((self, next), (Outlier, Saccade) | (Saccade, Outlier) | (Outlier, Outlier))
    }
}

/// Label pairs that are valid states of the reduced chain, in a fixed order.
pub(crate) const PAIRS: [(LabelState, LabelState); 6] = {
    use LabelState::*;
    [
        (Fixation, Fixation),
        (Fixation, Saccade),
        (Fixation, Outlier),
        (Saccade, Fixation),
        (Saccade, Saccade),
        (Outlier, Fixation),
    ]
};

pub(crate) fn pair_index(a: LabelState, b: LabelState) -> Option<usize> {
    PAIRS.iter().position(|&p| p == (a, b))
}

pub fn is_allowed_triple(l2: LabelState, l1: LabelState, l0: LabelState) -> bool {
    l2.may_precede(l1) && l1.may_precede(l0)
}

/// Parameters of the segmentation model.
#[derive(Debug, Clone, PartialEq)]
pub struct SegModelParams {
    /// `transition[l2][l1][l0] = p(l0 | l2, l1)`; entries of forbidden triples are 0.
    pub transition: [[[f64; 3]; 3]; 3],
    /// Diagonal of the fixation covariance (px^2).
    pub sigma_fixation: [f64; 2],
    pub sigma_saccade: [f64; 2],
    pub sigma_outlier: [f64; 2],
    /// Screen extent for the uniform density of the first two samples.
    pub screen: [f64; 2],
}

impl Default for SegModelParams {
    /// Uniform allowed transitions, fixation jitter well below saccade amplitude.
    fn default() -> Self {
        let mut transition = [[[0.0; 3]; 3]; 3];
        for &(a, b) in &PAIRS {
            let n = LabelState::ALL.iter().filter(|&&c| b.may_precede(c)).count() as f64;
            for c in LabelState::ALL {
                if b.may_precede(c) {
                    transition[a.index()][b.index()][c.index()] = 1.0 / n;
                }
            }
        }
        SegModelParams {
            transition,
            sigma_fixation: [25.0, 25.0],
            sigma_saccade: [1.0e4, 1.0e4],
            sigma_outlier: [4.0e4, 4.0e4],
            screen: [DEFAULT_SCREEN.0, DEFAULT_SCREEN.1],
        }
    }
}

impl SegModelParams {
    pub fn p(&self, l2: LabelState, l1: LabelState, l0: LabelState) -> f64 {
        self.transition[l2.index()][l1.index()][l0.index()]
    }

    pub fn set_p(&mut self, l2: LabelState, l1: LabelState, l0: LabelState, p: f64) {
        self.transition[l2.index()][l1.index()][l0.index()] = p;
    }

    pub fn validate(&self) -> Result<()> {
        for l2 in LabelState::ALL {
            for l1 in LabelState::ALL {
                let mut sum = 0.0;
                for l0 in LabelState::ALL {
                    let p = self.p(l2, l1, l0);
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidArgument(format!("transition probability {p} out of range")));
                    }
                    if !is_allowed_triple(l2, l1, l0) && p != 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "forbidden triple {} has probability {p}",
                            triple_name(l2, l1, l0)
                        )));
                    }
                    sum += p;
                }
                if l2.may_precede(l1) && (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "transition row {}{} sums to {sum}",
                        l2.symbol(),
                        l1.symbol()
                    )));
                }
            }
        }
        for v in self.sigma_fixation.iter().chain(&self.sigma_saccade).chain(&self.sigma_outlier) {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("covariance diagonal {v} must be positive")));
            }
        }
        if !(self.screen[0] > 0.0 && self.screen[1] > 0.0) {
            return Err(Error::InvalidArgument("screen dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Log of the constant initial density over (label pair, first two coordinates).
    pub fn initial_log_density(&self) -> f64 {
        -(PAIRS.len() as f64).ln() - 2.0 * (self.screen[0] * self.screen[1]).ln()
    }
}

pub(crate) fn triple_name(l2: LabelState, l1: LabelState, l0: LabelState) -> String {
    [l2.symbol(), l1.symbol(), l0.symbol()].iter().collect()
}

/// Which covariance an emission uses and how it is scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum EmissionCov {
    Fixation(f64),
    Saccade,
    Outlier,
}

/// Mean and covariance choice for the sample following labels `l2, l1` with label `l0`.
pub(crate) fn emission_shape(
    l2: LabelState,
    l1: LabelState,
    l0: LabelState,
    g2: Point,
    g1: Point,
) -> (Point, EmissionCov) {
    use LabelState::*;
    let mean = match (l2, l1) {
        (Fixation, Outlier) => g2,
        (Outlier, Fixation) => g1,
        (_, Fixation) => Point::new(0.5 * (g2.x + g1.x), 0.5 * (g2.y + g1.y)),
        _ => g1,
    };
    let cov = match (l2, l1, l0) {
        (_, _, Saccade) => EmissionCov::Saccade,
        (_, _, Outlier) => EmissionCov::Outlier,
        (Outlier, Fixation, Fixation) => EmissionCov::Fixation(2.0),
        (_, Fixation, Fixation) => EmissionCov::Fixation(1.5),
        _ => EmissionCov::Fixation(2.0),
    };
    (mean, cov)
}

impl SegModelParams {
    pub(crate) fn cov_diag(&self, cov: EmissionCov) -> [f64; 2] {
        match cov {
            EmissionCov::Fixation(s) => [s * self.sigma_fixation[0], s * self.sigma_fixation[1]],
            EmissionCov::Saccade => self.sigma_saccade,
            EmissionCov::Outlier => self.sigma_outlier,
        }
    }
}

/// `ln p(g0 | l2 l1 l0, g2 g1)`.
pub fn emission_logdensity(
    labels: (LabelState, LabelState, LabelState),
    g2: Point,
    g1: Point,
    g0: Point,
    params: &SegModelParams,
) -> Result<f64> {
    let (l2, l1, l0) = labels;
    if !is_allowed_triple(l2, l1, l0) {
        return Err(Error::ForbiddenTriple(triple_name(l2, l1, l0)));
    }
    Ok(emission_unchecked(l2, l1, l0, g2, g1, g0, params))
}

#[inline]
fn emission_unchecked(
    l2: LabelState,
    l1: LabelState,
    l0: LabelState,
    g2: Point,
    g1: Point,
    g0: Point,
    params: &SegModelParams,
) -> f64 {
    let (mean, cov) = emission_shape(l2, l1, l0, g2, g1);
    let [vx, vy] = params.cov_diag(cov);
    diag_normal_logpdf(g0.x - mean.x, g0.y - mean.y, vx, vy)
}

/// Transition of the pair chain: from pair `(a, b)` to pair `(b, c)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairArc {
    pub from: usize,
    pub to: usize,
    pub triple: (LabelState, LabelState, LabelState),
}

pub(crate) fn pair_arcs() -> Vec<PairArc> {
    let mut arcs = Vec::with_capacity(14);
    for (from, &(a, b)) in PAIRS.iter().enumerate() {
        for c in LabelState::ALL {
            if let Some(to) = pair_index(b, c) {
                arcs.push(PairArc { from, to, triple: (a, b, c) });
            }
        }
    }
    arcs
}

/// Per-step log weight of every arc: transition plus emission at sample `t`.
pub(crate) fn arc_log_weights(
    arcs: &[PairArc],
    points: &[Point],
    t: usize,
    params: &SegModelParams,
    out: &mut Vec<f64>,
) {
    out.clear();
    let (g2, g1, g0) = (points[t - 2], points[t - 1], points[t]);
    for arc in arcs {
        let (l2, l1, l0) = arc.triple;
        let lp = ln_prob(params.p(l2, l1, l0));
        out.push(if lp == f64::NEG_INFINITY {
            lp
        } else {
            lp + emission_unchecked(l2, l1, l0, g2, g1, g0, params)
        });
    }
}

fn points_of(trace: &[GazeSample]) -> Vec<Point> {
    trace.iter().map(|s| s.point).collect()
}

/// Most probable label sequence and its joint log-probability.
pub fn viterbi_decode(trace: &[GazeSample], params: &SegModelParams) -> Result<(Vec<LabelState>, f64)> {
    if trace.len() < 3 {
        return Err(Error::TraceTooShort { len: trace.len(), min: 3 });
    }
    let points = points_of(trace);
    let n = points.len();
    let arcs = pair_arcs();
    let init = params.initial_log_density();

    // delta[s] is the best log-prob of any path ending in pair state s at time t.
    let mut delta = [init; 6];
    let mut back: Vec<[u8; 6]> = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(arcs.len());
    for t in 2..n {
        arc_log_weights(&arcs, &points, t, params, &mut weights);
        let mut next = [f64::NEG_INFINITY; 6];
        let mut ptr = [0u8; 6];
        for (arc, w) in arcs.iter().zip(&weights) {
            let v = delta[arc.from] + w;
            if v > next[arc.to] {
                next[arc.to] = v;
                ptr[arc.to] = arc.from as u8;
            }
        }
        back.push(ptr);
        delta = next;
    }

    let (mut state, best) = delta
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });

    let mut labels = vec![LabelState::Fixation; n];
    for t in (2..n).rev() {
        labels[t] = PAIRS[state].1;
        state = back[t - 2][state] as usize;
    }
    labels[1] = PAIRS[state].1;
    labels[0] = PAIRS[state].0;
    Ok((labels, best))
}

/// Labels each sample fixation, saccade or outlier.
pub fn viterbi_labels(trace: &[GazeSample], params: &SegModelParams) -> Result<Vec<LabelState>> {
    viterbi_decode(trace, params).map(|(labels, _)| labels)
}

/// Log-likelihood of a trace with all label sequences summed out.
pub fn trace_log_likelihood(trace: &[GazeSample], params: &SegModelParams) -> Result<f64> {
    if trace.len() < 3 {
        return Err(Error::TraceTooShort { len: trace.len(), min: 3 });
    }
    let points = points_of(trace);
    let arcs = pair_arcs();
    let mut alpha = [params.initial_log_density(); 6];
    let mut weights = Vec::with_capacity(arcs.len());
    let mut buf: [Vec<f64>; 6] = Default::default();
    for t in 2..points.len() {
        arc_log_weights(&arcs, &points, t, params, &mut weights);
        for b in buf.iter_mut() {
            b.clear();
        }
        for (arc, w) in arcs.iter().zip(&weights) {
            buf[arc.to].push(alpha[arc.from] + w);
        }
        for (s, b) in buf.iter().enumerate() {
            alpha[s] = log_sum_exp(b);
        }
    }
    Ok(log_sum_exp(&alpha))
}
