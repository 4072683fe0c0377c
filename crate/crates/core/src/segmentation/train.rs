use rayon::prelude::*;

use super::{
    arc_log_weights, emission_shape, pair_arcs, EmissionCov, GazeSample, LabelState, PairArc,
    SegModelParams, PAIRS,
};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::math::log_sum_exp;

#[derive(Debug, Clone)]
pub struct SegTrainConfig {
    pub max_iters: usize,
    /// Stop once the relative log-likelihood improvement drops below this.
    pub tol: f64,
    /// Lower bound on every covariance diagonal (px^2).
    pub variance_floor: f64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        SegTrainConfig { max_iters: 200, tol: 1e-6, variance_floor: 1.0 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SegTrainReport {
    /// Corpus log-likelihood before each update, plus one entry for the returned parameters.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// States or rows that received no expected occupancy and kept their previous values.
    pub warnings: Vec<String>,
}

/// Expected sufficient statistics of one or more traces.
#[derive(Debug, Clone, Default)]
struct Stats {
    log_likelihood: f64,
    transitions: [[[f64; 3]; 3]; 3],
    /// Weighted squared residuals divided by the covariance scale, per axis, plus total weight.
    fixation: [f64; 3],
    saccade: [f64; 3],
    outlier: [f64; 3],
}

impl Stats {
    fn merge(&mut self, o: &Stats) {
        self.log_likelihood += o.log_likelihood;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    self.transitions[a][b][c] += o.transitions[a][b][c];
                }
            }
        }
        for i in 0..3 {
            self.fixation[i] += o.fixation[i];
            self.saccade[i] += o.saccade[i];
            self.outlier[i] += o.outlier[i];
        }
    }
}

fn e_step(points: &[Point], arcs: &[PairArc], params: &SegModelParams) -> Stats {
    let n = points.len();
    let steps = n - 2;
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(steps);
    for t in 2..n {
        let mut w = Vec::with_capacity(arcs.len());
        arc_log_weights(arcs, points, t, params, &mut w);
        weights.push(w);
    }

    // alpha[i] refers to time i + 1 (first pair state covers samples 0 and 1)
    let mut alpha = vec![[f64::NEG_INFINITY; 6]; steps + 1];
    alpha[0] = [params.initial_log_density(); 6];
    let mut buf: [Vec<f64>; 6] = Default::default();
    for s in 0..steps {
        for b in buf.iter_mut() {
            b.clear();
        }
        for (arc, w) in arcs.iter().zip(&weights[s]) {
            buf[arc.to].push(alpha[s][arc.from] + w);
        }
        for (k, b) in buf.iter().enumerate() {
            alpha[s + 1][k] = log_sum_exp(b);
        }
    }
    let ll = log_sum_exp(&alpha[steps]);

    let mut beta = vec![[f64::NEG_INFINITY; 6]; steps + 1];
    beta[steps] = [0.0; 6];
    for s in (0..steps).rev() {
        for b in buf.iter_mut() {
            b.clear();
        }
        for (arc, w) in arcs.iter().zip(&weights[s]) {
            buf[arc.from].push(w + beta[s + 1][arc.to]);
        }
        for (k, b) in buf.iter().enumerate() {
            beta[s][k] = log_sum_exp(b);
        }
    }

    let mut stats = Stats { log_likelihood: ll, ..Default::default() };
    for s in 0..steps {
        let t = s + 2;
        for (arc, w) in arcs.iter().zip(&weights[s]) {
            let lx = alpha[s][arc.from] + w + beta[s + 1][arc.to] - ll;
            if !lx.is_finite() {
                continue;
            }
            let xi = lx.exp();
            if xi == 0.0 {
                continue;
            }
            let (l2, l1, l0) = arc.triple;
            stats.transitions[l2.index()][l1.index()][l0.index()] += xi;
            let (mean, cov) = emission_shape(l2, l1, l0, points[t - 2], points[t - 1]);
            let (dx, dy) = (points[t].x - mean.x, points[t].y - mean.y);
            let (acc, scale) = match cov {
                EmissionCov::Fixation(s) => (&mut stats.fixation, s),
                EmissionCov::Saccade => (&mut stats.saccade, 1.0),
                EmissionCov::Outlier => (&mut stats.outlier, 1.0),
            };
            acc[0] += xi * dx * dx / scale;
            acc[1] += xi * dy * dy / scale;
            acc[2] += xi;
        }
    }
    stats
}

fn corpus_stats(corpus: &[Vec<Point>], arcs: &[PairArc], params: &SegModelParams) -> Stats {
    let per_trace: Vec<Stats> = corpus.par_iter().map(|pts| e_step(pts, arcs, params)).collect();
    let mut total = Stats::default();
    for s in &per_trace {
        total.merge(s);
    }
    total
}

const MIN_OCCUPANCY: f64 = 1e-10;

fn m_step(stats: &Stats, current: &SegModelParams, floor: f64, warnings: &mut Vec<String>) -> SegModelParams {
    let mut next = current.clone();
    for &(a, b) in &PAIRS {
        let row = &stats.transitions[a.index()][b.index()];
        let total: f64 = row.iter().sum();
        if total < MIN_OCCUPANCY {
            push_unique(warnings, format!("label pair {}{} has no expected occupancy", a.symbol(), b.symbol()));
            continue;
        }
        for c in LabelState::ALL {
            let p = if a.may_precede(b) && b.may_precede(c) { row[c.index()] / total } else { 0.0 };
            next.set_p(a, b, c, p);
        }
    }
    let groups: [(&[f64; 3], &mut [f64; 2], &str); 3] = [
        (&stats.fixation, &mut next.sigma_fixation, "fixation"),
        (&stats.saccade, &mut next.sigma_saccade, "saccade"),
        (&stats.outlier, &mut next.sigma_outlier, "outlier"),
    ];
    for (acc, sigma, name) in groups {
        if acc[2] < MIN_OCCUPANCY {
            push_unique(warnings, format!("{name} state has no expected occupancy"));
            continue;
        }
        sigma[0] = (acc[0] / acc[2]).max(floor);
        sigma[1] = (acc[1] / acc[2]).max(floor);
    }
    next
}

fn push_unique(v: &mut Vec<String>, msg: String) {
    if !v.contains(&msg) {
        v.push(msg);
    }
}

/// Fits the segmentation model to unlabeled traces by expectation-maximization
/// on the pair-state chain. Forbidden transitions stay at zero and covariances
/// stay diagonal and above the configured floor.
pub fn train_segmentation(
    traces: &[Vec<GazeSample>],
    init: &SegModelParams,
    config: &SegTrainConfig,
) -> Result<(SegModelParams, SegTrainReport)> {
    if traces.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    init.validate()?;
    if let Some(short) = traces.iter().find(|t| t.len() < 3) {
        return Err(Error::TraceTooShort { len: short.len(), min: 3 });
    }
    let corpus: Vec<Vec<Point>> = traces.iter().map(|t| t.iter().map(|s| s.point).collect()).collect();
    let arcs = pair_arcs();

    let mut params = init.clone();
    let mut report = SegTrainReport::default();
    for iter in 0..config.max_iters {
        let stats = corpus_stats(&corpus, &arcs, &params);
        let ll = stats.log_likelihood;
        if let Some(&prev) = report.log_likelihoods.last() {
            let rel = (ll - prev) / prev.abs().max(f64::MIN_POSITIVE);
            if rel.abs() < config.tol {
                report.log_likelihoods.push(ll);
                report.iterations = iter;
                report.converged = true;
                return Ok((params, report));
            }
        }
        report.log_likelihoods.push(ll);
        params = m_step(&stats, &params, config.variance_floor, &mut report.warnings);
        log::debug!("segmentation EM iteration {iter}: log-likelihood {ll}");
    }
    report.iterations = config.max_iters;
    report.log_likelihoods.push(corpus_stats(&corpus, &arcs, &params).log_likelihood);
    Ok((params, report))
}
