//! Semi-supervised training of the intent model.
//!
//! Phase one clamps the target chain to the known target and runs EM on the
//! behavior chain alone (transitions including termination, initial
//! distribution, location spreads, duration densities). Phase two freezes
//! those and picks the switch probability from a grid by inference accuracy.

use rayon::prelude::*;

use super::{forward_posterior, IntentModelParams, TERMINAL};
use crate::error::{Error, Result};
use crate::geometry::{LinkId, PageLayout};
use crate::math::{diag_normal_logpdf, ln_prob, log_sum_exp, lognormal_logpdf};
use crate::segmentation::Scanpath;

/// A scanpath with the link the user actually selected.
#[derive(Debug, Clone)]
pub struct LabeledScanpath {
    pub scanpath: Scanpath,
    pub layout: PageLayout,
    pub target: LinkId,
}

#[derive(Debug, Clone)]
pub struct IntentTrainConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Candidate switch probabilities for the second pass.
    pub p_switch_grid: Vec<f64>,
    /// Floor on the location spreads (px).
    pub sigma_floor: f64,
    pub sigma_d_floor: f64,
    /// Train on only the last `n` fixations of each scanpath; `None` uses all.
    pub window: Option<usize>,
}

impl Default for IntentTrainConfig {
    fn default() -> Self {
        IntentTrainConfig {
            max_iters: 200,
            tol: 1e-6,
            p_switch_grid: (0..=50).map(|i| i as f64 / 100.0).collect(),
            sigma_floor: 1.0,
            sigma_d_floor: 1e-3,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IntentTrainReport {
    /// Clamped-target log-likelihood before each update, plus one for the result.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `(p_s, accuracy)` for every grid candidate.
    pub p_switch_scores: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Per-fixation quantities that do not depend on the parameters.
#[derive(Debug, Clone, Copy)]
struct Obs {
    dx: f64,
    dy: f64,
    w: f64,
    h: f64,
    ln_d: f64,
    ln_away: f64,
}

fn prepare(example: &LabeledScanpath, params: &IntentModelParams, window: Option<usize>) -> Result<Vec<Obs>> {
    let link = example
        .layout
        .link(example.target)
        .ok_or_else(|| Error::InvalidArgument(format!("target {} not in layout", example.target)))?;
    if example.scanpath.is_empty() {
        return Err(Error::EmptyScanpath);
    }
    let start = window.map_or(0, |n| example.scanpath.len().saturating_sub(n));
    let c = link.bbox.center();
    let ln_away = -(example.layout.screen_width() * example.layout.screen_height()).ln();
    example.scanpath[start..]
        .iter()
        .map(|f| {
            if !(f.duration_ms > 0.0) {
                return Err(Error::InvalidArgument(format!("fixation duration {} must be positive", f.duration_ms)));
            }
            Ok(Obs {
                dx: f.x - c.x,
                dy: f.y - c.y,
                w: link.bbox.width,
                h: link.bbox.height,
                ln_d: params.duration_unit.from_ms(f.duration_ms).ln(),
                ln_away,
            })
        })
        .collect()
}

fn emissions(o: &Obs, p: &IntentModelParams) -> [f64; 3] {
    let d = o.ln_d.exp();
    let mut e = [0.0; 3];
    for k in 0..2 {
        let (vx, vy) = p.location_variance(k, o.w, o.h);
        e[k] = diag_normal_logpdf(o.dx, o.dy, vx, vy) + lognormal_logpdf(d, p.mu_d[k], p.sigma_d[k]);
    }
    e[2] = o.ln_away + lognormal_logpdf(d, p.mu_d[2], p.sigma_d[2]);
    e
}

#[derive(Debug, Clone, Default)]
struct Posteriors {
    ll: f64,
    gamma: Vec<[f64; 3]>,
    /// Expected transition counts, last column = termination.
    counts: [[f64; 4]; 3],
}

fn e_step(obs: &[Obs], p: &IntentModelParams) -> Posteriors {
    let n = obs.len();
    let ln_a = p.ln_behavior();
    let em: Vec<[f64; 3]> = obs.iter().map(|o| emissions(o, p)).collect();

    let mut alpha = vec![[0.0; 3]; n];
    for k in 0..3 {
        alpha[0][k] = ln_prob(p.initial[k]) + em[0][k];
    }
    for t in 1..n {
        for kn in 0..3 {
            let v = [alpha[t - 1][0] + ln_a[0][kn], alpha[t - 1][1] + ln_a[1][kn], alpha[t - 1][2] + ln_a[2][kn]];
            alpha[t][kn] = log_sum_exp(&v) + em[t][kn];
        }
    }
    let ll = log_sum_exp(&[
        alpha[n - 1][0] + ln_a[0][TERMINAL],
        alpha[n - 1][1] + ln_a[1][TERMINAL],
        alpha[n - 1][2] + ln_a[2][TERMINAL],
    ]);

    let mut beta = vec![[0.0; 3]; n];
    for k in 0..3 {
        beta[n - 1][k] = ln_a[k][TERMINAL];
    }
    for t in (0..n - 1).rev() {
        for k in 0..3 {
            let v = [
                ln_a[k][0] + em[t + 1][0] + beta[t + 1][0],
                ln_a[k][1] + em[t + 1][1] + beta[t + 1][1],
                ln_a[k][2] + em[t + 1][2] + beta[t + 1][2],
            ];
            beta[t][k] = log_sum_exp(&v);
        }
    }

    let mut out = Posteriors { ll, gamma: vec![[0.0; 3]; n], counts: [[0.0; 4]; 3] };
    if !ll.is_finite() {
        return out;
    }
    for t in 0..n {
        for k in 0..3 {
            out.gamma[t][k] = finite_exp(alpha[t][k] + beta[t][k] - ll);
        }
    }
    for t in 0..n - 1 {
        for k in 0..3 {
            for kn in 0..3 {
                out.counts[k][kn] += finite_exp(alpha[t][k] + ln_a[k][kn] + em[t + 1][kn] + beta[t + 1][kn] - ll);
            }
        }
    }
    for k in 0..3 {
        out.counts[k][TERMINAL] += out.gamma[n - 1][k];
    }
    out
}

fn finite_exp(x: f64) -> f64 {
    if x.is_finite() {
        x.exp()
    } else {
        0.0
    }
}

/// Weighted Gaussian log-likelihood of residuals with variance `a * s2 + b`.
struct AxisData {
    w: Vec<f64>,
    r2: Vec<f64>,
    s2: Vec<f64>,
}

impl AxisData {
    fn objective(&self, a: f64, b: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.w.len() {
            if self.w[i] == 0.0 {
                continue;
            }
            let v = a * self.s2[i] + b;
            acc += self.w[i] * (-0.5 * v.ln() - 0.5 * self.r2[i] / v);
        }
        acc
    }

    fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Best point of `f` on `[lo, hi]`, returned only if it does not lose to `current`.
fn maximize_bounded(f: impl Fn(f64) -> f64, lo: f64, hi: f64, current: f64) -> f64 {
    let current = current.clamp(lo, hi);
    if hi <= lo {
        return current;
    }
    const N: usize = 32;
    let base = if lo > 0.0 { lo } else { (hi * 1e-9).max(1e-12) };
    let ratio = (hi / base).powf(1.0 / (N - 1) as f64);
    let mut grid: Vec<f64> = (0..N).map(|i| (base * ratio.powi(i as i32)).min(hi)).collect();
    if lo < base {
        grid.insert(0, lo);
    }
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let best = (0..grid.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
    let mut l = grid[best.saturating_sub(1)];
    let mut r = grid[(best + 1).min(grid.len() - 1)];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = r - g * (r - l);
    let mut d = l + g * (r - l);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc > fd {
            r = d;
            d = c;
            fd = fc;
            c = r - g * (r - l);
            fc = f(c);
        } else {
            l = c;
            c = d;
            fc = fd;
            d = l + g * (r - l);
            fd = f(d);
        }
    }
    let mut cand = [(grid[best], vals[best]), (c, fc), (d, fd)];
    cand.sort_by(|x, y| y.1.total_cmp(&x.1));
    if cand[0].1 > f(current) {
        cand[0].0
    } else {
        current
    }
}

/// Coordinate ascent over (beta^2, sigma^2) of both Gaussian behaviors on one
/// axis, keeping sigma of the near-link behavior at least that of the on-link one.
fn update_axis(data: &[AxisData; 2], beta: &mut [f64; 2], sigma: &mut [f64; 2], floor: f64) {
    let mut a = [beta[0] * beta[0], beta[1] * beta[1]];
    let mut b = [sigma[0] * sigma[0], sigma[1] * sigma[1]];
    let floor2 = floor * floor;
    let max_r2 = data.iter().flat_map(|d| d.r2.iter()).copied().fold(0.0, f64::max);
    let min_s2 = data.iter().flat_map(|d| d.s2.iter()).copied().fold(f64::INFINITY, f64::min).max(1e-9);
    let cap_b = 2.0 * max_r2.max(b[0]).max(b[1]).max(floor2) + 1.0;
    let cap_a = 2.0 * (max_r2 / min_s2).max(a[0]).max(a[1]) + 1e-6;
    for _ in 0..4 {
        for k in 0..2 {
            if data[k].total_weight() <= 1e-10 {
                continue;
            }
            let bk = b[k];
            a[k] = maximize_bounded(|x| data[k].objective(x, bk), 0.0, cap_a, a[k]);
            let (lo, hi) = if k == 0 { (floor2, b[1]) } else { (b[0].max(floor2), cap_b.max(b[0])) };
            let ak = a[k];
            b[k] = maximize_bounded(|x| data[k].objective(ak, x), lo, hi, b[k]);
        }
    }
    *beta = [a[0].sqrt(), a[1].sqrt()];
    *sigma = [b[0].sqrt(), b[1].sqrt()];
}

fn m_step(
    corpus: &[Vec<Obs>],
    post: &[Posteriors],
    current: &IntentModelParams,
    cfg: &IntentTrainConfig,
    warnings: &mut Vec<String>,
) -> IntentModelParams {
    let mut next = current.clone();

    let mut counts = [[0.0; 4]; 3];
    let mut init = [0.0; 3];
    for p in post {
        for k in 0..3 {
            for j in 0..4 {
                counts[k][j] += p.counts[k][j];
            }
            init[k] += p.gamma.first().map_or(0.0, |g| g[k]);
        }
    }
    for k in 0..3 {
        let total: f64 = counts[k].iter().sum();
        if total < 1e-10 {
            push_unique(warnings, format!("behavior {} has no expected transitions", k + 1));
            continue;
        }
        for j in 0..4 {
            next.behavior_transition[k][j] = counts[k][j] / total;
        }
    }
    let init_total: f64 = init.iter().sum();
    if init_total > 1e-10 {
        for k in 0..3 {
            next.initial[k] = init[k] / init_total;
        }
    }

    // duration: weighted mean / variance of log-duration
    for k in 0..3 {
        let (mut sw, mut s1) = (0.0, 0.0);
        for (obs, p) in corpus.iter().zip(post) {
            for (o, g) in obs.iter().zip(&p.gamma) {
                sw += g[k];
                s1 += g[k] * o.ln_d;
            }
        }
        if sw < 1e-10 {
            push_unique(warnings, format!("behavior {} has no expected occupancy", k + 1));
            continue;
        }
        let mu = s1 / sw;
        let mut s2 = 0.0;
        for (obs, p) in corpus.iter().zip(post) {
            for (o, g) in obs.iter().zip(&p.gamma) {
                s2 += g[k] * (o.ln_d - mu) * (o.ln_d - mu);
            }
        }
        next.mu_d[k] = mu;
        next.sigma_d[k] = (s2 / sw).sqrt().max(cfg.sigma_d_floor);
    }

    let gather = |k: usize, horizontal: bool| {
        let mut d = AxisData { w: Vec::new(), r2: Vec::new(), s2: Vec::new() };
        for (obs, p) in corpus.iter().zip(post) {
            for (o, g) in obs.iter().zip(&p.gamma) {
                let (r, s) = if horizontal { (o.dx, o.w) } else { (o.dy, o.h) };
                d.w.push(g[k]);
                d.r2.push(r * r);
                d.s2.push(s * s);
            }
        }
        d
    };
    let x = [gather(0, true), gather(1, true)];
    update_axis(&x, &mut next.beta_x, &mut next.sigma_x, cfg.sigma_floor);
    let y = [gather(0, false), gather(1, false)];
    update_axis(&y, &mut next.beta_y, &mut next.sigma_y, cfg.sigma_floor);
    next
}

fn push_unique(v: &mut Vec<String>, msg: String) {
    if !v.contains(&msg) {
        v.push(msg);
    }
}

/// Orders the two location spreads so the near-link one is not the smaller.
fn project_ordering(p: &mut IntentModelParams) {
    for s in [&mut p.sigma_x, &mut p.sigma_y] {
        if s[1] < s[0] {
            s.swap(0, 1);
        }
    }
}

/// Fraction of the corpus whose most probable link is the labeled target.
pub fn inference_accuracy(corpus: &[LabeledScanpath], params: &IntentModelParams) -> Result<f64> {
    let hits: Result<Vec<bool>> = corpus
        .iter()
        .map(|ex| Ok(forward_posterior(&ex.scanpath, &ex.layout, params)?.argmax() == ex.target))
        .collect();
    let hits = hits?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / corpus.len().max(1) as f64)
}

pub fn train_intent(
    corpus: &[LabeledScanpath],
    init: &IntentModelParams,
    cfg: &IntentTrainConfig,
) -> Result<(IntentModelParams, IntentTrainReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut params = init.clone();
    project_ordering(&mut params);
    params.validate()?;
    let data: Vec<Vec<Obs>> = corpus
        .iter()
        .map(|ex| prepare(ex, &params, cfg.window))
        .collect::<Result<_>>()?;

    let mut report = IntentTrainReport::default();
    let mut converged_at = None;
    for iter in 0..cfg.max_iters {
        let post: Vec<Posteriors> = data.par_iter().map(|obs| e_step(obs, &params)).collect();
        let ll: f64 = post.iter().map(|p| p.ll).sum();
        if let Some(&prev) = report.log_likelihoods.last() {
            if ((ll - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < cfg.tol {
                report.log_likelihoods.push(ll);
                converged_at = Some(iter);
                break;
            }
        }
        report.log_likelihoods.push(ll);
        params = m_step(&data, &post, &params, cfg, &mut report.warnings);
        log::debug!("intent EM iteration {iter}: log-likelihood {ll}");
    }
    match converged_at {
        Some(iter) => {
            report.iterations = iter;
            report.converged = true;
        }
        None => {
            report.iterations = cfg.max_iters;
            let ll = data.par_iter().map(|obs| e_step(obs, &params).ll).collect::<Vec<_>>().iter().sum();
            report.log_likelihoods.push(ll);
        }
    }

    if !cfg.p_switch_grid.is_empty() {
        let scores: Result<Vec<(f64, f64)>> = cfg
            .p_switch_grid
            .par_iter()
            .map(|&ps| {
                let mut candidate = params.clone();
                candidate.p_switch = ps;
                Ok((ps, inference_accuracy(corpus, &candidate)?))
            })
            .collect();
        let scores = scores?;
        let mut best = scores[0];
        for &s in &scores[1..] {
            if s.1 > best.1 {
                best = s;
            }
        }
        params.p_switch = best.0;
        report.p_switch_scores = scores;
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_maximizer_finds_interior_optimum() {
        let x = maximize_bounded(|x| -(x - 3.0) * (x - 3.0), 0.0, 10.0, 9.0);
        assert!((x - 3.0).abs() < 1e-6);
        // never returns something worse than the starting point
        let x = maximize_bounded(|x| if x == 5.0 { 100.0 } else { 0.0 }, 0.0, 10.0, 5.0);
        assert_eq!(x, 5.0);
    }

    #[test]
    fn ordering_projection_swaps() {
        let mut p = IntentModelParams::default();
        p.sigma_x = [50.0, 10.0];
        project_ordering(&mut p);
        assert_eq!(p.sigma_x, [10.0, 50.0]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            train_intent(&[], &IntentModelParams::default(), &IntentTrainConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }
}
