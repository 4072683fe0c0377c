//! Slow, obviously-correct reference implementations used by the tests.
#![allow(dead_code)]

use gazedwell::intent::{BehaviorState, IntentModelParams};
use gazedwell::segmentation::{emission_logdensity, is_allowed_triple, LabelState, SegModelParams};
use gazedwell::sim::PolicyEvalResult;
use gazedwell::{BoundingBox, FixationEvent, GazeSample, LinkId, PageLayout, Point, SAMPLE_PERIOD_MS};

/// Minimum over a 1 px grid covering the box of the max-norm distance.
pub fn box_distance_grid(g: Point, b: &BoundingBox) -> f64 {
    let mut best = f64::INFINITY;
    let nx = b.width.floor() as i64;
    let ny = b.height.floor() as i64;
    for i in 0..=nx {
        let x = (b.left + i as f64).min(b.left + b.width);
        for j in 0..=ny {
            let y = (b.top + j as f64).min(b.top + b.height);
            best = best.min((g.x - x).abs().max((g.y - y).abs()));
        }
    }
    best
}

fn allowed_pair(a: LabelState, b: LabelState) -> bool {
    use LabelState::*;
    !matches!((a, b), (Outlier, Saccade) | (Saccade, Outlier) | (Outlier, Outlier))
}

/// Joint log-probability of one label sequence; `None` if it uses a forbidden transition.
pub fn label_sequence_logprob(labels: &[LabelState], trace: &[GazeSample], params: &SegModelParams) -> Option<f64> {
    if labels.windows(2).any(|w| !allowed_pair(w[0], w[1])) {
        return None;
    }
    let mut acc = params.initial_log_density();
    for t in 2..labels.len() {
        let (l2, l1, l0) = (labels[t - 2], labels[t - 1], labels[t]);
        assert!(is_allowed_triple(l2, l1, l0));
        let p = params.p(l2, l1, l0);
        if p == 0.0 {
            return None;
        }
        let e = emission_logdensity((l2, l1, l0), trace[t - 2].point, trace[t - 1].point, trace[t].point, params)
            .expect("allowed triple");
        acc += p.ln() + e;
    }
    Some(acc)
}

/// Best label sequence by trying all of them.
pub fn enumerate_best_labels(trace: &[GazeSample], params: &SegModelParams) -> (Vec<LabelState>, f64) {
    let n = trace.len();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let total = 3usize.pow(n as u32);
    let mut labels = vec![LabelState::Fixation; n];
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = LabelState::ALL[c % 3];
            c /= 3;
        }
        if let Some(lp) = label_sequence_logprob(&labels, trace, params) {
            if lp > best.1 {
                best = (labels.clone(), lp);
            }
        }
    }
    best
}

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean) * (x - mean) / (2.0 * var)
}

/// Emission probability of a fixation, written out directly.
pub fn fixation_emission(f: &FixationEvent, link: LinkId, k: usize, layout: &PageLayout, p: &IntentModelParams) -> f64 {
    let d = f.duration_ms / SAMPLE_PERIOD_MS;
    let ld = d.ln();
    let dur = (-(ld - p.mu_d[k]).powi(2) / (2.0 * p.sigma_d[k] * p.sigma_d[k])).exp()
        / (d * p.sigma_d[k] * (2.0 * std::f64::consts::PI).sqrt());
    let loc = if k == 2 {
        1.0 / (layout.screen[0] * layout.screen[1])
    } else {
        let b = layout.link(link).unwrap().bbox;
        let (cx, cy) = (b.left + b.width / 2.0, b.top + b.height / 2.0);
        let vx = (p.beta_x[k] * b.width).powi(2) + p.sigma_x[k].powi(2);
        let vy = (p.beta_y[k] * b.height).powi(2) + p.sigma_y[k].powi(2);
        (normal_logpdf(f.x, cx, vx) + normal_logpdf(f.y, cy, vy)).exp()
    };
    loc * dur
}

/// Posterior of the final target by summing every joint (target, behavior) sequence,
/// weighting by the probability of terminating after the last fixation.
pub fn enumerate_posterior(fix: &[FixationEvent], layout: &PageLayout, p: &IntentModelParams) -> Vec<f64> {
    let m = layout.len();
    let t_len = fix.len();
    let states = m * 3;
    let total = states.pow(t_len as u32);
    let mut mass = vec![0.0f64; m];
    let trans = |a: usize, b: usize| -> f64 {
        if m == 1 {
            1.0
        } else if a == b {
            1.0 - p.p_switch
        } else {
            p.p_switch / (m - 1) as f64
        }
    };
    for code in 0..total {
        let mut c = code;
        let mut seq = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            seq.push((c % states / 3, c % 3));
            c /= states;
        }
        let (i0, k0) = seq[0];
        let mut w = p.initial[k0] / m as f64 * fixation_emission(&fix[0], i0 as LinkId + 1, k0, layout, p);
        for t in 1..t_len {
            let (ip, kp) = seq[t - 1];
            let (i, k) = seq[t];
            w *= p.behavior_transition[kp][k] * trans(ip, i) * fixation_emission(&fix[t], i as LinkId + 1, k, layout, p);
        }
        let (il, kl) = seq[t_len - 1];
        w *= p.behavior_transition[kl][BehaviorState::Terminal.index()];
        mass[il] += w;
    }
    let z: f64 = mass.iter().sum();
    mass.iter().map(|x| x / z).collect()
}

/// First sample at which some link has `n[link]` of the last `ceil(1.5 n)` assignments.
/// Ties at the same sample go to the smaller `n`, then the lower id.
pub fn sliding_window_selection(assign: &[Option<LinkId>], n: &[u32]) -> Option<(usize, LinkId)> {
    for i in 0..assign.len() {
        let mut hits = Vec::new();
        for (idx, &need) in n.iter().enumerate() {
            let link = idx as LinkId + 1;
            let w = (1.5 * need as f64).ceil() as usize;
            let lo = (i + 1).saturating_sub(w);
            let count = assign[lo..=i].iter().filter(|a| **a == Some(link)).count();
            if count >= need as usize {
                hits.push((need, link));
            }
        }
        if let Some(&(_, link)) = hits.iter().min() {
            return Some((i, link));
        }
    }
    None
}

/// Rows no other row beats in both error rate and response time.
pub fn pareto_pairwise(rows: &[PolicyEvalResult]) -> Vec<PolicyEvalResult> {
    let ok: Vec<&PolicyEvalResult> = rows.iter().filter(|r| !r.mean_response_time_ms.is_nan()).collect();
    ok.iter()
        .filter(|a| {
            !ok.iter().any(|b| {
                b.error_rate <= a.error_rate
                    && b.mean_response_time_ms <= a.mean_response_time_ms
                    && (b.error_rate < a.error_rate || b.mean_response_time_ms < a.mean_response_time_ms)
            })
        })
        .map(|r| (*r).clone())
        .collect()
}

/// Valid (t_max, t_min, t_break) triples times probability steps, by direct loops.
pub fn grid_count(n_times: usize, n_probs: usize) -> usize {
    let mut n = 0;
    for t_max in 0..n_times {
        for t_min in 0..n_times {
            for t_break in 0..n_times {
                if t_min <= t_break && t_break <= t_max {
                    n += 1;
                }
            }
        }
    }
    n * n_probs
}
