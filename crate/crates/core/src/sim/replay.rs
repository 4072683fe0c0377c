use std::sync::Arc;

use rayon::prelude::*;

use super::{PolicyEvalResult, TrialRecord};
use crate::engine::{button_at, strip_button_dwell, window_len, Command, Engine, EngineConfig, EngineEvent, Phase};
use crate::error::{Error, Result};
use crate::geometry::{assign_gaze, LinkId};
use crate::intent::{forward_posterior, IntentPosterior};
use crate::params::ModelParams;
use crate::policy::{quantize_dwell, PolicyParams, Quantization};
use crate::segmentation::{extract_fixations, viterbi_labels, GazeSample, Scanpath};

/// Scanpath of the browsing gaze, without the Select dwell at its end.
pub fn pre_select_scanpath(trial: &TrialRecord, models: &ModelParams, cfg: &EngineConfig) -> Result<Scanpath> {
    let samples = strip_button_dwell(&trial.pre_select, &cfg.buttons);
    if samples.len() < 3 {
        return Ok(Vec::new());
    }
    let labels = viterbi_labels(samples, &models.seg)?;
    extract_fixations(samples, &labels)
}

/// A link that received at least one post-select sample.
#[derive(Debug, Clone)]
struct Candidate {
    link: LinkId,
    /// Sample index at which the link fires for dwell `n`, stored at `n - 1`.
    fire: Vec<Option<usize>>,
}

/// Everything about a trial that does not depend on the policy.
#[derive(Debug, Clone)]
pub struct PreparedTrial {
    pub posterior: IntentPosterior,
    pub true_target: LinkId,
    post_t: Vec<u64>,
    release: usize,
    /// First sample at which a non-Select command ends the selection phase.
    abort_at: Option<usize>,
    candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialOutcome {
    Selected { link: LinkId, response_samples: u64 },
    Timeout,
}

fn fire_table(positions: &[usize], factor: f64) -> Vec<Option<usize>> {
    (1..=positions.len() as u32)
        .map(|n| {
            let w = window_len(n, factor);
            let k = n as usize;
            (k - 1..positions.len()).find(|&j| positions[j] - positions[j + 1 - k] < w).map(|j| positions[j])
        })
        .collect()
}

fn abort_index(post: &[GazeSample], cfg: &EngineConfig) -> Option<usize> {
    let mut hist = cfg.button_history();
    for (i, s) in post.iter().enumerate() {
        let b = button_at(&cfg.buttons, s.point);
        hist.push(b);
        if let Some(c) = b.filter(|&c| cfg.button_fires(&hist, c)) {
            hist.clear();
            if c != Command::Select {
                return Some(i);
            }
        }
    }
    None
}

pub fn prepare_trial(trial: &TrialRecord, models: &ModelParams, cfg: &EngineConfig) -> Result<PreparedTrial> {
    trial.validate()?;
    let scanpath = pre_select_scanpath(trial, models, cfg)?;
    let posterior = if scanpath.is_empty() {
        IntentPosterior::uniform(trial.layout.len())
    } else {
        forward_posterior(&scanpath, &trial.layout, &models.intent)?
    };
    let select = cfg.buttons.iter().find(|b| b.command == Command::Select).map(|b| b.bbox);
    let release = trial
        .post_select
        .iter()
        .position(|s| select.map_or(true, |b| !b.contains(s.point)))
        .unwrap_or(0);
    let mut positions: Vec<(LinkId, Vec<usize>)> = Vec::new();
    for (i, s) in trial.post_select.iter().enumerate() {
        if let Some(link) = assign_gaze(s.point, &trial.layout, cfg.assign_threshold) {
            match positions.iter_mut().find(|(l, _)| *l == link) {
                Some((_, v)) => v.push(i),
                None => positions.push((link, vec![i])),
            }
        }
    }
    positions.sort_by_key(|(l, _)| *l);
    let candidates = positions
        .into_iter()
        .map(|(link, pos)| Candidate { link, fire: fire_table(&pos, cfg.window_factor) })
        .collect();
    Ok(PreparedTrial {
        posterior,
        true_target: trial.true_target,
        post_t: trial.post_select.iter().map(|s| s.t).collect(),
        release,
        abort_at: abort_index(&trial.post_select, cfg),
        candidates,
    })
}

/// Runs segmentation and inference once per trial.
pub fn prepare_trials(trials: &[TrialRecord], models: &ModelParams, cfg: &EngineConfig) -> Result<Vec<PreparedTrial>> {
    if trials.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    trials.par_iter().map(|t| prepare_trial(t, models, cfg)).collect()
}

impl PreparedTrial {
    /// Same posterior-free trial with a different posterior; used to check policy invariances.
    pub fn with_posterior(&self, posterior: IntentPosterior) -> Self {
        PreparedTrial { posterior, ..self.clone() }
    }

    pub fn outcome(&self, policy: &PolicyParams, mode: Quantization) -> Result<TrialOutcome> {
        let limit = self.abort_at.unwrap_or(usize::MAX);
        let mut best: Option<(usize, u32, LinkId)> = None;
        for c in &self.candidates {
            let n = quantize_dwell(policy.nominal_dwell(self.posterior.prob(c.link)), mode)?;
            let Some(Some(at)) = c.fire.get(n as usize - 1) else { continue };
            if *at < limit && best.map_or(true, |b| (*at, n, c.link) < b) {
                best = Some((*at, n, c.link));
            }
        }
        Ok(match best {
            Some((at, _, link)) => TrialOutcome::Selected {
                link,
                response_samples: self.post_t[at].saturating_sub(self.post_t[self.release]),
            },
            None => TrialOutcome::Timeout,
        })
    }
}

pub fn aggregate(policy: PolicyParams, outcomes: &[(TrialOutcome, LinkId)]) -> PolicyEvalResult {
    let (mut errors, mut timeouts, mut sum, mut sq) = (0usize, 0usize, 0u64, 0u128);
    for (o, target) in outcomes {
        match *o {
            TrialOutcome::Timeout => {
                errors += 1;
                timeouts += 1;
            }
            TrialOutcome::Selected { link, response_samples } => {
                if link != *target {
                    errors += 1;
                }
                sum += response_samples;
                sq += (response_samples as u128) * (response_samples as u128);
            }
        }
    }
    PolicyEvalResult::from_counts(policy, outcomes.len(), errors, timeouts, sum, sq)
}

pub fn evaluate_policy(prepared: &[PreparedTrial], policy: &PolicyParams, mode: Quantization) -> Result<PolicyEvalResult> {
    if prepared.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    policy.validate()?;
    let outcomes = prepared
        .iter()
        .map(|p| Ok((p.outcome(policy, mode)?, p.true_target)))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(*policy, &outcomes))
}

/// Prepares the trials and evaluates one policy.
pub fn simulate_policy(
    trials: &[TrialRecord],
    policy: &PolicyParams,
    models: &ModelParams,
    cfg: &EngineConfig,
) -> Result<PolicyEvalResult> {
    let prepared = prepare_trials(trials, models, cfg)?;
    evaluate_policy(&prepared, policy, cfg.quantization)
}

/// Feeds a trial through a live engine sample by sample.
pub fn replay_with_engine(trial: &TrialRecord, models: Arc<ModelParams>, cfg: &EngineConfig) -> Result<(TrialOutcome, Vec<EngineEvent>)> {
    trial.validate()?;
    let mut engine = Engine::new(cfg.clone(), models, trial.layout.clone())?;
    let mut log = Vec::new();
    for s in &trial.pre_select {
        log.extend(engine.feed_gaze(*s)?);
    }
    if engine.phase() != Phase::Selecting {
        return Err(Error::MissingEvent("Select activation at the end of pre_select"));
    }
    let first = trial.post_select.first().map(|s| s.t);
    for s in &trial.post_select {
        let events = engine.feed_gaze(*s)?;
        let selected = events.iter().find_map(|e| match e {
            EngineEvent::LinkSelected { link, t, .. } => Some((*link, *t)),
            _ => None,
        });
        log.extend(events);
        if let Some((link, t)) = selected {
            let released = log
                .iter()
                .find_map(|e| match e {
                    EngineEvent::SelectReleased { t } => Some(*t),
                    _ => None,
                })
                .or(first)
                .unwrap_or(t);
            return Ok((TrialOutcome::Selected { link, response_samples: t - released }, log));
        }
        if engine.phase() != Phase::Selecting {
            break;
        }
    }
    Ok((TrialOutcome::Timeout, log))
}
