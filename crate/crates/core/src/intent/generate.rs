use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use super::{BehaviorState, IntentModelParams, TERMINAL};
use crate::geometry::{LinkId, PageLayout};
use crate::segmentation::FixationEvent;

/// A scanpath drawn from the factorial model, with its hidden states.
#[derive(Debug, Clone)]
pub struct SampledScanpath {
    pub fixations: Vec<FixationEvent>,
    pub targets: Vec<LinkId>,
    pub behaviors: Vec<BehaviorState>,
}

impl SampledScanpath {
    /// Target at the moment the chain entered the terminal state.
    pub fn final_target(&self) -> LinkId {
        *self.targets.last().expect("at least one fixation")
    }
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        acc += w;
        if u < acc {
            return i;
        }
    }
    last
}

/// Runs the generative process until the behavior chain terminates or
/// `max_len` fixations have been emitted. Locations are clamped to the screen.
pub fn sample_scanpath<R: Rng + ?Sized>(
    params: &IntentModelParams,
    layout: &PageLayout,
    max_len: usize,
    rng: &mut R,
) -> SampledScanpath {
    let m = layout.len();
    let mut target = rng.gen_range(1..=m as LinkId);
    let mut behavior = draw_index(&params.initial, rng);
    let mut out = SampledScanpath { fixations: Vec::new(), targets: Vec::new(), behaviors: Vec::new() };
    loop {
        let link = layout.link(target).expect("target in layout");
        let (x, y) = match behavior {
            0 | 1 => {
                let c = link.bbox.center();
                let (vx, vy) = params.location_variance(behavior, link.bbox.width, link.bbox.height);
                let x = Normal::new(c.x, vx.sqrt()).expect("finite").sample(rng);
                let y = Normal::new(c.y, vy.sqrt()).expect("finite").sample(rng);
                (x.clamp(0.0, layout.screen_width()), y.clamp(0.0, layout.screen_height()))
            }
            _ => (rng.gen_range(0.0..layout.screen_width()), rng.gen_range(0.0..layout.screen_height())),
        };
        let d = LogNormal::new(params.mu_d[behavior], params.sigma_d[behavior]).expect("finite").sample(rng);
        out.fixations.push(FixationEvent::new(x, y, params.duration_unit.to_ms(d)));
        out.targets.push(target);
        out.behaviors.push(BehaviorState::EMITTING[behavior]);
        if out.fixations.len() >= max_len {
            break;
        }
        let next = draw_index(&params.behavior_transition[behavior], rng);
        if next == TERMINAL {
            break;
        }
        behavior = next;
        if m > 1 && rng.gen::<f64>() < params.p_switch {
            let other = rng.gen_range(1..m as LinkId);
            target = if other >= target { other + 1 } else { other };
        }
    }
    out
}
