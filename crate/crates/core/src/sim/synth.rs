use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::TrialRecord;
use crate::engine::{button_at, default_task_bar, ButtonRegion, Command};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, LinkId, PageLayout, Point};
use crate::intent::sample_scanpath;
use crate::params::ModelParams;
use crate::segmentation::GazeSample;
use crate::SAMPLE_PERIOD_MS;

/// Gaze after the Select activation. Not drawn from the inference model.
#[derive(Debug, Clone, PartialEq)]
pub struct PostSelectNoise {
    /// Standard deviation of fixation jitter (px).
    pub jitter_px: f64,
    /// Probability of a glance at another link before the target.
    pub distractor_rate: f64,
    /// Inclusive range of glance lengths (samples).
    pub distractor_samples: (u32, u32),
    /// Saccade samples between Select, glances and the target.
    pub transit_samples: u32,
    /// How long the gaze rests on the target (samples).
    pub dwell_samples: u32,
}

impl Default for PostSelectNoise {
    fn default() -> Self {
        PostSelectNoise {
            jitter_px: 5.0,
            distractor_rate: 0.35,
            distractor_samples: (3, 20),
            transit_samples: 2,
            dwell_samples: 90,
        }
    }
}

impl PostSelectNoise {
    pub fn noiseless() -> Self {
        PostSelectNoise { jitter_px: 0.0, distractor_rate: 0.0, transit_samples: 0, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub screen: (f64, f64),
    pub lines: usize,
    pub slots_per_line: usize,
    /// Probability that a slot holds a link.
    pub link_fill: f64,
    pub max_fixations: usize,
    /// Fraction of pre-select samples replaced by a uniform outlier.
    pub outlier_rate: f64,
    /// Inclusive range of saccade transit samples between fixations.
    pub saccade_samples: (u32, u32),
    pub post: PostSelectNoise,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_trials: 500,
            seed: 1,
            screen: crate::DEFAULT_SCREEN,
            lines: 30,
            slots_per_line: 5,
            link_fill: 0.6,
            max_fixations: 20,
            outlier_rate: 0.01,
            saccade_samples: (2, 4),
            post: PostSelectNoise::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_trials == 0 {
            return bad("n_trials must be positive");
        }
        if self.lines == 0 || self.slots_per_line == 0 {
            return bad("layout needs at least one line and one slot");
        }
        if !(0.0..=1.0).contains(&self.link_fill) || self.link_fill == 0.0 {
            return bad("link_fill must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) || !(0.0..=1.0).contains(&self.post.distractor_rate) {
            return bad("rates must be in [0, 1]");
        }
        if self.saccade_samples.0 > self.saccade_samples.1
            || self.post.distractor_samples.0 > self.post.distractor_samples.1
            || self.post.distractor_samples.0 == 0
        {
            return bad("sample ranges must be non-empty");
        }
        if self.post.jitter_px < 0.0 || !self.post.jitter_px.is_finite() {
            return bad("jitter must be non-negative");
        }
        if self.post.dwell_samples == 0 || self.max_fixations == 0 {
            return bad("dwell and fixation counts must be positive");
        }
        if self.screen.0 < 400.0 || self.screen.1 < 200.0 {
            return bad("screen too small for the task bar");
        }
        Ok(())
    }

    fn content_width(&self) -> f64 {
        self.screen.0 - 180.0
    }

    /// Browsing fixations stay left of this so the task bar is never dwelled on by accident.
    fn bar_margin(&self) -> f64 {
        self.screen.0 - 150.0
    }
}

fn random_layout<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> PageLayout {
    let (_, h) = cfg.screen;
    let line_h = (h - 64.0) / cfg.lines as f64;
    let slot_w = cfg.content_width() / cfg.slots_per_line as f64;
    let mut boxes = Vec::new();
    for line in 0..cfg.lines {
        let top = 32.0 + line as f64 * line_h + (line_h - 18.0).max(0.0) / 2.0;
        for slot in 0..cfg.slots_per_line {
            if rng.gen::<f64>() >= cfg.link_fill {
                continue;
            }
            let width = rng.gen_range(0.3..0.9) * slot_w;
            let left = 20.0 + slot as f64 * slot_w + rng.gen_range(0.0..(slot_w - width).max(1.0));
            boxes.push(BoundingBox { left, top, width, height: 18.0_f64.min(line_h) });
        }
    }
    if boxes.is_empty() {
        boxes.push(BoundingBox { left: 20.0, top: 32.0, width: slot_w * 0.5, height: 18.0_f64.min(line_h) });
    }
    PageLayout::from_boxes(cfg.screen, boxes).expect("generated boxes are valid")
}

struct Emitter<'a, R> {
    out: Vec<GazeSample>,
    t: u64,
    rng: &'a mut R,
    screen: (f64, f64),
}

impl<R: Rng> Emitter<'_, R> {
    fn push(&mut self, p: Point) {
        let p = Point::new(p.x.clamp(0.0, self.screen.0), p.y.clamp(0.0, self.screen.1));
        self.out.push(GazeSample { t: self.t, point: p });
        self.t += 1;
    }

    fn jittered(&mut self, c: Point, sd: f64) -> Point {
        if sd == 0.0 {
            return c;
        }
        let n = Normal::new(0.0, sd).expect("finite sd");
        Point::new(c.x + n.sample(self.rng), c.y + n.sample(self.rng))
    }

    fn transit(&mut self, from: Point, to: Point, k: u32, avoid: &[ButtonRegion]) {
        for i in 1..=k {
            let f = i as f64 / (k + 1) as f64;
            let p = Point::new(from.x + f * (to.x - from.x), from.y + f * (to.y - from.y));
            if button_at(avoid, p).is_none() {
                self.push(p);
            }
        }
    }
}

fn fixation_sd(params: &ModelParams) -> f64 {
    let s = params.seg.sigma_fixation;
    ((s[0] + s[1]) / 2.0).sqrt()
}

fn select_box(buttons: &[ButtonRegion]) -> BoundingBox {
    buttons.iter().find(|b| b.command == Command::Select).expect("task bar has Select").bbox
}

fn point_in(b: &BoundingBox, p: Point, margin: f64) -> Point {
    Point::new(
        p.x.clamp(b.left + margin, b.right() - margin),
        p.y.clamp(b.top + margin, b.bottom() - margin),
    )
}

fn one_trial<R: Rng>(cfg: &SynthConfig, params: &ModelParams, buttons: &[ButtonRegion], rng: &mut R, index: usize) -> TrialRecord {
    let layout = random_layout(cfg, rng);
    let mut path = sample_scanpath(&params.intent, &layout, cfg.max_fixations, rng);
    // keep browsing fixations off the task bar so no command fires before Select
    for f in path.fixations.iter_mut() {
        while f.x >= cfg.bar_margin() {
            f.x = rng.gen_range(0.0..cfg.content_width());
        }
    }
    let target = path.final_target();
    let sd = fixation_sd(params);
    let select = select_box(buttons);

    let mut em = Emitter { out: Vec::new(), t: 0, rng, screen: cfg.screen };
    let mut prev: Option<Point> = None;
    for f in &path.fixations {
        let c = Point::new(f.x, f.y);
        if let Some(p) = prev {
            let k = em.rng.gen_range(cfg.saccade_samples.0..=cfg.saccade_samples.1);
            em.transit(p, c, k, buttons);
        }
        let n = ((f.duration_ms / SAMPLE_PERIOD_MS).round() as u32).max(1);
        for _ in 0..n {
            let p = if em.rng.gen::<f64>() < cfg.outlier_rate {
                Point::new(em.rng.gen_range(0.0..cfg.content_width()), em.rng.gen_range(0.0..cfg.screen.1))
            } else {
                em.jittered(c, sd)
            };
            em.push(p);
        }
        prev = Some(c);
    }
    let sc = select.center();
    if let Some(p) = prev {
        let k = em.rng.gen_range(cfg.saccade_samples.0..=cfg.saccade_samples.1);
        em.transit(p, sc, k, buttons);
    }
    for _ in 0..crate::engine::BUTTON_DWELL_SAMPLES {
        let p = em.jittered(sc, sd);
        em.push(point_in(&select, p, 1.0));
    }
    let pre_select = std::mem::take(&mut em.out);
    em.t += em.rng.gen_range(1..=4);

    let noise = &cfg.post;
    let mut from = sc;
    if layout.len() > 1 && em.rng.gen::<f64>() < noise.distractor_rate {
        let other = em.rng.gen_range(1..layout.len() as LinkId);
        let other = if other >= target { other + 1 } else { other };
        let c = layout.link(other).expect("in layout").bbox.center();
        em.transit(from, c, noise.transit_samples, buttons);
        let k = em.rng.gen_range(noise.distractor_samples.0..=noise.distractor_samples.1);
        for _ in 0..k {
            let p = em.jittered(c, noise.jitter_px);
            em.push(p);
        }
        from = c;
    }
    let tc = layout.link(target).expect("target in layout").bbox.center();
    em.transit(from, tc, noise.transit_samples, buttons);
    for _ in 0..noise.dwell_samples {
        let p = em.jittered(tc, noise.jitter_px);
        em.push(p);
    }
    let mut post_select = std::mem::take(&mut em.out);
    // the stream starts once the eyes are off Select
    while post_select.first().map_or(false, |s| select.contains(s.point)) {
        post_select.remove(0);
    }
    let mut meta = serde_json::Map::new();
    meta.insert("trial".into(), index.into());
    meta.insert("source".into(), "synthetic".into());
    TrialRecord { layout, pre_select, post_select, true_target: target, meta }
}

/// Deterministic synthetic corpus: each trial gets its own stream derived from the seed.
pub fn synth_trials(cfg: &SynthConfig, params: &ModelParams) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    params.intent.validate()?;
    let buttons = default_task_bar(cfg.screen);
    Ok((0..cfg.n_trials)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            one_trial(cfg, params, &buttons, &mut rng, i)
        })
        .collect())
}
