//! Real-time selection state machine.
//!
//! While browsing, gaze on one of the four task-bar buttons for 24 samples
//! (400 ms) activates it. Activating "Select" segments the gaze buffered since
//! the page was presented, infers the target posterior, assigns per-link dwell
//! times and enters the selection phase. There, link `m` is selected once
//! `N_m` of the most recent `ceil(1.5 N_m)` samples are assigned to it.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{assign_gaze, BoundingBox, LinkId, PageLayout, ASSIGN_THRESHOLD_PX};
use crate::intent::{forward_posterior, IntentPosterior};
use crate::params::ModelParams;
use crate::policy::{assign_dwells, DwellAssignment, PolicyParams, Quantization};
use crate::segmentation::{extract_fixations, viterbi_labels, GazeSample, Scanpath};
use crate::{DEFAULT_SCREEN, SAMPLE_PERIOD_MS};

/// Fixed button dwell: 400 ms at 60 Hz.
pub const BUTTON_DWELL_SAMPLES: u32 = 24;
pub const WINDOW_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Command {
    Back,
    Select,
    Cancel,
    Forward,
}

impl Command {
    pub const ALL: [Command; 4] = [Command::Back, Command::Select, Command::Cancel, Command::Forward];

    pub fn name(self) -> &'static str {
        match self {
            Command::Back => "BACK",
            Command::Select => "SELECT",
            Command::Cancel => "CANCEL",
            Command::Forward => "FORWARD",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButtonRegion {
    pub command: Command,
    pub bbox: BoundingBox,
}

/// Task bar on the right edge of the screen: Back, Select, Cancel, Forward from top to bottom.
pub fn default_task_bar(screen: (f64, f64)) -> Vec<ButtonRegion> {
    let (w, h) = screen;
    let left = w - 110.0;
    let height = (h - 200.0) / 4.0 - 40.0;
    Command::ALL
        .iter()
        .enumerate()
        .map(|(i, &command)| ButtonRegion {
            command,
            bbox: BoundingBox { left, top: 120.0 + i as f64 * (height + 40.0), width: 100.0, height },
        })
        .collect()
}

pub fn button_at(buttons: &[ButtonRegion], p: crate::geometry::Point) -> Option<Command> {
    buttons.iter().find(|b| b.bbox.contains(p)).map(|b| b.command)
}

/// Drops the trailing samples that rest on a task-bar button (the activation dwell).
pub fn strip_button_dwell<'a>(samples: &'a [GazeSample], buttons: &[ButtonRegion]) -> &'a [GazeSample] {
    let mut end = samples.len();
    while end > 0 && button_at(buttons, samples[end - 1].point).is_some() {
        end -= 1;
    }
    &samples[..end]
}

/// Window length for a dwell of `n` samples.
pub fn window_len(n: u32, factor: f64) -> usize {
    (factor * n as f64).ceil() as usize
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub buttons: Vec<ButtonRegion>,
    pub button_dwell_samples: u32,
    pub window_factor: f64,
    /// Require strictly consecutive samples on a button instead of the windowed rule.
    pub strict_button_dwell: bool,
    pub assign_threshold: f64,
    pub policy: PolicyParams,
    pub quantization: Quantization,
}

impl EngineConfig {
    pub fn button_history(&self) -> WindowedHistory<Command> {
        let n = self.button_dwell_samples;
        WindowedHistory::new(window_len(n, self.window_factor).max(n as usize))
    }

    /// Whether `command` is activated given the button history ending at the current sample.
    pub fn button_fires(&self, history: &WindowedHistory<Command>, command: Command) -> bool {
        let n = self.button_dwell_samples;
        if self.strict_button_dwell {
            history.trailing_run(command) >= n as usize
        } else {
            history.count_recent(command, window_len(n, self.window_factor)) >= n as usize
        }
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            buttons: default_task_bar(DEFAULT_SCREEN),
            button_dwell_samples: BUTTON_DWELL_SAMPLES,
            window_factor: WINDOW_FACTOR,
            strict_button_dwell: false,
            assign_threshold: ASSIGN_THRESHOLD_PX,
            policy: PolicyParams::uniform(500.0).expect("valid"),
            quantization: Quantization::PerSample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Browsing,
    Selecting,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineEvent {
    CommandActivated { command: Command, t: u64 },
    DwellsAssigned { dwells: DwellAssignment, posterior: IntentPosterior },
    /// First sample outside the Select button after it was activated.
    SelectReleased { t: u64 },
    LinkSelected { link: LinkId, t: u64, response_time_ms: Option<f64> },
    SelectionCancelled { link: Option<LinkId> },
}

/// Recent per-sample assignments, newest last.
#[derive(Debug, Clone)]
pub struct WindowedHistory<T> {
    items: VecDeque<Option<T>>,
    capacity: usize,
}

impl<T: PartialEq + Copy> WindowedHistory<T> {
    pub fn new(capacity: usize) -> Self {
        WindowedHistory { items: VecDeque::with_capacity(capacity), capacity: capacity.max(1) }
    }

    pub fn set_capacity(&mut self, capacity: usize) {
        self.capacity = capacity.max(1);
        while self.items.len() > self.capacity {
            self.items.pop_front();
        }
    }

    pub fn push(&mut self, item: Option<T>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    /// How many of the last `window` entries equal `target`.
    pub fn count_recent(&self, target: T, window: usize) -> usize {
        self.items.iter().rev().take(window).filter(|x| **x == Some(target)).count()
    }

    /// Length of the run of `target` at the newest end.
    pub fn trailing_run(&self, target: T) -> usize {
        self.items.iter().rev().take_while(|x| **x == Some(target)).count()
    }
}

/// Index of the first sample at which `link` has `n` of the last `window_len(n)`
/// assignments. Same rule as the engine, on a precomputed assignment sequence.
pub fn first_firing(assignments: &[Option<LinkId>], link: LinkId, n: u32, factor: f64) -> Option<usize> {
    let w = window_len(n, factor);
    let n = n as usize;
    let mut count = 0usize;
    for i in 0..assignments.len() {
        if assignments[i] == Some(link) {
            count += 1;
        }
        if i >= w && assignments[i - w] == Some(link) {
            count -= 1;
        }
        if assignments[i] == Some(link) && count >= n {
            return Some(i);
        }
    }
    None
}

/// One browsing session's selection state.
#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    models: Arc<ModelParams>,
    layout: PageLayout,
    phase: Phase,
    buffer: Vec<GazeSample>,
    buttons: WindowedHistory<Command>,
    links: WindowedHistory<LinkId>,
    active: Option<(DwellAssignment, IntentPosterior)>,
    last_t: Option<u64>,
    released_at: Option<u64>,
    last_selection: Option<LinkId>,
}

impl Engine {
    pub fn new(config: EngineConfig, models: Arc<ModelParams>, layout: PageLayout) -> Result<Self> {
        layout.validate()?;
        config.policy.validate()?;
        Ok(Engine {
            buttons: config.button_history(),
            links: WindowedHistory::new(1),
            config,
            models,
            layout,
            phase: Phase::Browsing,
            buffer: Vec::new(),
            active: None,
            last_t: None,
            released_at: None,
            last_selection: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn layout(&self) -> &PageLayout {
        &self.layout
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn dwells(&self) -> Option<&DwellAssignment> {
        self.active.as_ref().map(|(d, _)| d)
    }

    pub fn buffered(&self) -> &[GazeSample] {
        &self.buffer
    }

    /// Back to browsing with empty buffers. Sample ordering is still enforced.
    pub fn reset(&mut self) {
        self.phase = Phase::Browsing;
        self.buffer.clear();
        self.buttons.clear();
        self.links.clear();
        self.active = None;
        self.released_at = None;
        self.last_selection = None;
    }

    /// A new page was presented.
    pub fn set_layout(&mut self, layout: PageLayout) -> Result<()> {
        layout.validate()?;
        self.layout = layout;
        self.reset();
        Ok(())
    }

    /// Scanpath of the gaze buffered before the current Select activation.
    pub fn scanpath_of(&self, samples: &[GazeSample]) -> Result<Scanpath> {
        let samples = strip_button_dwell(samples, &self.config.buttons);
        if samples.len() < 3 {
            return Ok(Vec::new());
        }
        let labels = viterbi_labels(samples, &self.models.seg)?;
        extract_fixations(samples, &labels)
    }

    fn infer(&self) -> Result<IntentPosterior> {
        let scanpath = self.scanpath_of(&self.buffer)?;
        if scanpath.is_empty() {
            return Ok(IntentPosterior::uniform(self.layout.len()));
        }
        forward_posterior(&scanpath, &self.layout, &self.models.intent)
    }

    /// Enters the selection phase with a given assignment, skipping inference.
    pub fn start_selection(&mut self, dwells: DwellAssignment, posterior: IntentPosterior) -> Result<()> {
        if dwells.len() != self.layout.len() || posterior.len() != self.layout.len() {
            return Err(Error::InvalidArgument("dwell assignment does not match the layout".into()));
        }
        let longest = dwells.dwells.iter().map(|d| d.samples).max().unwrap_or(1);
        self.links.set_capacity(window_len(longest, self.config.window_factor));
        self.links.clear();
        self.active = Some((dwells, posterior));
        self.phase = Phase::Selecting;
        self.released_at = None;
        self.last_selection = None;
        Ok(())
    }

    fn begin_selection(&mut self) -> Result<EngineEvent> {
        let posterior = self.infer()?;
        let dwells = assign_dwells(&posterior, &self.config.policy, self.config.quantization)?;
        self.start_selection(dwells.clone(), posterior.clone())?;
        Ok(EngineEvent::DwellsAssigned { dwells, posterior })
    }

    /// Processes one gaze sample and returns the events it triggered.
    pub fn feed_gaze(&mut self, sample: GazeSample) -> Result<Vec<EngineEvent>> {
        if let Some(last) = self.last_t {
            if sample.t <= last {
                return Err(Error::OutOfOrderSample { last, got: sample.t });
            }
        }
        self.last_t = Some(sample.t);
        self.buffer.push(sample);
        let mut events = Vec::new();

        let button = button_at(&self.config.buttons, sample.point);
        if self.phase == Phase::Selecting && self.released_at.is_none() && button != Some(Command::Select) {
            self.released_at = Some(sample.t);
            events.push(EngineEvent::SelectReleased { t: sample.t });
        }

        self.buttons.push(button);
        if let Some(command) = button.filter(|&c| self.config.button_fires(&self.buttons, c)) {
            self.buttons.clear();
            // re-activating Select while selecting is ignored
            if !(command == Command::Select && self.phase == Phase::Selecting) {
                events.push(EngineEvent::CommandActivated { command, t: sample.t });
                match command {
                    Command::Select => events.push(self.begin_selection()?),
                    Command::Cancel => {
                        if let Ok(ev) = self.cancel() {
                            events.push(ev);
                        }
                    }
                    Command::Back | Command::Forward => self.reset(),
                }
                return Ok(events);
            }
        }

        if self.phase == Phase::Selecting {
            let assigned = assign_gaze(sample.point, &self.layout, self.config.assign_threshold);
            self.links.push(assigned);
            // only the link that just received this sample can newly satisfy the rule
            if let Some(link) = assigned {
                let (dwells, _) = self.active.as_ref().expect("selecting implies an assignment");
                let n = dwells.samples(link);
                if self.links.count_recent(link, window_len(n, self.config.window_factor)) >= n as usize {
                    let response_time_ms = self.released_at.map(|r| (sample.t - r) as f64 * SAMPLE_PERIOD_MS);
                    events.push(EngineEvent::LinkSelected { link, t: sample.t, response_time_ms });
                    self.phase = Phase::Browsing;
                    self.active = None;
                    self.links.clear();
                    self.buttons.clear();
                    self.buffer.clear();
                    self.last_selection = Some(link);
                }
            }
        }
        Ok(events)
    }

    /// Cancels the selection phase, or the selection that just fired.
    pub fn cancel(&mut self) -> Result<EngineEvent> {
        if self.phase == Phase::Selecting {
            self.phase = Phase::Browsing;
            self.active = None;
            self.links.clear();
            self.buffer.clear();
            return Ok(EngineEvent::SelectionCancelled { link: None });
        }
        match self.last_selection.take() {
            Some(link) => Ok(EngineEvent::SelectionCancelled { link: Some(link) }),
            None => Err(Error::NothingToCancel),
        }
    }
}

/// Time from the eyes leaving the activated Select button to the most recent selection.
pub fn response_time(events: &[EngineEvent]) -> Result<f64> {
    let (sel_pos, sel_t) = events
        .iter()
        .enumerate()
        .rev()
        .find_map(|(i, e)| match e {
            EngineEvent::LinkSelected { t, .. } => Some((i, *t)),
            _ => None,
        })
        .ok_or(Error::MissingEvent("LinkSelected"))?;
    let released = events[..sel_pos]
        .iter()
        .rev()
        .take_while(|e| !matches!(e, EngineEvent::CommandActivated { command: Command::Select, .. }))
        .find_map(|e| match e {
            EngineEvent::SelectReleased { t } => Some(*t),
            _ => None,
        })
        .ok_or(Error::MissingEvent("SelectReleased"))?;
    Ok((sel_t - released) as f64 * SAMPLE_PERIOD_MS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::intent::IntentPosterior;
    use crate::policy::LinkDwell;

    fn layout() -> PageLayout {
        PageLayout::from_boxes(
            DEFAULT_SCREEN,
            [
                BoundingBox::new(100.0, 100.0, 120.0, 18.0).unwrap(),
                BoundingBox::new(100.0, 300.0, 120.0, 18.0).unwrap(),
                BoundingBox::new(600.0, 500.0, 120.0, 18.0).unwrap(),
            ],
        )
        .unwrap()
    }

    fn engine() -> Engine {
        Engine::new(EngineConfig::default(), Arc::new(ModelParams::fixture()), layout()).unwrap()
    }

    fn center(cmd: Command) -> Point {
        let b = default_task_bar(DEFAULT_SCREEN).into_iter().find(|b| b.command == cmd).unwrap();
        b.bbox.center()
    }

    fn uniform_dwells(m: usize, n: u32) -> DwellAssignment {
        DwellAssignment {
            dwells: (1..=m as u32).map(|link| LinkDwell { link, samples: n, nominal_ms: n as f64 * SAMPLE_PERIOD_MS }).collect(),
        }
    }

    #[test]
    fn task_bar_buttons_are_disjoint_and_on_screen() {
        let bar = default_task_bar(DEFAULT_SCREEN);
        assert_eq!(bar.len(), 4);
        for (i, a) in bar.iter().enumerate() {
            assert!(a.bbox.right() <= DEFAULT_SCREEN.0 && a.bbox.bottom() <= DEFAULT_SCREEN.1);
            for b in &bar[i + 1..] {
                assert!(a.bbox.bottom() < b.bbox.top);
            }
        }
    }

    #[test]
    fn select_fires_on_24th_sample() {
        let mut e = engine();
        let p = center(Command::Select);
        for t in 0..23 {
            assert!(e.feed_gaze(GazeSample { t, point: p }).unwrap().is_empty());
        }
        let ev = e.feed_gaze(GazeSample { t: 23, point: p }).unwrap();
        assert_eq!(ev[0], EngineEvent::CommandActivated { command: Command::Select, t: 23 });
        assert!(matches!(ev[1], EngineEvent::DwellsAssigned { .. }));
        assert_eq!(e.phase(), Phase::Selecting);
    }

    #[test]
    fn strict_mode_requires_consecutive_samples() {
        let mut cfg = EngineConfig::default();
        cfg.strict_button_dwell = true;
        let mut e = Engine::new(cfg, Arc::new(ModelParams::fixture()), layout()).unwrap();
        let on = center(Command::Back);
        let mut t = 0;
        for _ in 0..20 {
            e.feed_gaze(GazeSample { t, point: on }).unwrap();
            t += 1;
        }
        e.feed_gaze(GazeSample { t, point: Point::new(500.0, 500.0) }).unwrap();
        t += 1;
        for i in 0..24 {
            let ev = e.feed_gaze(GazeSample { t, point: on }).unwrap();
            t += 1;
            assert_eq!(!ev.is_empty(), i == 23);
        }
    }

    #[test]
    fn window_rule_example() {
        let mut e = engine();
        e.start_selection(uniform_dwells(3, 6), IntentPosterior::uniform(3)).unwrap();
        let on = Point::new(150.0, 305.0);
        let off = Point::new(900.0, 900.0);
        let seq = [on, on, off, on, on, off, on, on];
        for (i, p) in seq.iter().enumerate() {
            let ev = e.feed_gaze(GazeSample { t: i as u64, point: *p }).unwrap();
            let selected = ev.iter().any(|e| matches!(e, EngineEvent::LinkSelected { link: 2, .. }));
            assert_eq!(selected, i == 7, "sample {i}");
        }
    }

    #[test]
    fn five_of_nine_never_fires() {
        let mut e = engine();
        e.start_selection(uniform_dwells(3, 6), IntentPosterior::uniform(3)).unwrap();
        let on = Point::new(150.0, 305.0);
        let off = Point::new(900.0, 900.0);
        for t in 0..90u64 {
            let p = if t % 9 < 5 { on } else { off };
            let ev = e.feed_gaze(GazeSample { t, point: p }).unwrap();
            assert!(!ev.iter().any(|e| matches!(e, EngineEvent::LinkSelected { .. })));
        }
    }

    #[test]
    fn single_sample_dwell_fires_immediately() {
        let mut e = engine();
        let mut d = uniform_dwells(3, 10);
        d.dwells[2].samples = 1;
        e.start_selection(d, IntentPosterior::uniform(3)).unwrap();
        let ev = e.feed_gaze(GazeSample { t: 0, point: Point::new(650.0, 505.0) }).unwrap();
        assert!(matches!(ev.as_slice(), [EngineEvent::SelectReleased { .. }, EngineEvent::LinkSelected { link: 3, .. }]));
    }

    #[test]
    fn out_of_order_samples_are_rejected() {
        let mut e = engine();
        e.feed_gaze(GazeSample::new(5, 0.0, 0.0)).unwrap();
        assert!(matches!(e.feed_gaze(GazeSample::new(5, 0.0, 0.0)), Err(Error::OutOfOrderSample { last: 5, got: 5 })));
    }

    #[test]
    fn cancel_paths() {
        let mut e = engine();
        assert!(matches!(e.cancel(), Err(Error::NothingToCancel)));
        e.start_selection(uniform_dwells(3, 2), IntentPosterior::uniform(3)).unwrap();
        assert_eq!(e.cancel().unwrap(), EngineEvent::SelectionCancelled { link: None });
        assert_eq!(e.phase(), Phase::Browsing);
        assert!(e.dwells().is_none());

        e.start_selection(uniform_dwells(3, 2), IntentPosterior::uniform(3)).unwrap();
        let on = Point::new(150.0, 105.0);
        e.feed_gaze(GazeSample { t: 0, point: on }).unwrap();
        e.feed_gaze(GazeSample { t: 1, point: on }).unwrap();
        assert_eq!(e.cancel().unwrap(), EngineEvent::SelectionCancelled { link: Some(1) });
        assert!(e.cancel().is_err());
    }

    #[test]
    fn response_time_from_events() {
        let ev = vec![
            EngineEvent::CommandActivated { command: Command::Select, t: 90 },
            EngineEvent::SelectReleased { t: 100 },
            EngineEvent::LinkSelected { link: 1, t: 130, response_time_ms: None },
        ];
        assert!((response_time(&ev).unwrap() - 30.0 * SAMPLE_PERIOD_MS).abs() < 1e-9);
        let ev0 = vec![
            EngineEvent::SelectReleased { t: 100 },
            EngineEvent::LinkSelected { link: 1, t: 100, response_time_ms: None },
        ];
        assert_eq!(response_time(&ev0).unwrap(), 0.0);
        assert!(matches!(response_time(&ev[..2]), Err(Error::MissingEvent(_))));
    }

    #[test]
    fn first_firing_matches_example() {
        let s = [Some(2), Some(2), None, Some(2), Some(2), Some(1), Some(2), Some(2)];
        assert_eq!(first_firing(&s, 2, 6, 1.5), Some(7));
        assert_eq!(first_firing(&s, 1, 1, 1.5), Some(5));
        assert_eq!(first_firing(&s, 2, 7, 1.5), None);
    }
}
