//! Flat key-value serialization of model parameters.
//!
//! ```text
//! format = gdw-params/1
//! duration_unit = samples
//! seg.trans.ff = 0.9 0.08 0.02
//! intent.behavior.1 = 0.57 0.00 0.08 0.35
//! ```
//!
//! Each `seg.trans.<l2><l1>` row lists `p(f) p(s) p(o)`; each
//! `intent.behavior.<k>` row lists the transition to behaviors 1, 2, 3 and
//! the terminal state. A file may carry only one of the two sections; the
//! missing one falls back to its default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::IntentModelParams;
use crate::segmentation::{LabelState, SegModelParams, PAIRS};
use crate::SAMPLE_PERIOD_MS;

pub const PARAMS_FORMAT: &str = "gdw-params/1";

/// Default model parameters shipped with the crate.
pub const FIXTURE_TEXT: &str = include_str!("../../../fixtures/table2-3.params");

/// Unit in which fixation durations enter the lognormal duration density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationUnit {
    /// Gaze samples of [`SAMPLE_PERIOD_MS`].
    #[default]
    Samples,
    #[serde(rename = "ms")]
    Milliseconds,
}

impl DurationUnit {
    pub fn from_ms(self, ms: f64) -> f64 {
        match self {
            DurationUnit::Samples => ms / SAMPLE_PERIOD_MS,
            DurationUnit::Milliseconds => ms,
        }
    }

    pub fn to_ms(self, value: f64) -> f64 {
        match self {
            DurationUnit::Samples => value * SAMPLE_PERIOD_MS,
            DurationUnit::Milliseconds => value,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DurationUnit::Samples => "samples",
            DurationUnit::Milliseconds => "ms",
        }
    }
}

impl FromStr for DurationUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "samples" => Ok(DurationUnit::Samples),
            "ms" => Ok(DurationUnit::Milliseconds),
            other => Err(Error::InvalidArgument(format!("unknown duration unit '{other}'"))),
        }
    }
}

/// Both stages' parameters, as stored in one parameter file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    pub seg: SegModelParams,
    pub intent: IntentModelParams,
}

impl ModelParams {
    pub fn fixture() -> Self {
        Self::parse(FIXTURE_TEXT, "table2-3.params").expect("shipped fixture parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format = {PARAMS_FORMAT}");
        let _ = writeln!(s, "duration_unit = {}", self.intent.duration_unit.as_str());
        let seg = &self.seg;
        let _ = writeln!(s, "seg.screen = {}", join(&seg.screen));
        for &(a, b) in &PAIRS {
            let row: Vec<f64> = LabelState::ALL.iter().map(|&c| seg.p(a, b, c)).collect();
            let _ = writeln!(s, "seg.trans.{}{} = {}", a.symbol(), b.symbol(), join(&row));
        }
        let _ = writeln!(s, "seg.sigma_f = {}", join(&seg.sigma_fixation));
        let _ = writeln!(s, "seg.sigma_s = {}", join(&seg.sigma_saccade));
        let _ = writeln!(s, "seg.sigma_o = {}", join(&seg.sigma_outlier));
        let it = &self.intent;
        for (k, row) in it.behavior_transition.iter().enumerate() {
            let _ = writeln!(s, "intent.behavior.{} = {}", k + 1, join(row));
        }
        let _ = writeln!(s, "intent.pi = {}", join(&it.initial));
        let _ = writeln!(s, "intent.p_s = {}", it.p_switch);
        let _ = writeln!(s, "intent.beta_x = {}", join(&it.beta_x));
        let _ = writeln!(s, "intent.beta_y = {}", join(&it.beta_y));
        let _ = writeln!(s, "intent.sigma_x = {}", join(&it.sigma_x));
        let _ = writeln!(s, "intent.sigma_y = {}", join(&it.sigma_y));
        let _ = writeln!(s, "intent.mu_d = {}", join(&it.mu_d));
        let _ = writeln!(s, "intent.sigma_d = {}", join(&it.sigma_d));
        let _ = writeln!(s, "intent.history = {}", it.history);
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, format!("expected 'key = value', got '{line}'")))?;
            entries.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let mut kv = Entries { entries, origin };

        match kv.take("format") {
            Some((line, v)) if v != PARAMS_FORMAT => {
                return Err(Error::parse(origin, line, format!("unsupported format '{v}'")))
            }
            _ => {}
        }
        let unit = match kv.take("duration_unit") {
            Some((line, v)) => v.parse().map_err(|e: Error| Error::parse(origin, line, e.to_string()))?,
            None => DurationUnit::default(),
        };

        let mut out = ModelParams::default();
        if kv.has_prefix("seg.") {
            let seg = &mut out.seg;
            seg.screen = kv.array("seg.screen")?;
            for &(a, b) in &PAIRS {
                let row: [f64; 3] = kv.array(&format!("seg.trans.{}{}", a.symbol(), b.symbol()))?;
                for c in LabelState::ALL {
                    seg.set_p(a, b, c, row[c.index()]);
                }
            }
            seg.sigma_fixation = kv.array("seg.sigma_f")?;
            seg.sigma_saccade = kv.array("seg.sigma_s")?;
            seg.sigma_outlier = kv.array("seg.sigma_o")?;
            seg.validate()?;
        }
        out.intent.duration_unit = unit;
        if kv.has_prefix("intent.") {
            let it = &mut out.intent;
            for k in 0..3 {
                it.behavior_transition[k] = kv.array(&format!("intent.behavior.{}", k + 1))?;
            }
            it.initial = kv.array("intent.pi")?;
            it.p_switch = kv.array::<1>("intent.p_s")?[0];
            it.beta_x = kv.array("intent.beta_x")?;
            it.beta_y = kv.array("intent.beta_y")?;
            it.sigma_x = kv.array("intent.sigma_x")?;
            it.sigma_y = kv.array("intent.sigma_y")?;
            it.mu_d = kv.array("intent.mu_d")?;
            it.sigma_d = kv.array("intent.sigma_d")?;
            if let Some((line, v)) = kv.take("intent.history") {
                it.history = v.parse().map_err(|_| Error::parse(origin, line, format!("bad history '{v}'")))?;
            }
            it.validate()?;
        }
        if let Some((key, (line, _))) = kv.entries.iter().next() {
            return Err(Error::parse(origin, *line, format!("unknown key '{key}'")));
        }
        Ok(out)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

struct Entries<'a> {
    entries: BTreeMap<String, (usize, String)>,
    origin: &'a str,
}

impl Entries<'_> {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        self.entries.keys().any(|k| k.starts_with(prefix))
    }

    fn array<const N: usize>(&mut self, key: &str) -> Result<[f64; N]> {
        let (line, v) = self
            .take(key)
            .ok_or_else(|| Error::parse(self.origin, 0, format!("missing key '{key}'")))?;
        let vals: Vec<f64> = v
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(self.origin, line, format!("{key}: {e}")))?;
        vals.try_into().map_err(|vals: Vec<f64>| {
            Error::parse(self.origin, line, format!("{key}: expected {N} values, got {}", vals.len()))
        })
    }
}
