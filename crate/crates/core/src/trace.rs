//! Line-delimited trial files: one JSON header line, then one trial per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LinkId, PageLayout, Point};
use crate::params::DurationUnit;
use crate::segmentation::GazeSample;
use crate::sim::TrialRecord;

pub const TRACE_VERSION: &str = "gdw-trace/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub version: String,
    pub ts_ms: f64,
    pub duration_unit: DurationUnit,
}

impl Default for TraceHeader {
    fn default() -> Self {
        TraceHeader { version: TRACE_VERSION.into(), ts_ms: 16.6667, duration_unit: DurationUnit::Samples }
    }
}

type WireSample = (u64, f64, f64);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTrial {
    layout: PageLayout,
    pre_select: Vec<WireSample>,
    post_select: Vec<WireSample>,
    true_target: LinkId,
    #[serde(default)]
    meta: serde_json::Map<String, serde_json::Value>,
}

fn to_wire(s: &[GazeSample]) -> Vec<WireSample> {
    s.iter().map(|g| (g.t, g.point.x, g.point.y)).collect()
}

fn from_wire(s: Vec<WireSample>) -> Vec<GazeSample> {
    s.into_iter().map(|(t, x, y)| GazeSample { t, point: Point::new(x, y) }).collect()
}

pub fn trial_to_line(trial: &TrialRecord) -> String {
    let wire = WireTrial {
        layout: trial.layout.clone(),
        pre_select: to_wire(&trial.pre_select),
        post_select: to_wire(&trial.post_select),
        true_target: trial.true_target,
        meta: trial.meta.clone(),
    };
    serde_json::to_string(&wire).expect("trial records always serialize")
}

pub fn trial_from_line(line: &str) -> std::result::Result<TrialRecord, String> {
    let w: WireTrial = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let trial = TrialRecord {
        layout: w.layout,
        pre_select: from_wire(w.pre_select),
        post_select: from_wire(w.post_select),
        true_target: w.true_target,
        meta: w.meta,
    };
    trial.validate().map_err(|e| e.to_string())?;
    Ok(trial)
}

pub fn write_trials<W: Write>(mut w: W, trials: &[TrialRecord]) -> Result<()> {
    writeln!(w, "{}", serde_json::to_string(&TraceHeader::default()).expect("header serializes"))?;
    for t in trials {
        writeln!(w, "{}", trial_to_line(t))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials<R: BufRead>(r: R, origin: &str) -> Result<Vec<TrialRecord>> {
    let mut header = None;
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let h: TraceHeader = serde_json::from_str(&line)
                .map_err(|e| Error::parse(origin, line_no, format!("bad header: {e}")))?;
            if h.version != TRACE_VERSION {
                return Err(Error::parse(origin, line_no, format!("unsupported version '{}'", h.version)));
            }
            header = Some(h);
            continue;
        }
        out.push(trial_from_line(&line).map_err(|m| Error::parse(origin, line_no, m))?);
    }
    if header.is_none() {
        return Err(Error::parse(origin, 1, "missing header line"));
    }
    Ok(out)
}

pub fn save_trials(trials: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    write_trials(BufWriter::new(File::create(path)?), trials)
}

pub fn load_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    read_trials(BufReader::new(File::open(path)?), &path.display().to_string())
}

/// Plain gaze file: one `t,x,y` (or whitespace separated) sample per line, `#` comments.
pub fn read_gaze_samples<R: BufRead>(r: R, origin: &str) -> Result<Vec<GazeSample>> {
    let mut out: Vec<GazeSample> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        let bad = |m: String| Error::parse(origin, i + 1, m);
        // a column-name header line
        if out.is_empty() && fields.first().map_or(false, |f| f.parse::<f64>().is_err()) {
            continue;
        }
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", fields.len())));
        }
        let t: u64 = fields[0].parse().map_err(|_| bad(format!("bad sample index '{}'", fields[0])))?;
        let x: f64 = fields[1].parse().map_err(|_| bad(format!("bad x '{}'", fields[1])))?;
        let y: f64 = fields[2].parse().map_err(|_| bad(format!("bad y '{}'", fields[2])))?;
        if let Some(last) = out.last() {
            if t != last.t + 1 {
                return Err(bad(format!("sample index jumps from {} to {t}", last.t)));
            }
        }
        out.push(GazeSample { t, point: Point::new(x, y) });
    }
    Ok(out)
}
