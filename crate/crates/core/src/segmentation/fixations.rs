use serde::{Deserialize, Serialize};

use super::{GazeSample, LabelState};
use crate::error::{Error, Result};
use crate::SAMPLE_PERIOD_MS;

/// Fixations shorter than this are dropped from the scanpath.
pub const MIN_FIXATION_MS: f64 = 100.0;

/// One fixation: mean location of its fixation-labeled samples and its duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationEvent {
    pub x: f64,
    pub y: f64,
    pub duration_ms: f64,
    pub start_index: u64,
    pub end_index: u64,
}

impl FixationEvent {
    pub fn new(x: f64, y: f64, duration_ms: f64) -> Self {
        FixationEvent { x, y, duration_ms, start_index: 0, end_index: 0 }
    }
}

/// Time-ordered, non-overlapping fixations.
pub type Scanpath = Vec<FixationEvent>;

/// Groups labeled samples into fixations.
///
/// Every maximal run of non-saccade samples is a candidate; the ends of the
/// trace also delimit runs. Outlier samples stay inside their run but do not
/// contribute to its location. Duration counts the run's samples inclusively.
pub fn extract_fixations(trace: &[GazeSample], labels: &[LabelState]) -> Result<Scanpath> {
    if trace.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} samples",
            labels.len(),
            trace.len()
        )));
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < trace.len() {
        if labels[i] == LabelState::Saccade {
            i += 1;
            continue;
        }
        let start = i;
        while i < trace.len() && labels[i] != LabelState::Saccade {
            i += 1;
        }
        let run = start..i;
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for j in run.clone() {
            if labels[j] == LabelState::Fixation {
                sx += trace[j].point.x;
                sy += trace[j].point.y;
                n += 1;
            }
        }
        if n == 0 {
            continue;
        }
        let first = trace[run.start].t;
        let last = trace[run.end - 1].t;
        let duration_ms = (last - first + 1) as f64 * SAMPLE_PERIOD_MS;
        if duration_ms + 1e-9 < MIN_FIXATION_MS {
            continue;
        }
        out.push(FixationEvent {
            x: sx / n as f64,
            y: sy / n as f64,
            duration_ms,
            start_index: first,
            end_index: last,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use LabelState::*;

    fn trace(n: usize) -> Vec<GazeSample> {
        (0..n).map(|t| GazeSample::new(t as u64, 10.0 * t as f64, 5.0)).collect()
    }

    fn labels(s: &str) -> Vec<LabelState> {
        s.chars()
            .map(|c| match c {
                'f' => Fixation,
                's' => Saccade,
                'o' => Outlier,
                _ => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn six_samples_make_exactly_100ms() {
        let fx = extract_fixations(&trace(8), &labels("sffffffs")).unwrap();
        assert_eq!(fx.len(), 1);
        assert!((fx[0].duration_ms - 100.0).abs() < 1e-9);
        assert_eq!((fx[0].start_index, fx[0].end_index), (1, 6));
        assert!((fx[0].x - 35.0).abs() < 1e-12);
    }

    #[test]
    fn short_run_is_dropped() {
        let fx = extract_fixations(&trace(5), &labels("sfffs")).unwrap();
        assert!(fx.is_empty());
    }

    #[test]
    fn outlier_excluded_from_location() {
        let mut tr = trace(9);
        tr[4].point.x = 5000.0;
        let fx2 = extract_fixations(&tr, &labels("sfffofffs")).unwrap();
        assert_eq!(fx2.len(), 1);
        let expected = (10.0 + 20.0 + 30.0 + 50.0 + 60.0 + 70.0) / 6.0;
        assert!((fx2[0].x - expected).abs() < 1e-12);
        assert!((fx2[0].duration_ms - 7.0 * SAMPLE_PERIOD_MS).abs() < 1e-9);
    }

    #[test]
    fn events_are_ordered_and_disjoint() {
        let l = labels("ffffffffsssffffffffsffffffff");
        let fx = extract_fixations(&trace(l.len()), &l).unwrap();
        assert_eq!(fx.len(), 3);
        for w in fx.windows(2) {
            assert!(w[0].end_index < w[1].start_index);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(extract_fixations(&trace(3), &labels("ff")).is_err());
    }
}
