use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{emission_shape, GazeSample, LabelState, SegModelParams, PAIRS};
use crate::geometry::Point;

/// Draws a labeled trace of `len` samples from the segmentation model itself.
pub fn sample_trace<R: Rng + ?Sized>(
    params: &SegModelParams,
    len: usize,
    rng: &mut R,
) -> (Vec<GazeSample>, Vec<LabelState>) {
    let mut labels = Vec::with_capacity(len);
    let mut points = Vec::with_capacity(len);
    let (a, b) = PAIRS[rng.gen_range(0..PAIRS.len())];
    for l in [a, b].into_iter().take(len) {
        labels.push(l);
        points.push(Point::new(rng.gen_range(0.0..params.screen[0]), rng.gen_range(0.0..params.screen[1])));
    }
    while labels.len() < len {
        let n = labels.len();
        let (l2, l1) = (labels[n - 2], labels[n - 1]);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut l0 = LabelState::Fixation;
        for c in LabelState::ALL {
            let p = params.p(l2, l1, c);
            if p > 0.0 {
                l0 = c;
                acc += p;
                if u < acc {
                    break;
                }
            }
        }
        let (mean, cov) = emission_shape(l2, l1, l0, points[n - 2], points[n - 1]);
        let [vx, vy] = params.cov_diag(cov);
        let x = Normal::new(mean.x, vx.sqrt()).expect("positive variance").sample(rng);
        let y = Normal::new(mean.y, vy.sqrt()).expect("positive variance").sample(rng);
        labels.push(l0);
        points.push(Point::new(x, y));
    }
    let trace = points.into_iter().enumerate().map(|(t, point)| GazeSample { t: t as u64, point }).collect();
    (trace, labels)
}
