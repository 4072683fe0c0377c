//! Log-space helpers shared by both HMM stages.

use std::f64::consts::PI;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Natural log that maps 0 to `-inf` without producing NaN for tiny negatives.
#[inline]
pub fn ln_prob(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else {
        p.ln()
    }
}

/// Log-density of an axis-aligned bivariate normal at residual `(dx, dy)`.
#[inline]
pub fn diag_normal_logpdf(dx: f64, dy: f64, var_x: f64, var_y: f64) -> f64 {
    -LN_2PI - 0.5 * (var_x * var_y).ln() - 0.5 * (dx * dx / var_x + dy * dy / var_y)
}

/// Log-density of a lognormal at `x > 0`.
#[inline]
pub fn lognormal_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x.ln() - mu) / sigma;
    -x.ln() - sigma.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * z * z
}

/// Normalizes log-weights into a probability vector.
pub fn normalize_log(weights: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(weights);
    weights.iter().map(|w| (w - z).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_handles_neg_infinity() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[f64::NEG_INFINITY, 0.0]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn lse_is_stable_for_large_magnitudes() {
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(-1000.0, -1000.0) - v + 2000.0).abs() < 1e-9);
    }

    #[test]
    fn normal_peak_matches_closed_form() {
        let v = diag_normal_logpdf(0.0, 0.0, 4.0, 9.0);
        let expected = (1.0 / (2.0 * PI * 6.0)).ln();
        assert!((v - expected).abs() < 1e-12);
    }
}
