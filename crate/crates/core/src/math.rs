//! Numerically stable scalar and vector helpers.

use crate::error::{Error, Result};

/// `log(sum(exp(x)))` with max-subtraction. Entries may be `-inf` as long as
/// at least one is finite.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Exponentiate and normalize `logits`.
///
/// Shifting every logit by the same constant leaves the output unchanged.
/// `-inf` logits map to exactly zero mass.
pub fn softmax_normalize(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::invalid("logits must be finite or -inf"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) -> Result<()> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::invalid("softmax needs at least one finite logit"));
    }
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
    Ok(())
}

/// Logistic sigmoid, stable for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    let r = 1.0 / (1.0 + e);
    if x >= 0.0 {
        r
    } else {
        e * r
    }
}

/// `log(sigmoid(x))`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Standard normal CDF, `Φ(x) = erfc(-x/√2)/2`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Index of the first maximum. NaN entries are never selected.
pub fn argmax_first(xs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in xs.iter().enumerate() {
        if x.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero vectors give NaN.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

/// Least-squares slope of `ln y` against `ln x`. `None` for fewer than two
/// points or non-positive values.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_examples() {
        let p = softmax_normalize(&[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        let p = softmax_normalize(&[2f64.ln(), 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0, epsilon = 1e-15);
        // shift-invariant hand result: [1, 3] / 4
        let p = softmax_normalize(&[1000.0, 1000.0 + 3f64.ln()]).unwrap();
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn softmax_rejects_empty_and_nan() {
        assert!(softmax_normalize(&[]).is_err());
        assert!(softmax_normalize(&[f64::NAN, 0.0]).is_err());
        assert!(softmax_normalize(&[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn softmax_handles_huge_magnitudes() {
        let p = softmax_normalize(&[1e6, -1e6, 5e5]).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normal_cdf_table_values() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(2.0), 0.977_249_868_051_820_8, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(-1.96), 0.024_997_895_148_220_4, epsilon = 1e-12);
    }

    #[test]
    fn sigmoid_tails() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_abs_diff_eq!(log_sigmoid(-800.0), -800.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sigmoid(0.3) + sigmoid(-0.3), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn argmax_ties_pick_first() {
        assert_eq!(argmax_first(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax_first(&[]), None);
        assert_eq!(argmax_first(&[f64::NAN, 0.0]), Some(1));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<_> = (1..=6).map(|n| (n as f64, 3.0 / n as f64)).collect();
        assert_abs_diff_eq!(log_log_slope(&pts).unwrap(), -1.0, epsilon = 1e-12);
        assert!(log_log_slope(&pts[..1]).is_none());
    }
}
