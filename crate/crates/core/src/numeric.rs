//! Stable reductions shared by the risk and OCE code.

/// `log Σ_j w_j exp(v_j)`, skipping zero weights.
///
/// Returns `-inf` when every weight is zero. The maximum over the weighted
/// support is subtracted before exponentiating.
pub fn weighted_log_sum_exp(values: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    let mut max = f64::NEG_INFINITY;
    for (&v, &w) in values.iter().zip(weights) {
        if w > 0.0 && v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        if w > 0.0 {
            acc += w * (v - max).exp();
        }
    }
    max + acc.ln()
}

/// `log Σ_j exp(v_j)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log((1/m) Σ_j exp(v_j))`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// `Σ_j p_j ln(p_j / q_j)` with `0 ln 0 = 0`; infinite when `p_j > 0 = q_j`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi <= 0.0 {
                0.0
            } else if qi <= 0.0 {
                f64::INFINITY
            } else {
                pi * (pi / qi).ln()
            }
        })
        .sum()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_survives_large_arguments() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_mean_exp(&v) - 1000.0).abs() < 1e-12);
        assert!((weighted_log_sum_exp(&[-1000.0, 5.0], &[0.5, 0.0]) - (-1000.0 + 0.5f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn empty_support_is_neg_infinity() {
        assert_eq!(weighted_log_sum_exp(&[1.0], &[0.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn kl_conventions() {
        assert_eq!(kl_divergence(&[0.0, 1.0], &[0.5, 0.5]), 2f64.ln());
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_infinite());
    }
}
