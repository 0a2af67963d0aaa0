use serde::{Deserialize, Serialize};

use super::Disutility;
use crate::error::{Error, Result};
use crate::probspace::INPUT_TOL;

/// Target width of the final `μ` bracket.
pub const MU_TOL: f64 = 1e-12;
const MAX_ITERS: usize = 400;

/// Outcome of one OCE minimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OceResult {
    pub value: f64,
    pub minimizer: f64,
    pub bracket: [f64; 2],
    pub iterations: usize,
}

/// `τ Σ_j w_j φ((v_j − μ)/τ) + μ`.
#[inline]
pub fn oce_objective(phi: Disutility, values: &[f64], weights: &[f64], tau: f64, mu: f64) -> f64 {
    let mut acc = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        if w > 0.0 {
            acc += w * phi.eval((v - mu) / tau);
        }
    }
    tau * acc + mu
}

/// Right derivative of [`oce_objective`] in `μ`: `1 − Σ_j w_j φ′((v_j − μ)/τ)`.
#[inline]
fn objective_slope(phi: Disutility, values: &[f64], weights: &[f64], tau: f64, mu: f64) -> f64 {
    let mut acc = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        if w > 0.0 {
            acc += w * phi.derivative((v - mu) / tau);
        }
    }
    1.0 - acc
}

fn validate(values: &[f64], weights: &[f64], tau: f64) -> Result<()> {
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::DimensionMismatch("empty value vector".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("value {v}")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    let mut total = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::NotADistribution(format!("weight {w}")));
        }
        total += w;
    }
    if (total - 1.0).abs() > INPUT_TOL {
        return Err(Error::NotADistribution(format!("weights sum to {total}")));
    }
    Ok(())
}

/// Weighted OCE `min_μ { τ E_w[φ((v − μ)/τ)] + μ }`.
///
/// The minimizer lies in `[min v, max v]` over the weighted support: at the
/// left end every argument of `φ` is nonnegative so the slope is ≤ 0, and at
/// the right end it is ≥ 0. Smooth disutilities are solved by bisection on
/// the derivative sign, CVaR by golden-section search.
pub fn oce_weighted(phi: Disutility, values: &[f64], weights: &[f64], tau: f64) -> Result<OceResult> {
    validate(values, weights, tau)?;
    Ok(solve(phi, values, weights, tau))
}

/// Empirical OCE with uniform weights `1/m`.
pub fn oce_empirical(phi: Disutility, samples: &[f64], tau: f64) -> Result<OceResult> {
    let w = vec![1.0 / samples.len().max(1) as f64; samples.len()];
    oce_weighted(phi, samples, &w, tau)
}

/// Solver without input validation; callers guarantee finite values,
/// a probability weight vector and `τ > 0`.
pub(crate) fn solve(phi: Disutility, values: &[f64], weights: &[f64], tau: f64) -> OceResult {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&v, &w) in values.iter().zip(weights) {
        if w > 0.0 {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let bracket = [lo, hi];
    if hi - lo <= 0.0 {
        return OceResult {
            value: lo,
            minimizer: lo,
            bracket,
            iterations: 0,
        };
    }
    match phi {
        Disutility::Identity => {
            let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum();
            OceResult {
                value: mean,
                minimizer: 0.5 * (lo + hi),
                bracket,
                iterations: 0,
            }
        }
        Disutility::Cvar { .. } => golden_section(phi, values, weights, tau, bracket),
        _ => bisection(phi, values, weights, tau, bracket),
    }
}

fn bisection(phi: Disutility, values: &[f64], weights: &[f64], tau: f64, bracket: [f64; 2]) -> OceResult {
    let [mut lo, mut hi] = bracket;
    let mut iterations = 0;
    while hi - lo > MU_TOL && iterations < MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        if objective_slope(phi, values, weights, tau, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let minimizer = 0.5 * (lo + hi);
    OceResult {
        value: oce_objective(phi, values, weights, tau, minimizer),
        minimizer,
        bracket,
        iterations,
    }
}

fn golden_section(phi: Disutility, values: &[f64], weights: &[f64], tau: f64, bracket: [f64; 2]) -> OceResult {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let f = |mu: f64| oce_objective(phi, values, weights, tau, mu);
    let [mut a, mut b] = bracket;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iterations = 0;
    while b - a > MU_TOL && iterations < MAX_ITERS {
        iterations += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    // The objective is piecewise linear, so compare the surviving bracket ends too.
    let mid = 0.5 * (a + b);
    let (minimizer, value) = [(mid, f(mid)), (a, f(a)), (b, f(b))]
        .into_iter()
        .fold((mid, f64::INFINITY), |best, cand| if cand.1 < best.1 { cand } else { best });
    OceResult {
        value,
        minimizer,
        bracket,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_min(phi: Disutility, values: &[f64], weights: &[f64], tau: f64, step: f64) -> f64 {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = ((hi - lo) / step).round() as usize;
        (0..=n)
            .map(|k| oce_objective(phi, values, weights, tau, lo + k as f64 * step))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn identity_is_the_weighted_mean() {
        let r = oce_weighted(Disutility::Identity, &[1.0, 2.0, 7.0], &[0.2, 0.3, 0.5], 0.7).unwrap();
        assert!((r.value - (0.2 + 0.6 + 3.5)).abs() < 1e-15);
        assert_eq!(r.minimizer, 4.0);
    }

    #[test]
    fn entropy_risk_closed_form() {
        let r = oce_weighted(Disutility::EntropyRisk, &[0.0, 3f64.ln()], &[0.5, 0.5], 1.0).unwrap();
        assert!((r.value - 2f64.ln()).abs() < 1e-12);
        assert!((r.minimizer - 2f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn cvar_matches_grid_oracle() {
        // Oracle values frozen from a μ-grid with step 1e-4.
        let oracle = grid_min(Disutility::cvar(0.5), &[1.0, 3.0], &[0.5, 0.5], 1.0, 1e-4);
        assert!((oracle - 3.0).abs() < 1e-9);
        let r = oce_weighted(Disutility::cvar(0.5), &[1.0, 3.0], &[0.5, 0.5], 1.0).unwrap();
        assert!((r.value - 3.0).abs() < 1e-10);

        let oracle = grid_min(Disutility::cvar(0.25), &[0.0, 0.0, 0.0, 4.0], &[0.25; 4], 1.0, 1e-4);
        assert!((oracle - 4.0).abs() < 1e-9);
        let r = oce_empirical(Disutility::cvar(0.25), &[0.0, 0.0, 0.0, 4.0], 1.0).unwrap();
        assert!((r.value - 4.0).abs() < 1e-10);
    }

    #[test]
    fn mean_variance_inside_quadratic_regime() {
        // Spread below τ keeps every argument ≥ −1: value = mean + var/(2τ).
        let v = [0.1, 0.4, 0.9];
        let w = [0.5, 0.3, 0.2];
        let mean: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let var: f64 = v.iter().zip(&w).map(|(a, b)| b * (a - mean) * (a - mean)).sum();
        let r = oce_weighted(Disutility::MeanVariance, &v, &w, 2.0).unwrap();
        assert!((r.value - (mean + var / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn constants_and_single_samples() {
        for phi in [Disutility::Identity, Disutility::EntropyRisk, Disutility::MeanVariance, Disutility::cvar(0.1)] {
            let r = oce_empirical(phi, &[2.5, 2.5, 2.5], 0.3).unwrap();
            assert_eq!((r.value, r.iterations), (2.5, 0));
            assert_eq!(oce_empirical(phi, &[-1.25], 4.0).unwrap().value, -1.25);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            oce_empirical(Disutility::EntropyRisk, &[1.0, f64::NAN], 1.0),
            Err(Error::NonFiniteInput(_))
        ));
        assert!(matches!(
            oce_weighted(Disutility::EntropyRisk, &[1.0, 2.0], &[0.5, 0.6], 1.0),
            Err(Error::NotADistribution(_))
        ));
        assert!(oce_empirical(Disutility::EntropyRisk, &[1.0], 0.0).is_err());
    }

    #[test]
    fn minimizer_stays_in_bracket_and_is_optimal() {
        let v = [-3.0, 0.5, 1.0, 8.0];
        let w = [0.1, 0.2, 0.3, 0.4];
        for phi in [Disutility::EntropyRisk, Disutility::MeanVariance, Disutility::cvar(0.35)] {
            for tau in [0.1, 1.0, 10.0] {
                let r = oce_weighted(phi, &v, &w, tau).unwrap();
                assert!(r.bracket[0] <= r.minimizer && r.minimizer <= r.bracket[1]);
                for d in [-1e-3, 1e-3, -1e-9, 1e-9] {
                    assert!(oce_objective(phi, &v, &w, tau, r.minimizer + d) >= r.value - 1e-10);
                }
                // extending the bracket never finds anything lower
                for k in -100..=100 {
                    let mu = r.minimizer + k as f64 * 0.11 * 10.0;
                    assert!(oce_objective(phi, &v, &w, tau, mu) >= r.value - 1e-10, "{phi} {tau} {mu}");
                }
            }
        }
    }
}
