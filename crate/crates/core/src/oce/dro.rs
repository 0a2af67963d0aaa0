//! Distributionally robust views of the OCE.
//!
//! For a disutility `φ = ϕ*`, the OCE with base weights `w` equals
//! `max_{p ∈ Δ_m} Σ_j p_j z_j − τ D_ϕ(p, w)`. The KL case has the closed-form
//! exponential tilt; the general case is checked against an exhaustive grid
//! over the simplex.

use serde::{Deserialize, Serialize};

use super::Divergence;
use crate::error::{Error, Result};
use crate::numeric::weighted_log_sum_exp;

/// Worst-case reweighting under a KL penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlDual {
    /// `Σ_j p_j z_j − τ KL(p ‖ w)` at the optimal tilt.
    pub value: f64,
    /// `p_j ∝ w_j exp(z_j/τ)`.
    pub tilt: Vec<f64>,
}

/// KL-penalized DRO via the exponential tilt; equals `τ log Σ_j w_j exp(z_j/τ)`.
pub fn dro_dual_kl(values: &[f64], weights: &[f64], tau: f64) -> Result<KlDual> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(Error::DimensionMismatch("values and weights must be nonempty and aligned".into()));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    let scaled: Vec<f64> = values.iter().map(|z| z / tau).collect();
    let lse = weighted_log_sum_exp(&scaled, weights);
    let tilt: Vec<f64> = scaled
        .iter()
        .zip(weights)
        .map(|(&s, &w)| if w > 0.0 { w * (s - lse).exp() } else { 0.0 })
        .collect();
    let total: f64 = tilt.iter().sum();
    let tilt: Vec<f64> = tilt.iter().map(|p| p / total).collect();
    let mut linear = 0.0;
    let mut kl = 0.0;
    for ((&p, &w), &z) in tilt.iter().zip(weights).zip(values) {
        if p > 0.0 {
            linear += p * z;
            kl += p * (p / w).ln();
        }
    }
    Ok(KlDual {
        value: linear - tau * kl,
        tilt,
    })
}

/// Exhaustive maximization of `Σ_j p_j z_j − τ D_ϕ(p, w)` over the simplex
/// grid `{k/N}` with `N = 1/grid_step`.
///
/// The objective is separable across coordinates, so the maximum over all
/// grid compositions is assembled by a max-plus convolution; this visits the
/// same grid points as nested enumeration in `O(m N²)` time.
pub fn dro_primal_grid(
    divergence: Divergence,
    values: &[f64],
    weights: &[f64],
    tau: f64,
    grid_step: f64,
) -> Result<f64> {
    let m = values.len();
    if m > 4 {
        return Err(Error::SimplexTooLarge(m));
    }
    if m == 0 || weights.len() != m {
        return Err(Error::DimensionMismatch("values and weights must be nonempty and aligned".into()));
    }
    if !(grid_step > 0.0 && grid_step <= 1e-2) {
        return Err(Error::InvalidArgument(format!("grid_step must lie in (0, 1e-2], got {grid_step}")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    if m == 1 {
        return Ok(values[0]);
    }
    let n = (1.0 / grid_step).round() as usize;
    let term = |j: usize, k: usize| -> f64 {
        let p = k as f64 / n as f64;
        let penalty = divergence.term(p, weights[j]);
        if penalty.is_infinite() {
            f64::NEG_INFINITY
        } else {
            p * values[j] - tau * penalty
        }
    };
    let mut best: Vec<f64> = (0..=n).map(|k| term(0, k)).collect();
    for j in 1..m {
        let row: Vec<f64> = (0..=n).map(|k| term(j, k)).collect();
        let mut next = vec![f64::NEG_INFINITY; n + 1];
        for (total, slot) in next.iter_mut().enumerate() {
            for used in 0..=total {
                let cand = best[used] + row[total - used];
                if cand > *slot {
                    *slot = cand;
                }
            }
        }
        best = next;
    }
    Ok(best[n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oce::oce_weighted;

    #[test]
    fn kl_dual_closed_form() {
        let d = dro_dual_kl(&[0.0, 3f64.ln()], &[0.5, 0.5], 1.0).unwrap();
        assert!((d.value - 2f64.ln()).abs() < 1e-12);
        assert!((d.tilt[0] - 0.25).abs() < 1e-15 && (d.tilt[1] - 0.75).abs() < 1e-15);
        let c = dro_dual_kl(&[1.5; 3], &[0.2, 0.3, 0.5], 0.4).unwrap();
        assert!((c.value - 1.5).abs() < 1e-15);
        assert!((c.tilt[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tilt_prefers_hard_values() {
        let z = [0.3, -1.0, 2.0, 0.9];
        let d = dro_dual_kl(&z, &[0.25; 4], 0.7).unwrap();
        assert!((d.tilt.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| z[a].partial_cmp(&z[b]).unwrap());
        for w in order.windows(2) {
            assert!(d.tilt[w[0]] <= d.tilt[w[1]]);
        }
    }

    #[test]
    fn grid_primal_matches_dual_for_kl() {
        let grid = dro_primal_grid(Divergence::KullbackLeibler, &[0.0, 1.0], &[0.5, 0.5], 1.0, 1e-3).unwrap();
        let dual = dro_dual_kl(&[0.0, 1.0], &[0.5, 0.5], 1.0).unwrap();
        assert!((grid - dual.value).abs() < 1e-2);
        assert!(grid <= dual.value + 1e-12);
    }

    #[test]
    fn grid_primal_matches_oce_for_each_conjugate_pair() {
        let z = [0.4, -0.2, 1.3];
        let w = [0.3, 0.5, 0.2];
        for div in [Divergence::KullbackLeibler, Divergence::HalfChiSquare, Divergence::CvarBox { alpha: 0.4 }] {
            let grid = dro_primal_grid(div, &z, &w, 0.8, 1e-3).unwrap();
            let oce = oce_weighted(div.conjugate(), &z, &w, 0.8).unwrap().value;
            assert!((grid - oce).abs() <= 10.0 * 1e-3 * 1.5, "{div:?}: {grid} vs {oce}");
        }
    }

    #[test]
    fn degenerate_and_oversized() {
        assert_eq!(dro_primal_grid(Divergence::KullbackLeibler, &[2.5], &[1.0], 1.0, 1e-3).unwrap(), 2.5);
        assert_eq!(
            dro_primal_grid(Divergence::KullbackLeibler, &[0.0; 5], &[0.2; 5], 1.0, 1e-3).unwrap_err(),
            Error::SimplexTooLarge(5)
        );
        assert!(dro_primal_grid(Divergence::KullbackLeibler, &[0.0, 1.0], &[0.5; 2], 1.0, 0.1).is_err());
    }
}
