//! Optimized certainty equivalents: disutilities, pairwise losses, the 1-D
//! convex solver and the DRO duality routes.
//!
//! For a disutility `φ` and temperature `τ`,
//!
//! ```text
//! OCE(f) = min_μ { τ E[φ((f − μ)/τ)] + μ }
//! ```
//!
//! `EntropyRisk` recovers `τ log E exp(f/τ)`, the log-sum-exp that defines
//! the standard contrastive loss.

mod disutility;
mod dro;
mod pairwise;
mod solve;

pub use disutility::{Disutility, DisutilityConstants, Divergence};
pub use dro::{dro_dual_kl, dro_primal_grid, KlDual};
pub use pairwise::{LossConstants, PairwiseLoss};
pub use solve::{oce_empirical, oce_objective, oce_weighted, OceResult, MU_TOL};

pub(crate) use solve::solve as solve_unchecked;

use crate::error::Result;
use crate::numeric::log_mean_exp;

/// Both sides of the log-sum-exp ↔ OCE reformulation for one sample vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    /// `τ log((1/m) Σ_j exp(z_j/τ))` by stable log-sum-exp.
    pub lhs: f64,
    /// `−τ + min_{|μ| ≤ 2B} {(τ/m) Σ_j exp((z_j − μ)/τ) + μ}` with `B = max|z|/2`.
    pub rhs: f64,
    pub minimizer: f64,
    pub deviation: f64,
}

/// Evaluates the log-mean-exp reformulation as a minimization over `μ`.
///
/// The right-hand side takes its minimizer from the OCE bisection and
/// evaluates the exponential objective there; the left-hand side never
/// touches the solver.
pub fn logsumexp_identity_check(samples: &[f64], tau: f64) -> Result<IdentityCheck> {
    let opt = oce_empirical(Disutility::EntropyRisk, samples, tau)?;
    let bound = samples.iter().fold(0.0f64, |b, z| b.max(z.abs())) / 2.0;
    debug_assert!(opt.minimizer.abs() <= 2.0 * bound + 1e-12);
    let scaled: Vec<f64> = samples.iter().map(|z| z / tau).collect();
    let lhs = tau * log_mean_exp(&scaled);
    let m = samples.len() as f64;
    let inner: f64 = samples.iter().map(|z| ((z - opt.minimizer) / tau).exp()).sum::<f64>() * tau / m + opt.minimizer;
    let rhs = -tau + inner;
    Ok(IdentityCheck {
        lhs,
        rhs,
        minimizer: opt.minimizer,
        deviation: (lhs - rhs).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn identity_trivial_and_small_cases() {
        let c = logsumexp_identity_check(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!((c.lhs, c.rhs, c.deviation), (0.0, 0.0, 0.0));
        let c = logsumexp_identity_check(&[-1.0, 1.0], 0.5).unwrap();
        assert!(c.deviation <= 1e-10, "{c:?}");
    }

    #[test]
    fn identity_sweep() {
        let mut rng = CounterRng::new(11, 0);
        let mut worst = 0.0f64;
        for i in 0..100 {
            let m = 1 + rng.below(40) as usize;
            let z: Vec<f64> = (0..m).map(|_| rng.uniform_in(-10.0, 10.0)).collect();
            let tau = [0.1, 1.0, 10.0][i % 3];
            worst = worst.max(logsumexp_identity_check(&z, tau).unwrap().deviation);
        }
        assert!(worst <= 1e-9, "max deviation {worst:e}");
    }
}
