use std::fmt;

use serde::{Deserialize, Serialize};

/// Disutility `φ` of an optimized certainty equivalent.
///
/// All variants are nondecreasing, closed and convex with `φ(0) = 0` and
/// `1 ∈ ∂φ(0)`. `MeanVariance` is `t²/2 + t` on `t ≥ −1` and the constant
/// `−1/2` below, which is exactly the conjugate of the half χ² divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disutility {
    Identity,
    EntropyRisk,
    MeanVariance,
    Cvar { alpha: f64 },
}

/// Constants of `φ` on a closed interval, computed in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisutilityConstants {
    pub lo: f64,
    pub hi: f64,
    pub lipschitz: f64,
    pub strong_convexity: f64,
}

impl Disutility {
    pub fn cvar(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha < 1.0, "CVaR level must lie in (0, 1)");
        Disutility::Cvar { alpha }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Disutility::Identity => "identity",
            Disutility::EntropyRisk => "entropy_risk",
            Disutility::MeanVariance => "mean_variance",
            Disutility::Cvar { .. } => "cvar",
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Disutility::Identity => t,
            Disutility::EntropyRisk => t.exp_m1(),
            Disutility::MeanVariance => {
                if t >= -1.0 {
                    0.5 * t * t + t
                } else {
                    -0.5
                }
            }
            Disutility::Cvar { alpha } => t.max(0.0) / alpha,
        }
    }

    /// Derivative; for CVaR the right derivative.
    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Disutility::Identity => 1.0,
            Disutility::EntropyRisk => t.exp(),
            Disutility::MeanVariance => (1.0 + t).max(0.0),
            Disutility::Cvar { alpha } => {
                if t >= 0.0 {
                    1.0 / alpha
                } else {
                    0.0
                }
            }
        }
    }

    /// Subdifferential `[left, right]` at `t`.
    pub fn subdifferential(&self, t: f64) -> (f64, f64) {
        match *self {
            Disutility::Cvar { alpha } if t == 0.0 => (0.0, 1.0 / alpha),
            _ => {
                let d = self.derivative(t);
                (d, d)
            }
        }
    }

    /// Second derivative where it exists (right-sided at kinks).
    pub fn second_derivative(&self, t: f64) -> f64 {
        match *self {
            Disutility::Identity | Disutility::Cvar { .. } => 0.0,
            Disutility::EntropyRisk => t.exp(),
            Disutility::MeanVariance => {
                if t >= -1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Whether `φ` is continuously differentiable (required for gradient training).
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Disutility::Cvar { .. })
    }

    /// Lipschitz and strong-convexity constants on `[lo, hi]`.
    pub fn constants(&self, lo: f64, hi: f64) -> DisutilityConstants {
        assert!(lo <= hi);
        let (lipschitz, strong_convexity) = match *self {
            Disutility::Identity => (1.0, 0.0),
            Disutility::EntropyRisk => (hi.exp(), lo.exp()),
            Disutility::MeanVariance => ((1.0 + hi).max(0.0), if lo >= -1.0 { 1.0 } else { 0.0 }),
            Disutility::Cvar { alpha } => (if hi > 0.0 { 1.0 / alpha } else { 0.0 }, 0.0),
        };
        DisutilityConstants {
            lo,
            hi,
            lipschitz,
            strong_convexity,
        }
    }

    /// The divergence whose conjugate is this disutility, when it has a
    /// finite-valued representation usable by the simplex oracle.
    pub fn dual_divergence(&self) -> Option<Divergence> {
        match *self {
            Disutility::Identity => None,
            Disutility::EntropyRisk => Some(Divergence::KullbackLeibler),
            Disutility::MeanVariance => Some(Divergence::HalfChiSquare),
            Disutility::Cvar { alpha } => Some(Divergence::CvarBox { alpha }),
        }
    }
}

impl fmt::Display for Disutility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disutility::Cvar { alpha } => write!(f, "cvar({alpha})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Generator `ϕ` of a ϕ-divergence `D_ϕ(p, q) = Σ q_j ϕ(p_j / q_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Divergence {
    /// `ϕ(t) = t ln t − t + 1`.
    KullbackLeibler,
    /// `ϕ(t) = (t − 1)²/2` on `t ≥ 0`.
    HalfChiSquare,
    /// `ϕ(t) = 0` on `[0, 1/α]`, `+∞` elsewhere.
    CvarBox { alpha: f64 },
}

impl Divergence {
    /// `ϕ(t)` for `t ≥ 0`; `+∞` outside the domain.
    pub fn generator(&self, t: f64) -> f64 {
        if t < 0.0 {
            return f64::INFINITY;
        }
        match *self {
            Divergence::KullbackLeibler => {
                if t == 0.0 {
                    1.0
                } else {
                    t * t.ln() - t + 1.0
                }
            }
            Divergence::HalfChiSquare => 0.5 * (t - 1.0) * (t - 1.0),
            Divergence::CvarBox { alpha } => {
                if t <= 1.0 / alpha + 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `q_j ϕ(p_j/q_j)` with the recession convention at `q_j = 0`.
    pub fn term(&self, p: f64, q: f64) -> f64 {
        if q > 0.0 {
            q * self.generator(p / q)
        } else if p == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn conjugate(&self) -> Disutility {
        match *self {
            Divergence::KullbackLeibler => Disutility::EntropyRisk,
            Divergence::HalfChiSquare => Disutility::MeanVariance,
            Divergence::CvarBox { alpha } => Disutility::Cvar { alpha },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> [Disutility; 4] {
        [
            Disutility::Identity,
            Disutility::EntropyRisk,
            Disutility::MeanVariance,
            Disutility::cvar(0.3),
        ]
    }

    #[test]
    fn anchor_conditions() {
        for phi in all() {
            assert_eq!(phi.eval(0.0), 0.0, "{phi}");
            let (lo, hi) = phi.subdifferential(0.0);
            assert!(lo <= 1.0 && 1.0 <= hi, "{phi}");
        }
    }

    #[test]
    fn dominates_identity_and_is_monotone_convex_on_grid() {
        for phi in all() {
            let grid: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.01).collect();
            let mut prev_d = f64::NEG_INFINITY;
            let mut prev_v = f64::NEG_INFINITY;
            for &t in &grid {
                let v = phi.eval(t);
                assert!(v >= t - 1e-12, "{phi} at {t}");
                assert!(v >= prev_v - 1e-15, "{phi} not nondecreasing at {t}");
                let d = phi.derivative(t);
                assert!(d >= prev_d, "{phi} derivative decreases at {t}");
                prev_d = d;
                prev_v = v;
            }
        }
    }

    #[test]
    fn conjugates_match_on_a_grid() {
        // φ(s) = max_{t ≥ 0} ts − ϕ(t), evaluated by brute force over t.
        for div in [Divergence::KullbackLeibler, Divergence::HalfChiSquare, Divergence::CvarBox { alpha: 0.4 }] {
            let phi = div.conjugate();
            for s in [-2.0, -1.0, -0.3, 0.0, 0.4, 1.1] {
                let brute = (0..=200_000)
                    .map(|k| k as f64 * 5e-5)
                    .map(|t| t * s - div.generator(t))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((brute - phi.eval(s)).abs() < 1e-6, "{div:?} at {s}: {brute} vs {}", phi.eval(s));
            }
        }
    }

    #[test]
    fn certified_constants() {
        let c = Disutility::EntropyRisk.constants(-2.0, 2.0);
        assert_eq!(c.lipschitz, 2f64.exp());
        assert_eq!(c.strong_convexity, (-2f64).exp());
        let mv = Disutility::MeanVariance.constants(-0.5, 1.0);
        assert_eq!((mv.lipschitz, mv.strong_convexity), (2.0, 1.0));
        assert_eq!(Disutility::MeanVariance.constants(-3.0, 1.0).strong_convexity, 0.0);
        assert_eq!(Disutility::cvar(0.25).constants(-1.0, 1.0).lipschitz, 4.0);
    }
}
