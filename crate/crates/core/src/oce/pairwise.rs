use std::fmt;

use serde::{Deserialize, Serialize};

/// Nondecreasing pairwise loss `ℓ` applied to a score difference
/// `Δ = s(x, y′) − s(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseLoss {
    Linear,
    Exponential,
    SoftPlus,
    SquaredHinge,
}

/// Lipschitz constant `G` and range bound `M` on `[−2B, 2B]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConstants {
    pub bound: f64,
    pub lipschitz: f64,
    pub range: f64,
}

impl PairwiseLoss {
    pub const ALL: [PairwiseLoss; 4] = [
        PairwiseLoss::Linear,
        PairwiseLoss::Exponential,
        PairwiseLoss::SoftPlus,
        PairwiseLoss::SquaredHinge,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PairwiseLoss::Linear => "linear",
            PairwiseLoss::Exponential => "exponential",
            PairwiseLoss::SoftPlus => "softplus",
            PairwiseLoss::SquaredHinge => "squared_hinge",
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            PairwiseLoss::Linear => t,
            PairwiseLoss::Exponential => t.exp(),
            PairwiseLoss::SoftPlus => softplus(t),
            PairwiseLoss::SquaredHinge => {
                let h = (1.0 + t).max(0.0);
                h * h
            }
        }
    }

    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            PairwiseLoss::Linear => 1.0,
            PairwiseLoss::Exponential => t.exp(),
            PairwiseLoss::SoftPlus => sigmoid(t),
            PairwiseLoss::SquaredHinge => 2.0 * (1.0 + t).max(0.0),
        }
    }

    /// Constants on `[−2B, 2B]`. Every variant is convex and nondecreasing,
    /// so `G = ℓ′(2B)` and `M = max(|ℓ(−2B)|, |ℓ(2B)|)`.
    pub fn constants(&self, bound: f64) -> LossConstants {
        assert!(bound >= 0.0);
        let edge = 2.0 * bound;
        LossConstants {
            bound,
            lipschitz: self.derivative(edge),
            range: self.eval(-edge).abs().max(self.eval(edge).abs()),
        }
    }
}

impl fmt::Display for PairwiseLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certified_constants_hold_on_grid() {
        for loss in PairwiseLoss::ALL {
            for bound in [0.5, 1.0, 3.0] {
                let c = loss.constants(bound);
                let grid: Vec<f64> = (0..=400).map(|i| -2.0 * bound + i as f64 * bound / 100.0).collect();
                for w in grid.windows(2) {
                    let (a, b) = (loss.eval(w[0]), loss.eval(w[1]));
                    assert!(b >= a, "{loss} not nondecreasing");
                    assert!(a.abs() <= c.range * (1.0 + 1e-12));
                    assert!((b - a).abs() <= c.lipschitz * (w[1] - w[0]) * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        for loss in PairwiseLoss::ALL {
            for t in [-1.7, -0.4, 0.0, 0.3, 2.2] {
                let h = 1e-6;
                let fd = (loss.eval(t + h) - loss.eval(t - h)) / (2.0 * h);
                assert!((fd - loss.derivative(t)).abs() < 1e-6, "{loss} at {t}");
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((PairwiseLoss::SoftPlus.eval(800.0) - 800.0).abs() < 1e-12);
        assert!(PairwiseLoss::SoftPlus.eval(-800.0) >= 0.0);
        assert!((PairwiseLoss::SoftPlus.eval(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
