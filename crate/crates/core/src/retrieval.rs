//! The AUC-type retrieval criterion `E(s)`, its supremum `E*`, the maximizer
//! characterization, the calibration inequality and the zero-shot posterior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oce::{Disutility, PairwiseLoss};
use crate::probspace::{ClassStructure, ContrastiveProblem};
use crate::risks::{optimal_risk, population_oce_risk, population_risk};
use crate::scorer::Scorer;

/// Score differences at most this large in magnitude count as ties.
pub const TIE_TOL: f64 = 1e-12;

/// `E(s) = P(s(x,y) > s(x,y′)) + ½ P(s(x,y) = s(x,y′))` with `y ∼ p⁺`, `y′ ∼ p⁻`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucBreakdown {
    pub strict_win: f64,
    pub tie: f64,
    pub strict_loss: f64,
    pub score: f64,
}

pub fn auc_score(problem: &ContrastiveProblem, scorer: &Scorer) -> Result<AucBreakdown> {
    scorer.check_against(problem)?;
    let ny = problem.item_size();
    let (mut win, mut tie, mut loss) = (0.0, 0.0, 0.0);
    for x in 0..problem.anchor_size() {
        let px = problem.anchor_marginal()[x];
        if px == 0.0 {
            continue;
        }
        let row: Vec<f64> = (0..ny).map(|y| scorer.score(x, y)).collect();
        let (pos, neg) = (problem.pos_row(x), problem.neg_row(x));
        let (mut w, mut t, mut l) = (0.0, 0.0, 0.0);
        for y in (0..ny).filter(|&y| pos[y] > 0.0) {
            for y2 in (0..ny).filter(|&y2| neg[y2] > 0.0) {
                let mass = pos[y] * neg[y2];
                let d = row[y] - row[y2];
                if d.abs() <= TIE_TOL {
                    t += mass;
                } else if d > 0.0 {
                    w += mass;
                } else {
                    l += mass;
                }
            }
        }
        win += px * w;
        tie += px * t;
        loss += px * l;
    }
    Ok(AucBreakdown {
        strict_win: win,
        tie,
        strict_loss: loss,
        score: win + 0.5 * tie,
    })
}

/// `E* = ¼ E_x E_{y,y′∼p⁻}[r(y) + r(y′) + |r(y) − r(y′)|]`.
pub fn auc_optimum(problem: &ContrastiveProblem) -> f64 {
    let ny = problem.item_size();
    let mut total = 0.0;
    for x in 0..problem.anchor_size() {
        let r = problem.density_ratio(x);
        let neg = problem.neg_row(x);
        let mut acc = 0.0;
        for y in 0..ny {
            for y2 in 0..ny {
                acc += neg[y] * neg[y2] * (r[y] + r[y2] + (r[y] - r[y2]).abs());
            }
        }
        total += problem.anchor_marginal()[x] * 0.25 * acc;
    }
    total
}

/// Outcome of the concordance check; `violation` is the first offending `(x, y, y′)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaximizerCheck {
    pub is_maximizer: bool,
    pub violation: Option<(usize, usize, usize)>,
}

/// Whether the scorer orders every pair of negative-support items with
/// distinct density ratios (`|r − r′| > tol`) strictly concordantly
/// (`(r − r′)(s − s′) > 0` with `|s − s′| > tol`).
pub fn is_auc_maximizer(problem: &ContrastiveProblem, scorer: &Scorer, tol: f64) -> Result<MaximizerCheck> {
    scorer.check_against(problem)?;
    let ny = problem.item_size();
    for x in 0..problem.anchor_size() {
        if problem.anchor_marginal()[x] == 0.0 {
            continue;
        }
        let r = problem.density_ratio(x);
        let neg = problem.neg_row(x);
        for y in (0..ny).filter(|&y| neg[y] > 0.0) {
            for y2 in (y + 1..ny).filter(|&y2| neg[y2] > 0.0) {
                let dr = r[y] - r[y2];
                if dr.abs() <= tol {
                    continue;
                }
                let ds = scorer.score(x, y) - scorer.score(x, y2);
                if ds.abs() <= tol || dr * ds <= 0.0 {
                    return Ok(MaximizerCheck {
                        is_maximizer: false,
                        violation: Some((x, y, y2)),
                    });
                }
            }
        }
    }
    Ok(MaximizerCheck {
        is_maximizer: true,
        violation: None,
    })
}

/// `E* − E(s)` against `√(2/τ · (L(s) − L*))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

pub fn calibration_bound(problem: &ContrastiveProblem, scorer: &Scorer) -> Result<CalibrationCheck> {
    let lhs = auc_optimum(problem) - auc_score(problem, scorer)?.score;
    let excess = population_risk(problem, scorer)?.value - optimal_risk(problem);
    let rhs = (2.0 / problem.temperature() * excess.max(0.0)).sqrt();
    Ok(CalibrationCheck {
        lhs,
        rhs,
        slack: rhs - lhs,
    })
}

/// Retrieval suboptimality next to the `φ,ℓ` excess over a reference risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralExcess {
    pub lhs: f64,
    pub excess_oce: f64,
}

/// `reference_risk` is the smallest `L^{φ,ℓ}` known for the problem, typically
/// that of a converged trainer run.
pub fn excess_bounds_general(
    problem: &ContrastiveProblem,
    scorer: &Scorer,
    phi: Disutility,
    ell: PairwiseLoss,
    reference_risk: f64,
) -> Result<GeneralExcess> {
    let lhs = auc_optimum(problem) - auc_score(problem, scorer)?.score;
    let risk = population_oce_risk(problem, scorer, phi, ell)?.value;
    Ok(GeneralExcess {
        lhs,
        excess_oce: risk - reference_risk,
    })
}

/// Class posterior at one anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotPosterior {
    /// `E_{y∼D(c)}[p_Y(y) e^{s(x,y)/τ}] / E_{y∼p_Y}[e^{s(x,y)/τ}]`.
    pub raw: Vec<f64>,
    /// `raw` rescaled to sum to one.
    pub normalized: Vec<f64>,
}

/// Zero-shot class posterior, with `p_Y` read from the negative row at `x`.
pub fn zero_shot_posterior(
    problem: &ContrastiveProblem,
    classes: &ClassStructure,
    scorer: &Scorer,
    x: usize,
) -> Result<ZeroShotPosterior> {
    scorer.check_against(problem)?;
    let ny = problem.item_size();
    if classes.item_size() != ny {
        return Err(Error::DimensionMismatch(format!(
            "classes live on {} items, problem on {ny}",
            classes.item_size()
        )));
    }
    if x >= problem.anchor_size() {
        return Err(Error::DimensionMismatch(format!("anchor {x} out of range")));
    }
    let tau = problem.temperature();
    let p_y = problem.neg_row(x);
    let scores: Vec<f64> = (0..ny).map(|y| scorer.score(x, y) / tau).collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tilt: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let denominator: f64 = p_y.iter().zip(&tilt).map(|(p, e)| p * e).sum();
    let raw: Vec<f64> = (0..classes.class_count())
        .map(|c| {
            let d = classes.item_dist(c);
            (0..ny).map(|y| d[y] * p_y[y] * tilt[y]).sum::<f64>() / denominator
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let normalized = raw.iter().map(|v| v / total).collect();
    Ok(ZeroShotPosterior { raw, normalized })
}
