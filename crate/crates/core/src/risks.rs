//! Population and empirical contrastive risks.
//!
//! Every risk implemented here is a weighted sum over *anchor blocks*: an
//! anchor `x`, a distribution over positive items and a distribution over
//! negative items. The population risk has one block per anchor, the
//! empirical SCRL risk one block per drawn anchor with its own negatives, and
//! the SSCRL risk one block per drawn pair sharing one negative list.
//!
//! The per-(x, y) inner term is the OCE of `ℓ(Δ)` under the negative
//! distribution; for `(EntropyRisk, Linear)` it collapses to the log-sum-exp
//! `τ log E exp(Δ/τ)`, which [`Route::Auto`] evaluates directly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{ScrlSample, SscrlSample};
use crate::numeric::weighted_log_sum_exp;
use crate::oce::{solve_unchecked, Disutility, PairwiseLoss};
use crate::probspace::ContrastiveProblem;
use crate::scorer::Scorer;
use crate::table::Table;

/// Offset, in units of `τ`, below the smallest finite optimal score at which
/// zero-ratio items are placed.
pub const SENTINEL_OFFSET: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    Population,
    PopulationOce,
    ScrlEmpirical,
    SscrlEmpirical,
}

/// A risk together with its per-block contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskValue {
    pub kind: RiskKind,
    pub phi: String,
    pub ell: String,
    pub tau: f64,
    pub value: f64,
    /// One entry per anchor (population) or per drawn sample (empirical).
    pub contributions: Vec<f64>,
    /// Aggregation weights: the anchor marginal, or `1/n`.
    pub weights: Vec<f64>,
}

/// How the inner term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Closed-form log-sum-exp for `(EntropyRisk, Linear)`, OCE otherwise.
    Auto,
    /// Always through the one-dimensional OCE minimization.
    Oce,
}

/// One anchor with its positive and negative item distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorBlock {
    pub anchor: usize,
    pub weight: f64,
    /// `(item, probability)`; probabilities sum to 1.
    pub positives: Vec<(usize, f64)>,
    /// `(item, probability)`; repeats are allowed and probabilities sum to 1.
    pub negatives: Vec<(usize, f64)>,
}

/// A contrastive objective on an `|X| × |Y|` score table.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastObjective {
    anchor_size: usize,
    item_size: usize,
    tau: f64,
    blocks: Vec<AnchorBlock>,
}

fn support(row: &[f64]) -> Vec<(usize, f64)> {
    row.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, &p)| (i, p)).collect()
}

fn uniform(items: &[usize]) -> Vec<(usize, f64)> {
    let w = 1.0 / items.len() as f64;
    items.iter().map(|&y| (y, w)).collect()
}

impl ContrastObjective {
    pub fn from_blocks(anchor_size: usize, item_size: usize, tau: f64, blocks: Vec<AnchorBlock>) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidTemperature(tau));
        }
        for b in &blocks {
            if b.anchor >= anchor_size {
                return Err(Error::ShapeMismatch(format!("anchor {} out of range", b.anchor)));
            }
            for (part, name) in [(&b.positives, "positive"), (&b.negatives, "negative")] {
                if part.is_empty() {
                    return Err(Error::ShapeMismatch(format!("anchor block with no {name} items")));
                }
                if let Some(&(y, _)) = part.iter().find(|(y, _)| *y >= item_size) {
                    return Err(Error::ShapeMismatch(format!("{name} item {y} out of range")));
                }
                let total: f64 = part.iter().map(|(_, w)| w).sum();
                if part.iter().any(|&(_, w)| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::NotADistribution(format!("{name} weights of a block sum to {total}")));
                }
            }
        }
        Ok(Self {
            anchor_size,
            item_size,
            tau,
            blocks,
        })
    }

    /// The population objective: one block per anchor weighted by `p_X`.
    pub fn population(problem: &ContrastiveProblem) -> Self {
        let blocks = (0..problem.anchor_size())
            .map(|x| AnchorBlock {
                anchor: x,
                weight: problem.anchor_marginal()[x],
                positives: support(problem.pos_row(x)),
                negatives: support(problem.neg_row(x)),
            })
            .collect();
        Self {
            anchor_size: problem.anchor_size(),
            item_size: problem.item_size(),
            tau: problem.temperature(),
            blocks,
        }
    }

    /// Empirical SCRL objective: block `i` holds `(x_i, y_i)` and its own negatives.
    pub fn scrl(sample: &ScrlSample, anchor_size: usize, item_size: usize, tau: f64) -> Result<Self> {
        sample.check_shape(anchor_size, item_size)?;
        let w = 1.0 / sample.len() as f64;
        let blocks = (0..sample.len())
            .map(|i| AnchorBlock {
                anchor: sample.anchors[i],
                weight: w,
                positives: vec![(sample.positives[i], 1.0)],
                negatives: uniform(&sample.negatives[i]),
            })
            .collect();
        Self::from_blocks(anchor_size, item_size, tau, blocks)
    }

    /// Empirical SSCRL objective: every pair is contrasted with the shared negatives.
    pub fn sscrl(sample: &SscrlSample, anchor_size: usize, item_size: usize, tau: f64) -> Result<Self> {
        sample.check_shape(anchor_size, item_size)?;
        let w = 1.0 / sample.len() as f64;
        let negatives = uniform(&sample.negatives);
        let blocks = (0..sample.len())
            .map(|i| AnchorBlock {
                anchor: sample.anchors[i],
                weight: w,
                positives: vec![(sample.positives[i], 1.0)],
                negatives: negatives.clone(),
            })
            .collect();
        Self::from_blocks(anchor_size, item_size, tau, blocks)
    }

    pub fn anchor_size(&self) -> usize {
        self.anchor_size
    }

    pub fn item_size(&self) -> usize {
        self.item_size
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn blocks(&self) -> &[AnchorBlock] {
        &self.blocks
    }

    /// Equivalent objective with repeated negatives merged into histograms and
    /// blocks sharing an anchor and a negative distribution merged into one.
    /// The value and gradient are unchanged; contributions are not preserved.
    pub fn compact(&self) -> Self {
        let mut merged: Vec<AnchorBlock> = Vec::new();
        let mut index: BTreeMap<(usize, Vec<(usize, u64)>), usize> = BTreeMap::new();
        for b in self.blocks.iter().filter(|b| b.weight > 0.0) {
            let negatives = histogram(&b.negatives);
            let key = (b.anchor, negatives.iter().map(|&(y, w)| (y, w.to_bits())).collect());
            let slot = *index.entry(key).or_insert_with(|| {
                merged.push(AnchorBlock {
                    anchor: b.anchor,
                    weight: 0.0,
                    positives: Vec::new(),
                    negatives,
                });
                merged.len() - 1
            });
            let target = &mut merged[slot];
            target.weight += b.weight;
            target.positives.extend(b.positives.iter().map(|&(y, p)| (y, p * b.weight)));
        }
        for b in &mut merged {
            let total = b.weight;
            b.positives = histogram(&b.positives).into_iter().map(|(y, p)| (y, p / total)).collect();
        }
        Self {
            anchor_size: self.anchor_size,
            item_size: self.item_size,
            tau: self.tau,
            blocks: merged,
        }
    }

    fn check_scores(&self, scores: &Table) -> Result<()> {
        if scores.rows() != self.anchor_size || scores.cols() != self.item_size {
            return Err(Error::DimensionMismatch(format!(
                "scores are {}x{}, objective is {}x{}",
                scores.rows(),
                scores.cols(),
                self.anchor_size,
                self.item_size
            )));
        }
        if let Some(v) = scores.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("score {v}")));
        }
        Ok(())
    }

    /// Per-block contributions and their weighted total.
    pub fn evaluate(&self, scores: &Table, phi: Disutility, ell: PairwiseLoss, route: Route) -> Result<(f64, Vec<f64>)> {
        self.check_scores(scores)?;
        let closed_form = route == Route::Auto && is_log_sum_exp(phi, ell);
        let mut scratch = Scratch::default();
        let contributions: Vec<f64> = self
            .blocks
            .iter()
            .map(|b| {
                if closed_form {
                    lse_block(b, scores.row(b.anchor), self.tau, &mut scratch)
                } else {
                    oce_block(b, scores.row(b.anchor), phi, ell, self.tau, &mut scratch)
                }
            })
            .collect();
        let value = self.blocks.iter().zip(&contributions).map(|(b, c)| b.weight * c).sum();
        Ok((value, contributions))
    }

    /// Objective value.
    pub fn value(&self, scores: &Table, phi: Disutility, ell: PairwiseLoss) -> Result<f64> {
        Ok(self.evaluate(scores, phi, ell, Route::Auto)?.0)
    }

    /// Objective value and its gradient with respect to every score.
    ///
    /// For general `φ` the inner minimum is differentiated at its minimizer
    /// `μ*`, where the partial in `μ` vanishes.
    pub fn value_and_gradient(&self, scores: &Table, phi: Disutility, ell: PairwiseLoss) -> Result<(f64, Table)> {
        if !phi.is_smooth() {
            return Err(Error::NonSmoothDisutility(phi.name()));
        }
        self.check_scores(scores)?;
        let mut grad = Table::zeros(self.anchor_size, self.item_size);
        let mut scratch = Scratch::default();
        let mut value = 0.0;
        let closed_form = is_log_sum_exp(phi, ell);
        for b in &self.blocks {
            if b.weight == 0.0 {
                continue;
            }
            let row = scores.row(b.anchor);
            let g = grad.row_mut(b.anchor);
            value += b.weight
                * if closed_form {
                    lse_block_grad(b, row, self.tau, g, &mut scratch)
                } else {
                    oce_block_grad(b, row, phi, ell, self.tau, g, &mut scratch)
                };
        }
        Ok((value, grad))
    }
}

fn histogram(entries: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for &(y, w) in entries {
        *acc.entry(y).or_insert(0.0) += w;
    }
    acc.into_iter().filter(|&(_, w)| w > 0.0).collect()
}

fn is_log_sum_exp(phi: Disutility, ell: PairwiseLoss) -> bool {
    phi == Disutility::EntropyRisk && ell == PairwiseLoss::Linear
}

#[derive(Default)]
struct Scratch {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Scratch {
    fn load_negatives(&mut self, b: &AnchorBlock) {
        self.weights.clear();
        self.weights.extend(b.negatives.iter().map(|&(_, w)| w));
        self.values.resize(b.negatives.len(), 0.0);
    }
}

/// `τ log Σ_j w_j exp(s_j/τ)` over the negatives of a block.
fn negative_lse(b: &AnchorBlock, row: &[f64], tau: f64, scratch: &mut Scratch) -> f64 {
    scratch.load_negatives(b);
    for (v, &(y, _)) in scratch.values.iter_mut().zip(&b.negatives) {
        *v = row[y] / tau;
    }
    tau * weighted_log_sum_exp(&scratch.values, &scratch.weights)
}

fn lse_block(b: &AnchorBlock, row: &[f64], tau: f64, scratch: &mut Scratch) -> f64 {
    let lse = negative_lse(b, row, tau, scratch);
    b.positives.iter().map(|&(y, p)| p * (lse - row[y])).sum()
}

fn lse_block_grad(b: &AnchorBlock, row: &[f64], tau: f64, grad: &mut [f64], scratch: &mut Scratch) -> f64 {
    let lse = negative_lse(b, row, tau, scratch);
    for (&a, &(y, w)) in scratch.values.iter().zip(&b.negatives) {
        if w > 0.0 {
            grad[y] += b.weight * w * (a - lse / tau).exp();
        }
    }
    let mut value = 0.0;
    for &(y, p) in &b.positives {
        grad[y] -= b.weight * p;
        value += p * (lse - row[y]);
    }
    value
}

fn load_losses(b: &AnchorBlock, row: &[f64], pos: usize, ell: PairwiseLoss, scratch: &mut Scratch) {
    for (v, &(y, _)) in scratch.values.iter_mut().zip(&b.negatives) {
        *v = ell.eval(row[y] - row[pos]);
    }
}

fn oce_block(b: &AnchorBlock, row: &[f64], phi: Disutility, ell: PairwiseLoss, tau: f64, scratch: &mut Scratch) -> f64 {
    scratch.load_negatives(b);
    let mut total = 0.0;
    for &(y, p) in &b.positives {
        load_losses(b, row, y, ell, scratch);
        total += p * solve_unchecked(phi, &scratch.values, &scratch.weights, tau).value;
    }
    total
}

fn oce_block_grad(
    b: &AnchorBlock,
    row: &[f64],
    phi: Disutility,
    ell: PairwiseLoss,
    tau: f64,
    grad: &mut [f64],
    scratch: &mut Scratch,
) -> f64 {
    scratch.load_negatives(b);
    let mut total = 0.0;
    for &(y, p) in &b.positives {
        load_losses(b, row, y, ell, scratch);
        let r = solve_unchecked(phi, &scratch.values, &scratch.weights, tau);
        total += p * r.value;
        let mut outflow = 0.0;
        for (j, &(y_neg, w)) in b.negatives.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let d = w * phi.derivative((scratch.values[j] - r.minimizer) / tau) * ell.derivative(row[y_neg] - row[y]);
            grad[y_neg] += b.weight * p * d;
            outflow += d;
        }
        grad[y] -= b.weight * p * outflow;
    }
    total
}

fn risk_value(kind: RiskKind, phi: Disutility, ell: PairwiseLoss, tau: f64, objective: &ContrastObjective, scores: &Table, route: Route) -> Result<RiskValue> {
    let (value, contributions) = objective.evaluate(scores, phi, ell, route)?;
    Ok(RiskValue {
        kind,
        phi: phi.to_string(),
        ell: ell.to_string(),
        tau,
        value,
        contributions,
        weights: objective.blocks.iter().map(|b| b.weight).collect(),
    })
}

/// `L(s) = E_x E_{y∼p⁺} τ log E_{y′∼p⁻} exp(Δ/τ)` by exact enumeration.
pub fn population_risk(problem: &ContrastiveProblem, scorer: &Scorer) -> Result<RiskValue> {
    scorer.check_against(problem)?;
    let objective = ContrastObjective::population(problem);
    risk_value(
        RiskKind::Population,
        Disutility::EntropyRisk,
        PairwiseLoss::Linear,
        problem.temperature(),
        &objective,
        &scorer.to_table(),
        Route::Auto,
    )
}

/// `L^{φ,ℓ}(s) = E_x E_{y∼p⁺} OCE^φ_{y′∼p⁻}[ℓ(Δ)]`, each inner term by 1-D minimization.
pub fn population_oce_risk(problem: &ContrastiveProblem, scorer: &Scorer, phi: Disutility, ell: PairwiseLoss) -> Result<RiskValue> {
    scorer.check_against(problem)?;
    let objective = ContrastObjective::population(problem);
    risk_value(RiskKind::PopulationOce, phi, ell, problem.temperature(), &objective, &scorer.to_table(), Route::Oce)
}

/// `L* = τ E_x E_{y∼p⁺} log(p⁻/p⁺)`.
pub fn optimal_risk(problem: &ContrastiveProblem) -> f64 {
    let tau = problem.temperature();
    (0..problem.anchor_size())
        .map(|x| {
            let inner: f64 = problem
                .pos_row(x)
                .iter()
                .zip(problem.neg_row(x))
                .filter(|(&p, _)| p > 0.0)
                .map(|(&p, &q)| p * (q / p).ln())
                .sum();
            problem.anchor_marginal()[x] * tau * inner
        })
        .sum()
}

/// A member of the optimal family together with the cells whose ideal score is `−∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalScorer {
    pub scorer: Scorer,
    /// `(anchor, item)` cells with zero density ratio, scored at the sentinel.
    pub sentinel_cells: Vec<(usize, usize)>,
}

/// `s(x, y) = τ log r_x(y) + g(x)`.
///
/// Items with zero ratio sit [`SENTINEL_OFFSET`]·τ below the smallest finite
/// score of their anchor, which keeps the excess risk far below rounding.
pub fn optimal_scorer(problem: &ContrastiveProblem, gauge: &[f64]) -> Result<OptimalScorer> {
    let (nx, ny) = (problem.anchor_size(), problem.item_size());
    if gauge.len() != nx {
        return Err(Error::DimensionMismatch(format!("gauge has {} entries for {nx} anchors", gauge.len())));
    }
    let tau = problem.temperature();
    let mut scores = Table::zeros(nx, ny);
    let mut sentinel_cells = Vec::new();
    for x in 0..nx {
        let ratio = problem.density_ratio(x);
        let mut lowest = f64::INFINITY;
        for (y, &r) in ratio.iter().enumerate() {
            if r > 0.0 {
                let s = tau * r.ln() + gauge[x];
                scores.set(x, y, s);
                lowest = lowest.min(s);
            }
        }
        for (y, &r) in ratio.iter().enumerate() {
            if r <= 0.0 {
                scores.set(x, y, lowest - SENTINEL_OFFSET * tau);
                sentinel_cells.push((x, y));
            }
        }
    }
    Ok(OptimalScorer {
        scorer: Scorer::tabular(scores),
        sentinel_cells,
    })
}

/// Both sides of `L(s) − L* = τ E_x KL(p⁺_x ‖ q_x)` with `q_x ∝ p⁻_x exp(s/τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlExcess {
    pub excess: f64,
    pub kl_term: f64,
    pub deviation: f64,
}

pub fn kl_excess_identity(problem: &ContrastiveProblem, scorer: &Scorer) -> Result<KlExcess> {
    let excess = population_risk(problem, scorer)?.value - optimal_risk(problem);
    let tau = problem.temperature();
    let mut kl_term = 0.0;
    for x in 0..problem.anchor_size() {
        let (pos, neg) = (problem.pos_row(x), problem.neg_row(x));
        let scaled: Vec<f64> = (0..problem.item_size()).map(|y| scorer.score(x, y) / tau).collect();
        let log_norm = weighted_log_sum_exp(&scaled, neg);
        let kl: f64 = (0..problem.item_size())
            .filter(|&y| pos[y] > 0.0)
            .map(|y| pos[y] * (pos[y].ln() - (neg[y].ln() + scaled[y] - log_norm)))
            .sum();
        kl_term += problem.anchor_marginal()[x] * tau * kl;
    }
    Ok(KlExcess {
        excess,
        kl_term,
        deviation: (excess - kl_term).abs(),
    })
}

/// `(1/n) Σ_i OCE^φ` of `ℓ(Δ(x_i, y_i, y′_ij))` over each anchor's own negatives.
pub fn empirical_scrl_risk(sample: &ScrlSample, scorer: &Scorer, phi: Disutility, ell: PairwiseLoss, tau: f64) -> Result<RiskValue> {
    let objective = ContrastObjective::scrl(sample, scorer.anchor_size(), scorer.item_size(), tau)?;
    risk_value(RiskKind::ScrlEmpirical, phi, ell, tau, &objective, &scorer.to_table(), Route::Oce)
}

/// As [`empirical_scrl_risk`], with every anchor contrasted against the shared negatives.
pub fn empirical_sscrl_risk(sample: &SscrlSample, scorer: &Scorer, phi: Disutility, ell: PairwiseLoss, tau: f64) -> Result<RiskValue> {
    let objective = ContrastObjective::sscrl(sample, scorer.anchor_size(), scorer.item_size(), tau)?;
    risk_value(RiskKind::SscrlEmpirical, phi, ell, tau, &objective, &scorer.to_table(), Route::Oce)
}

/// `L(x→y) + L(y→x)`, the second direction scored by the transposed scorer.
pub fn symmetric_sscrl_risk(problem_xy: &ContrastiveProblem, problem_yx: &ContrastiveProblem, scorer: &Scorer) -> Result<f64> {
    if problem_yx.anchor_size() != problem_xy.item_size() || problem_yx.item_size() != problem_xy.anchor_size() {
        return Err(Error::DimensionMismatch(format!(
            "reverse problem is {}x{}, forward is {}x{}",
            problem_yx.anchor_size(),
            problem_yx.item_size(),
            problem_xy.anchor_size(),
            problem_xy.item_size()
        )));
    }
    let forward = population_risk(problem_xy, scorer)?.value;
    let backward = population_risk(problem_yx, &Scorer::tabular(scorer.to_table().transpose()))?.value;
    Ok(forward + backward)
}

/// Gradient of an objective with respect to every score `s(x, y)`.
pub fn risk_gradient(objective: &ContrastObjective, scorer: &Scorer, phi: Disutility, ell: PairwiseLoss) -> Result<Table> {
    Ok(objective.value_and_gradient(&scorer.to_table(), phi, ell)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::sample_scrl;

    fn two_point() -> ContrastiveProblem {
        ContrastiveProblem::new(
            vec![1.0],
            Table::from_rows(&[[0.8, 0.2]]).unwrap(),
            Table::from_rows(&[[0.5, 0.5]]).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn two_point_values() {
        let p = two_point();
        let oracle = 0.8 * 0.625f64.ln() + 0.2 * 2.5f64.ln();
        assert!((optimal_risk(&p) - oracle).abs() < 1e-15);
        assert!((oracle + 0.19274).abs() < 1e-5);
        let opt = optimal_scorer(&p, &[0.0]).unwrap();
        assert!(opt.sentinel_cells.is_empty());
        assert_eq!(opt.scorer.to_table().row(0), &[1.6f64.ln(), 0.4f64.ln()]);
        assert!((population_risk(&p, &opt.scorer).unwrap().value - oracle).abs() < 1e-12);
        assert_eq!(population_risk(&p, &Scorer::constant(1, 2, 3.0)).unwrap().value, 0.0);
    }

    #[test]
    fn kl_identity_on_constant_scorer() {
        let k = kl_excess_identity(&two_point(), &Scorer::constant(1, 2, 0.0)).unwrap();
        let kl = 0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln();
        assert!((k.excess - kl).abs() < 1e-12 && (k.kl_term - kl).abs() < 1e-12);
    }

    #[test]
    fn identity_linear_is_the_pairwise_mean() {
        let p = two_point();
        let s = Scorer::tabular(Table::from_rows(&[[0.3, -0.9]]).unwrap());
        let v = population_oce_risk(&p, &s, Disutility::Identity, PairwiseLoss::Linear).unwrap().value;
        // E_{y∼p⁺} E_{y′∼p⁻} (s(y′) − s(y))
        let oracle = 0.5 * (0.3 - 0.9) - (0.8 * 0.3 + 0.2 * -0.9);
        assert!((v - oracle).abs() < 1e-12);
    }

    #[test]
    fn zero_ratio_cells_are_flagged() {
        let p = ContrastiveProblem::new(
            vec![0.5, 0.5],
            Table::from_rows(&[[0.7, 0.3, 0.0, 0.0], [0.0, 0.5, 0.5, 0.0]]).unwrap(),
            Table::from_rows(&[[0.4, 0.4, 0.2, 0.0], [0.25, 0.25, 0.25, 0.25]]).unwrap(),
            0.7,
        )
        .unwrap();
        let opt = optimal_scorer(&p, &[1.0, -2.0]).unwrap();
        assert_eq!(opt.sentinel_cells, vec![(0, 2), (0, 3), (1, 0), (1, 3)]);
        let excess = population_risk(&p, &opt.scorer).unwrap().value - optimal_risk(&p);
        assert!(excess.abs() <= 1e-10, "{excess}");
    }

    #[test]
    fn sample_objective_compacts_without_changing_value() {
        let p = ContrastiveProblem::random(3, 5, 4, 1e-3).unwrap();
        let sample = sample_scrl(&p, 40, 6, 1).unwrap();
        let obj = ContrastObjective::scrl(&sample, 3, 5, p.temperature()).unwrap();
        let scores = Table::from_fn(3, 5, |x, y| ((x * 5 + y) as f64 * 0.37).sin());
        let compact = obj.compact();
        assert!(compact.blocks().len() <= obj.blocks().len());
        for (phi, ell) in [
            (Disutility::EntropyRisk, PairwiseLoss::Linear),
            (Disutility::MeanVariance, PairwiseLoss::SoftPlus),
        ] {
            let (a, ga) = obj.value_and_gradient(&scores, phi, ell).unwrap();
            let (b, gb) = compact.value_and_gradient(&scores, phi, ell).unwrap();
            assert!((a - b).abs() < 1e-12);
            for (u, v) in ga.as_slice().iter().zip(gb.as_slice()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cvar_gradients_are_refused() {
        let obj = ContrastObjective::population(&two_point());
        assert_eq!(
            obj.value_and_gradient(&Table::zeros(1, 2), Disutility::cvar(0.5), PairwiseLoss::Linear).unwrap_err(),
            Error::NonSmoothDisutility("cvar")
        );
    }
}
