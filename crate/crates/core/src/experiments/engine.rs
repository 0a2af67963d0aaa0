//! Shared Monte-Carlo machinery: precomputed scorer tables and per-trial draws.

use serde::{Deserialize, Serialize};

use crate::numeric::mean_and_se;
use crate::probspace::ContrastiveProblem;
use crate::rng::CounterRng;
use crate::scorer::Scorer;
use crate::table::Table;

use super::sampling::ProblemSampler;

/// How many anchors or negatives to draw; `Exact` takes the full expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSize {
    Exact,
    Draws(usize),
}

/// Per-anchor independent negatives or one shared list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Scrl,
    Sscrl,
}

/// Mean with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let (mean, se) = mean_and_se(xs);
        Self { mean, se }
    }

    pub fn zero() -> Self {
        Self { mean: 0.0, se: 0.0 }
    }

    /// `se / |mean|`; infinite for a zero mean with positive error.
    pub fn relative_se(&self) -> f64 {
        if self.se == 0.0 {
            0.0
        } else {
            self.se / self.mean.abs()
        }
    }
}

/// A scorer prepared for repeated log-mean-exp evaluation.
pub(crate) struct Prepared {
    tau: f64,
    scores: Table,
    /// Row maxima of `s/τ`.
    shift: Vec<f64>,
    /// `exp(s/τ − shift)`.
    tilt: Table,
    /// Exact `τ log E_{p⁻} exp(s/τ)` per anchor.
    exact_lse: Vec<f64>,
    /// Exact `E_{p⁻} exp(s/τ − shift)` per anchor.
    exact_mean: Vec<f64>,
    population: f64,
}

impl Prepared {
    pub(crate) fn new(problem: &ContrastiveProblem, scorer: &Scorer) -> Self {
        let tau = problem.temperature();
        let scores = scorer.to_table();
        let (nx, ny) = (scores.rows(), scores.cols());
        let shift: Vec<f64> = (0..nx)
            .map(|x| scores.row(x).iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s / tau)))
            .collect();
        let tilt = Table::from_fn(nx, ny, |x, y| (scores.get(x, y) / tau - shift[x]).exp());
        let exact_mean: Vec<f64> = (0..nx)
            .map(|x| tilt.row(x).iter().zip(problem.neg_row(x)).map(|(e, p)| e * p).sum())
            .collect();
        let exact_lse: Vec<f64> = (0..nx).map(|x| tau * (shift[x] + exact_mean[x].ln())).collect();
        let anchor_value: Vec<f64> = (0..nx)
            .map(|x| {
                let pos_mean: f64 = scores.row(x).iter().zip(problem.pos_row(x)).map(|(s, p)| s * p).sum();
                exact_lse[x] - pos_mean
            })
            .collect();
        let population = anchor_value.iter().zip(problem.anchor_marginal()).map(|(v, p)| v * p).sum();
        Self {
            tau,
            scores,
            shift,
            tilt,
            exact_lse,
            exact_mean,
            population,
        }
    }

    pub(crate) fn population(&self) -> f64 {
        self.population
    }

    /// `h(x, y) = τ log E_{p⁻} exp(s/τ) − s(x, y)`.
    pub(crate) fn pair_value(&self, x: usize, y: usize) -> f64 {
        self.exact_lse[x] - self.scores.get(x, y)
    }

    /// Sample mean of `exp(s/τ − shift)` over a negative list.
    fn sample_mean(&self, x: usize, negatives: &[usize]) -> f64 {
        let row = self.tilt.row(x);
        negatives.iter().map(|&y| row[y]).sum::<f64>() / negatives.len() as f64
    }

    /// `τ log (1/m) Σ_j exp(s(x, y′_j)/τ)`.
    pub(crate) fn sample_lse(&self, x: usize, negatives: &[usize]) -> f64 {
        self.tau * (self.shift[x] + self.sample_mean(x, negatives).ln())
    }

    /// Signed inner error at one anchor and its control-variate companion
    /// `τ(u − 1 − log u)` with `u` the sample-to-exact ratio of mean exponentials.
    /// Both have the same expectation; the second is nonnegative term by term.
    pub(crate) fn inner_error(&self, x: usize, negatives: &[usize]) -> (f64, f64) {
        let d = (self.sample_mean(x, negatives) - self.exact_mean[x]) / self.exact_mean[x];
        let log_u = d.ln_1p();
        (-self.tau * log_u, self.tau * (d - log_u))
    }
}

/// Negative draws of one trial.
pub(crate) enum Negatives {
    Exact,
    /// `lists[i]` belongs to pair `i`.
    PerPair(Vec<Vec<usize>>),
    /// `lists[x]` belongs to every pair anchored at `x`.
    PerAnchor(Vec<Vec<usize>>),
    Shared(Vec<usize>),
}

/// Pairs `(x, y, weight)` and negatives of one trial.
pub(crate) struct Draw {
    pub(crate) pairs: Vec<(usize, usize, f64)>,
    pub(crate) negatives: Negatives,
}

pub(crate) fn exact_pairs(problem: &ContrastiveProblem) -> Vec<(usize, usize, f64)> {
    let mut pairs = Vec::new();
    for x in 0..problem.anchor_size() {
        let px = problem.anchor_marginal()[x];
        for (y, &p) in problem.pos_row(x).iter().enumerate() {
            if px * p > 0.0 {
                pairs.push((x, y, px * p));
            }
        }
    }
    pairs
}

pub(crate) fn draw_pairs(sampler: &ProblemSampler, n: usize, rng: &mut CounterRng) -> Vec<(usize, usize, f64)> {
    let w = 1.0 / n as f64;
    (0..n)
        .map(|_| {
            let (x, y) = sampler.pair(rng);
            (x, y, w)
        })
        .collect()
}

pub(crate) fn draw_list(sampler: &ProblemSampler, x: usize, m: usize, rng: &mut CounterRng) -> Vec<usize> {
    (0..m).map(|_| sampler.negative(x, rng)).collect()
}

impl Draw {
    /// Draws pairs from `pair_rng` and negatives from `neg_rng`.
    pub(crate) fn new(
        problem: &ContrastiveProblem,
        sampler: &ProblemSampler,
        n: SampleSize,
        m: SampleSize,
        regime: Regime,
        pair_rng: &mut CounterRng,
        neg_rng: &mut CounterRng,
    ) -> Self {
        let pairs = match n {
            SampleSize::Exact => exact_pairs(problem),
            SampleSize::Draws(n) => draw_pairs(sampler, n, pair_rng),
        };
        let negatives = match (m, regime, n) {
            (SampleSize::Exact, _, _) => Negatives::Exact,
            (SampleSize::Draws(m), Regime::Sscrl, _) => Negatives::Shared(draw_list(sampler, 0, m, neg_rng)),
            (SampleSize::Draws(m), Regime::Scrl, SampleSize::Exact) => Negatives::PerAnchor(
                (0..problem.anchor_size()).map(|x| draw_list(sampler, x, m, neg_rng)).collect(),
            ),
            (SampleSize::Draws(m), Regime::Scrl, SampleSize::Draws(_)) => {
                Negatives::PerPair(pairs.iter().map(|&(x, _, _)| draw_list(sampler, x, m, neg_rng)).collect())
            }
        };
        Self { pairs, negatives }
    }

    /// Empirical risk `Σ_i w_i (τ log mean_j exp(s(x_i, y′_j)/τ) − s(x_i, y_i))`.
    pub(crate) fn empirical(&self, prep: &Prepared) -> f64 {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, &(x, y, w))| {
                let lse = match &self.negatives {
                    Negatives::Exact => prep.exact_lse[x],
                    Negatives::PerPair(lists) => prep.sample_lse(x, &lists[i]),
                    Negatives::PerAnchor(lists) => prep.sample_lse(x, &lists[x]),
                    Negatives::Shared(list) => prep.sample_lse(x, list),
                };
                w * (lse - prep.scores.get(x, y))
            })
            .sum()
    }

    /// Outer average with exact inner values.
    pub(crate) fn outer(&self, prep: &Prepared) -> f64 {
        self.pairs.iter().map(|&(x, y, w)| w * prep.pair_value(x, y)).sum()
    }
}
