//! Inner/outer error decomposition, scaling sweeps and the generalization gap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probspace::ContrastiveProblem;
use crate::rng::{tags, CounterRng};
use crate::scorer::Scorer;

use super::engine::{draw_list, draw_pairs, Draw, Estimate, Prepared, Regime, SampleSize};
use super::sampling::ProblemSampler;

/// Minimum trial count for a decomposition.
pub const MIN_TRIALS: usize = 100;

/// Generalization gap of one scorer split into inner (finite negatives) and
/// outer (finite anchors) parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub population: f64,
    /// `E|L − L̂|` with both `n` and `m` sampled.
    pub total_gap: Estimate,
    /// `E[L − L̂]`.
    pub signed_gap: Estimate,
    /// `L − E L̂` with the outer expectation exact; plain estimator.
    pub inner_bias: Estimate,
    /// Same expectation through the nonnegative control-variate estimator.
    pub inner_bias_cv: Estimate,
    /// `E|L − L̂|` with the outer expectation exact.
    pub inner_mad: Estimate,
    /// `E|L − Ō|` where `Ō` averages exact per-pair values over the drawn pairs.
    pub outer: Estimate,
    /// `E|Ō − L̂|` on the same draws as `total_gap`, so `total ≤ coupled_inner + outer`.
    pub coupled_inner: Estimate,
    pub trials: usize,
}

fn check_regime(problem: &ContrastiveProblem, regime: Regime) -> Result<()> {
    if regime == Regime::Sscrl {
        let spread = problem.negative_row_spread();
        if spread > 1e-12 {
            return Err(Error::HeterogeneousNegatives(spread));
        }
    }
    Ok(())
}

fn check_size(size: SampleSize, what: &str) -> Result<()> {
    if size == SampleSize::Draws(0) {
        return Err(Error::InvalidArgument(format!("{what} must be positive")));
    }
    Ok(())
}

/// Inner error with exact outer expectation: `(plain, control variate)`.
fn inner_trial(problem: &ContrastiveProblem, prep: &Prepared, sampler: &ProblemSampler, m: SampleSize, regime: Regime, rng: &mut CounterRng) -> (f64, f64) {
    let SampleSize::Draws(m) = m else {
        return (0.0, 0.0);
    };
    let shared = (regime == Regime::Sscrl).then(|| draw_list(sampler, 0, m, rng));
    let (mut plain, mut cv) = (0.0, 0.0);
    for (x, &px) in problem.anchor_marginal().iter().enumerate() {
        let own;
        let list = match &shared {
            Some(list) => list,
            None => {
                own = draw_list(sampler, x, m, rng);
                &own
            }
        };
        if px > 0.0 {
            let (a, b) = prep.inner_error(x, list);
            plain += px * a;
            cv += px * b;
        }
    }
    (plain, cv)
}

pub fn inner_outer_decomposition(
    problem: &ContrastiveProblem,
    scorer: &Scorer,
    n: SampleSize,
    m: SampleSize,
    trials: usize,
    seed: u64,
    regime: Regime,
) -> Result<DecompositionReport> {
    scorer.check_against(problem)?;
    check_regime(problem, regime)?;
    check_size(n, "n")?;
    check_size(m, "m")?;
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("at least {MIN_TRIALS} trials required, got {trials}")));
    }
    let prep = Prepared::new(problem, scorer);
    let sampler = ProblemSampler::new(problem);
    let population = prep.population();
    let rows: Vec<[f64; 7]> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut pair_rng = CounterRng::tagged(seed, tags::TRIAL_PAIRS, t);
            let mut neg_rng = CounterRng::tagged(seed, tags::TRIAL_NEGATIVES, t);
            let draw = Draw::new(problem, &sampler, n, m, regime, &mut pair_rng, &mut neg_rng);
            let empirical = draw.empirical(&prep);
            let outer = draw.outer(&prep);
            let mut inner_rng = CounterRng::tagged(seed, tags::TRIAL_INNER, t);
            let (plain, cv) = inner_trial(problem, &prep, &sampler, m, regime, &mut inner_rng);
            [
                (population - empirical).abs(),
                population - empirical,
                plain,
                cv,
                plain.abs(),
                (population - outer).abs(),
                (outer - empirical).abs(),
            ]
        })
        .collect();
    let column = |k: usize| Estimate::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
    Ok(DecompositionReport {
        population,
        total_gap: column(0),
        signed_gap: column(1),
        inner_bias: column(2),
        inner_bias_cv: column(3),
        inner_mad: column(4),
        outer: column(5),
        coupled_inner: column(6),
        trials,
    })
}

/// Which error a scaling sweep measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// SCRL signed inner bias over `m`, outer exact.
    InnerMScrl,
    /// SSCRL signed inner bias over `m`, outer exact.
    InnerMSscrlBias,
    /// SSCRL mean absolute inner error over `m`, outer exact.
    InnerMSscrlMad,
    /// Mean absolute outer error over `n`, inner exact.
    OuterN,
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::InnerMScrl => "inner_m_scrl",
            Sweep::InnerMSscrlBias => "inner_m_sscrl_bias",
            Sweep::InnerMSscrlMad => "inner_m_sscrl_mad",
            Sweep::OuterN => "outer_n",
        }
    }

    pub fn parse(s: &str) -> Option<Sweep> {
        [Sweep::InnerMScrl, Sweep::InnerMSscrlBias, Sweep::InnerMSscrlMad, Sweep::OuterN]
            .into_iter()
            .find(|w| w.name() == s)
    }
}

/// Ordinary least squares of `log y` on `log x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `R² < 0.9`: the slope is reported but should not be read as a rate.
    pub inconclusive: bool,
}

pub const CONCLUSIVE_R2: f64 = 0.9;

impl SlopeFit {
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidArgument("slope fit needs at least two aligned points".into()));
        }
        if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument("slope fit needs positive finite values".into()));
        }
        let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
        let k = lx.len() as f64;
        let mx = lx.iter().sum::<f64>() / k;
        let my = ly.iter().sum::<f64>() / k;
        let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::InvalidArgument("slope fit needs distinct sweep values".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
        Ok(SlopeFit {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            slope,
            intercept,
            r_squared,
            inconclusive: r_squared < CONCLUSIVE_R2,
        })
    }
}

/// One grid point of a scaling sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingCell {
    pub sweep_var: usize,
    pub mean_err: f64,
    pub se: f64,
    /// Plain signed error (inner sweeps: `L − E L̂`; outer sweep: `L − Ō`).
    pub signed: Estimate,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub sweep: Sweep,
    pub cells: Vec<ScalingCell>,
    pub fit: SlopeFit,
}

/// Relative standard error above which a sweep is rejected.
pub const MAX_RELATIVE_SE: f64 = 0.1;

pub fn scaling_study(
    problem: &ContrastiveProblem,
    scorer: &Scorer,
    sweep: Sweep,
    grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ScalingReport> {
    scorer.check_against(problem)?;
    if grid.len() < 2 || grid.contains(&0) {
        return Err(Error::InvalidArgument("grid needs at least two positive values".into()));
    }
    if trials < 2 {
        return Err(Error::InvalidArgument("at least two trials required".into()));
    }
    let regime = match sweep {
        Sweep::InnerMScrl => Regime::Scrl,
        _ => Regime::Sscrl,
    };
    if sweep != Sweep::OuterN {
        check_regime(problem, regime)?;
    }
    let prep = Prepared::new(problem, scorer);
    let sampler = ProblemSampler::new(problem);
    let mut cells = Vec::with_capacity(grid.len());
    for (g, &value) in grid.iter().enumerate() {
        let rows: Vec<(f64, f64)> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let index = ((g as u64) << 32) | t;
                match sweep {
                    Sweep::OuterN => {
                        let mut rng = CounterRng::tagged(seed, tags::TRIAL_OUTER, index);
                        let pairs = draw_pairs(&sampler, value, &mut rng);
                        let outer: f64 = pairs.iter().map(|&(x, y, w)| w * prep.pair_value(x, y)).sum();
                        let signed = prep.population() - outer;
                        (signed.abs(), signed)
                    }
                    _ => {
                        let mut rng = CounterRng::tagged(seed, tags::TRIAL_INNER, index);
                        let (plain, cv) = inner_trial(problem, &prep, &sampler, SampleSize::Draws(value), regime, &mut rng);
                        match sweep {
                            Sweep::InnerMSscrlMad => (plain.abs(), plain),
                            _ => (cv, plain),
                        }
                    }
                }
            })
            .collect();
        let err = Estimate::from_samples(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
        let signed = Estimate::from_samples(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        if err.relative_se() > MAX_RELATIVE_SE {
            return Err(Error::InsufficientTrials {
                at: value as f64,
                rel_se: err.relative_se(),
            });
        }
        cells.push(ScalingCell {
            sweep_var: value,
            mean_err: err.mean,
            se: err.se,
            signed,
            trials,
        });
    }
    let xs: Vec<f64> = cells.iter().map(|c| c.sweep_var as f64).collect();
    let ys: Vec<f64> = cells.iter().map(|c| c.mean_err).collect();
    let fit = SlopeFit::fit(&xs, &ys)?;
    Ok(ScalingReport { sweep, cells, fit })
}

/// Worst-case gap over a finite hypothesis set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Mean over trials of `max_k |L(s_k) − L̂(s_k)|`.
    pub gap: Estimate,
    /// 10%, 50% and 90% quantiles of the per-trial maximum.
    pub quantiles: [f64; 3],
    /// Mean of `|L(s_k) − L̂(s_k)|` per hypothesis.
    pub per_hypothesis: Vec<Estimate>,
    pub trials: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn generalization_gap(
    problem: &ContrastiveProblem,
    hypotheses: &[Scorer],
    n: SampleSize,
    m: SampleSize,
    trials: usize,
    seed: u64,
    regime: Regime,
) -> Result<GapReport> {
    if hypotheses.is_empty() {
        return Err(Error::InvalidArgument("hypothesis set is empty".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial required".into()));
    }
    for h in hypotheses {
        h.check_against(problem)?;
    }
    check_regime(problem, regime)?;
    check_size(n, "n")?;
    check_size(m, "m")?;
    let preps: Vec<Prepared> = hypotheses.iter().map(|h| Prepared::new(problem, h)).collect();
    let sampler = ProblemSampler::new(problem);
    let rows: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut pair_rng = CounterRng::tagged(seed, tags::TRIAL_PAIRS, t);
            let mut neg_rng = CounterRng::tagged(seed, tags::TRIAL_NEGATIVES, t);
            let draw = Draw::new(problem, &sampler, n, m, regime, &mut pair_rng, &mut neg_rng);
            preps.iter().map(|p| (p.population() - draw.empirical(p)).abs()).collect()
        })
        .collect();
    let maxima: Vec<f64> = rows.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
    let mut sorted = maxima.clone();
    sorted.sort_by(f64::total_cmp);
    let per_hypothesis = (0..hypotheses.len())
        .map(|k| Estimate::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect();
    Ok(GapReport {
        gap: Estimate::from_samples(&maxima),
        quantiles: [quantile(&sorted, 0.1), quantile(&sorted, 0.5), quantile(&sorted, 0.9)],
        per_hypothesis,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Table;

    fn two_point() -> ContrastiveProblem {
        ContrastiveProblem::new(
            vec![1.0],
            Table::from_rows(&[[0.8, 0.2]]).unwrap(),
            Table::from_rows(&[[0.5, 0.5]]).unwrap(),
            1.0,
        )
        .unwrap()
    }

    fn tilted() -> Scorer {
        Scorer::tabular(Table::from_rows(&[[0.9, -0.4]]).unwrap())
    }

    #[test]
    fn exact_sizes_remove_their_error() {
        let p = two_point();
        let r = inner_outer_decomposition(&p, &tilted(), SampleSize::Draws(8), SampleSize::Exact, 200, 1, Regime::Scrl).unwrap();
        assert_eq!(r.inner_bias, Estimate::zero());
        assert_eq!(r.coupled_inner, Estimate::zero());
        let r = inner_outer_decomposition(&p, &tilted(), SampleSize::Exact, SampleSize::Draws(8), 200, 1, Regime::Scrl).unwrap();
        assert!(r.outer.mean.abs() < 1e-15);
    }

    #[test]
    fn triangle_inequality_holds_per_batch() {
        let p = ContrastiveProblem::random(3, 4, 9, 1e-3).unwrap();
        let s = Scorer::tabular(Table::from_fn(3, 4, |x, y| ((x + 2 * y) as f64).cos()));
        let r = inner_outer_decomposition(&p, &s, SampleSize::Draws(16), SampleSize::Draws(4), 300, 2, Regime::Scrl).unwrap();
        assert!(r.total_gap.mean <= r.coupled_inner.mean + r.outer.mean + 1e-12);
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let xs = [8.0, 16.0, 32.0, 64.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        let f = SlopeFit::fit(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12 && !f.inconclusive);
        assert!(SlopeFit::fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn noisy_rows_are_flagged_inconclusive() {
        let f = SlopeFit::fit(&[1.0, 2.0, 4.0, 8.0], &[1.0, 3.0, 0.5, 2.0]).unwrap();
        assert!(f.inconclusive);
    }

    #[test]
    fn gap_of_optimal_scorer_with_exact_sizes_is_zero() {
        let p = two_point();
        let opt = crate::risks::optimal_scorer(&p, &[0.0]).unwrap().scorer;
        let g = generalization_gap(&p, &[opt], SampleSize::Exact, SampleSize::Exact, 3, 0, Regime::Scrl).unwrap();
        assert!(g.gap.mean < 1e-15);
    }
}
