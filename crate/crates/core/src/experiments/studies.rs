//! Calibration sweep, critical negative size and trained consistency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oce::{Disutility, PairwiseLoss};
use crate::probspace::ContrastiveProblem;
use crate::retrieval::{auc_optimum, auc_score, calibration_bound, is_auc_maximizer};
use crate::risks::{optimal_risk, optimal_scorer, AnchorBlock, ContrastObjective};
use crate::rng::{derive_seed, tags, CounterRng};
use crate::scorer::Scorer;
use crate::table::Table;
use crate::trainer::{minimize_objective, minimize_population, TrainConfig};

use super::engine::Estimate;
use super::sampling::sample_sscrl;

/// Probability floor of sweep problems.
pub const SWEEP_FLOOR: f64 = 1e-3;

/// One row of the calibration sweep; `scorer_seed` is `None` for optimal-scorer controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub problem_seed: u64,
    pub scorer_seed: Option<u64>,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSweep {
    pub rows: Vec<CalibrationRow>,
    pub min_slack: f64,
    pub median_slack: f64,
}

/// Random sweep problem: `|X| ∈ [1, 5]`, `|Y| ∈ [2, 8]`, floor [`SWEEP_FLOOR`].
pub fn sweep_problem(problem_seed: u64) -> Result<ContrastiveProblem> {
    let mut rng = CounterRng::tagged(problem_seed, tags::SWEEP, 0);
    let nx = 1 + rng.below(5) as usize;
    let ny = 2 + rng.below(7) as usize;
    ContrastiveProblem::random(nx, ny, problem_seed, SWEEP_FLOOR)
}

/// Tabular scorer with entries uniform in `[−3τ, 3τ]`.
pub fn random_scorer(anchor_size: usize, item_size: usize, tau: f64, scorer_seed: u64) -> Scorer {
    let mut rng = CounterRng::tagged(scorer_seed, tags::SCORER, 0);
    Scorer::tabular(Table::from_fn(anchor_size, item_size, |_, _| rng.uniform_in(-3.0 * tau, 3.0 * tau)))
}

pub fn calibration_sweep(problem_count: usize, scorer_count: usize, seed: u64, with_controls: bool) -> Result<CalibrationSweep> {
    if problem_count == 0 || scorer_count == 0 {
        return Err(Error::InvalidArgument("problem and scorer counts must be positive".into()));
    }
    let blocks: Vec<Vec<CalibrationRow>> = (0..problem_count as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<CalibrationRow>> {
            let problem_seed = derive_seed(seed, i);
            let problem = sweep_problem(problem_seed)?;
            let (nx, ny, tau) = (problem.anchor_size(), problem.item_size(), problem.temperature());
            let mut rows = Vec::with_capacity(scorer_count + 1);
            for j in 0..scorer_count as u64 {
                let scorer_seed = derive_seed(problem_seed, j + 1);
                let c = calibration_bound(&problem, &random_scorer(nx, ny, tau, scorer_seed))?;
                rows.push(CalibrationRow {
                    problem_seed,
                    scorer_seed: Some(scorer_seed),
                    lhs: c.lhs,
                    rhs: c.rhs,
                    slack: c.slack,
                });
            }
            if with_controls {
                let opt = optimal_scorer(&problem, &vec![0.0; nx])?.scorer;
                let c = calibration_bound(&problem, &opt)?;
                rows.push(CalibrationRow {
                    problem_seed,
                    scorer_seed: None,
                    lhs: c.lhs,
                    rhs: c.rhs,
                    slack: c.slack,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<CalibrationRow> = blocks.into_iter().flatten().collect();
    let mut slacks: Vec<f64> = rows.iter().filter(|r| r.scorer_seed.is_some()).map(|r| r.slack).collect();
    slacks.sort_by(f64::total_cmp);
    let median_slack = if slacks.len() % 2 == 1 {
        slacks[slacks.len() / 2]
    } else {
        0.5 * (slacks[slacks.len() / 2 - 1] + slacks[slacks.len() / 2])
    };
    Ok(CalibrationSweep {
        min_slack: slacks[0],
        median_slack,
        rows,
    })
}

/// Settings of the critical negative size study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalMConfig {
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub replicates: usize,
    /// Saturation threshold on mean AUC.
    pub delta: f64,
    pub train: TrainConfig,
    pub seed: u64,
}

/// Default saturation threshold.
pub const DEFAULT_DELTA: f64 = 0.005;

impl CriticalMConfig {
    pub fn new(n_grid: Vec<usize>, m_grid: Vec<usize>, seed: u64) -> Self {
        Self {
            n_grid,
            m_grid,
            replicates: 20,
            delta: DEFAULT_DELTA,
            train: critical_train_config(),
            seed,
        }
    }
}

/// Trainer settings for empirical SSCRL fits in the critical-m study.
pub fn critical_train_config() -> TrainConfig {
    TrainConfig {
        max_iter: 3000,
        grad_tol: 1e-8,
        trace_stride: 1000,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalCell {
    pub n: usize,
    pub m: usize,
    pub mean_auc: f64,
    pub se: f64,
    pub is_mstar: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub n: usize,
    /// Best mean AUC over the `m` grid.
    pub plateau_auc: f64,
    pub m_star: usize,
    /// Mean AUC when training against the exact negative distribution.
    pub exact_auc: Estimate,
    pub at_least_sqrt_n: bool,
    pub at_most_n: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalMReport {
    pub cells: Vec<CriticalCell>,
    pub plateaus: Vec<Plateau>,
    pub auc_optimum: f64,
    pub delta: f64,
    pub replicates: usize,
}

impl CriticalMReport {
    pub fn m_star_nondecreasing(&self) -> bool {
        self.plateaus.windows(2).all(|w| w[0].m_star <= w[1].m_star)
    }
}

/// Pair blocks of an SSCRL sample against a fixed negative distribution.
fn pair_objective(
    problem: &ContrastiveProblem,
    anchors: &[usize],
    positives: &[usize],
    negatives: Vec<(usize, f64)>,
) -> Result<ContrastObjective> {
    let w = 1.0 / anchors.len() as f64;
    let blocks = anchors
        .iter()
        .zip(positives)
        .map(|(&x, &y)| AnchorBlock {
            anchor: x,
            weight: w,
            positives: vec![(y, 1.0)],
            negatives: negatives.clone(),
        })
        .collect();
    Ok(ContrastObjective::from_blocks(problem.anchor_size(), problem.item_size(), problem.temperature(), blocks)?.compact())
}

/// Train on one sample prefix and score the result on the population.
fn trained_auc(problem: &ContrastiveProblem, objective: &ContrastObjective, config: &TrainConfig) -> Result<f64> {
    let (scorer, _) = minimize_objective(objective, Disutility::EntropyRisk, PairwiseLoss::Linear, config, None)?;
    Ok(auc_score(problem, &scorer)?.score)
}

/// AUCs of one `(n, replicate)` job: one per `m`, then the exact-negative fit.
fn critical_job(problem: &ContrastiveProblem, cfg: &CriticalMConfig, n: usize, r: usize) -> Result<Vec<f64>> {
    let m_max = *cfg.m_grid.iter().max().expect("nonempty grid");
    let seed = derive_seed(derive_seed(cfg.seed, n as u64), r as u64);
    let sample = sample_sscrl(problem, n, m_max, seed)?;
    let mut out = Vec::with_capacity(cfg.m_grid.len() + 1);
    for &m in &cfg.m_grid {
        let w = 1.0 / m as f64;
        let negatives = sample.negatives[..m].iter().map(|&y| (y, w)).collect();
        let obj = pair_objective(problem, &sample.anchors, &sample.positives, negatives)?;
        out.push(trained_auc(problem, &obj, &cfg.train)?);
    }
    let exact = problem.neg_row(0).iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(y, &p)| (y, p)).collect();
    let obj = pair_objective(problem, &sample.anchors, &sample.positives, exact)?;
    out.push(trained_auc(problem, &obj, &cfg.train)?);
    Ok(out)
}

/// Mean downstream AUC over an `(n, m)` grid of SSCRL fits and the smallest
/// `m` per `n` whose mean is within `δ` of that row's best.
pub fn critical_m_study(problem: &ContrastiveProblem, cfg: &CriticalMConfig) -> Result<CriticalMReport> {
    if cfg.n_grid.is_empty() || cfg.m_grid.is_empty() || cfg.n_grid.contains(&0) || cfg.m_grid.contains(&0) {
        return Err(Error::InvalidArgument("n and m grids must be nonempty and positive".into()));
    }
    if cfg.replicates < 2 {
        return Err(Error::InvalidArgument("at least two replicates required".into()));
    }
    let spread = problem.negative_row_spread();
    if spread > 1e-12 {
        return Err(Error::HeterogeneousNegatives(spread));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r)))
        .collect();
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(n, r)| critical_job(problem, cfg, n, r))
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    let mut plateaus = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let rows = &results[i * cfg.replicates..(i + 1) * cfg.replicates];
        let per_m: Vec<Estimate> = (0..=cfg.m_grid.len())
            .map(|k| Estimate::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
            .collect();
        let exact_auc = per_m[cfg.m_grid.len()];
        let best = per_m[..cfg.m_grid.len()].iter().map(|e| e.mean).fold(f64::NEG_INFINITY, f64::max);
        let star = per_m.iter().position(|e| e.mean >= best - cfg.delta).expect("best is attained");
        let m_star = cfg.m_grid[star];
        for (k, &m) in cfg.m_grid.iter().enumerate() {
            cells.push(CriticalCell {
                n,
                m,
                mean_auc: per_m[k].mean,
                se: per_m[k].se,
                is_mstar: k == star,
            });
        }
        plateaus.push(Plateau {
            n,
            plateau_auc: best,
            m_star,
            exact_auc,
            at_least_sqrt_n: (m_star as f64) >= (n as f64).sqrt(),
            at_most_n: m_star <= n,
        });
    }
    Ok(CriticalMReport {
        cells,
        plateaus,
        auc_optimum: auc_optimum(problem),
        delta: cfg.delta,
        replicates: cfg.replicates,
    })
}

/// Contrast level of the shipped critical-m family.
pub const CRITICAL_CONTRAST: f64 = 0.2;

/// Synthetic self-supervised family for the critical-m study.
///
/// Uniform marginals with `p(x, y) ∝ 1 ± ε` in a checkerboard, so every
/// density ratio is `1 ± ε`. Two well separated ratio levels make the AUC
/// loss from noisy plug-in ratios decay like a Gaussian tail in the noise
/// scale, which is what lets the saturation point in `m` move with `n`.
/// Both sizes must be even so that every row and column balances.
pub fn critical_family(anchor_size: usize, item_size: usize, contrast: f64, temperature: f64) -> Result<ContrastiveProblem> {
    if anchor_size == 0 || item_size == 0 || anchor_size % 2 != 0 || item_size % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "critical family needs even positive sizes, got {anchor_size}x{item_size}"
        )));
    }
    if !(contrast > 0.0 && contrast < 1.0) {
        return Err(Error::InvalidArgument(format!("contrast must lie in (0, 1), got {contrast}")));
    }
    let cells = (anchor_size * item_size) as f64;
    let joint = Table::from_fn(anchor_size, item_size, |x, y| {
        let sign = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
        (1.0 + contrast * sign) / cells
    });
    ContrastiveProblem::from_joint(&joint, temperature)
}

/// One traced iterate of a consistency run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub iter: usize,
    pub risk: f64,
    /// `L(s_k) − L*` for the log-sum-exp risk; `L^{φ,ℓ}(s_k) −` final risk otherwise.
    pub excess: f64,
    pub auc_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub phi: String,
    pub ell: String,
    pub points: Vec<ConsistencyPoint>,
    pub auc_optimum: f64,
    pub final_auc: f64,
    pub final_excess: f64,
    /// `true` when the excess is measured against the exact optimum `L*`.
    pub exact_reference: bool,
    pub is_maximizer: bool,
    pub converged: bool,
}

/// Trains on the population risk from zero and pairs the excess risk with `E* − E`.
pub fn consistency_experiment(
    problem: &ContrastiveProblem,
    phi: Disutility,
    ell: PairwiseLoss,
    config: &TrainConfig,
    init: Option<&Scorer>,
) -> Result<ConsistencyReport> {
    let zero = Scorer::constant(problem.anchor_size(), problem.item_size(), 0.0);
    let config = TrainConfig {
        record_auc: true,
        ..config.clone()
    };
    let (scorer, trace) = minimize_population(problem, phi, ell, &config, init.unwrap_or(&zero))?;
    let exact_reference = phi == Disutility::EntropyRisk && ell == PairwiseLoss::Linear;
    let reference = if exact_reference {
        optimal_risk(problem)
    } else {
        trace.risks.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let e_star = auc_optimum(problem);
    let points: Vec<ConsistencyPoint> = (0..trace.iterations.len())
        .map(|k| ConsistencyPoint {
            iter: trace.iterations[k],
            risk: trace.risks[k],
            excess: trace.risks[k] - reference,
            auc_gap: e_star - trace.aucs[k],
        })
        .collect();
    let last = points.last().expect("trace holds at least one iterate");
    Ok(ConsistencyReport {
        phi: phi.to_string(),
        ell: ell.to_string(),
        auc_optimum: e_star,
        final_auc: e_star - last.auc_gap,
        final_excess: last.excess,
        exact_reference,
        is_maximizer: is_auc_maximizer(problem, &scorer, 1e-9)?.is_maximizer,
        converged: trace.converged,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_controls_have_zero_sides() {
        let s = calibration_sweep(3, 4, 1, true).unwrap();
        assert_eq!(s.rows.len(), 15);
        for r in s.rows.iter().filter(|r| r.scorer_seed.is_none()) {
            assert!(r.lhs.abs() <= 1e-12 && r.rhs <= 1e-6, "{r:?}");
        }
        assert!(s.min_slack >= -1e-9);
    }

    #[test]
    fn critical_family_has_shared_negatives() {
        let p = critical_family(2, 16, CRITICAL_CONTRAST, 1.0).unwrap();
        assert!(p.negative_row_spread() <= 1e-12);
        assert!((auc_optimum(&p) - (0.5 + CRITICAL_CONTRAST / 4.0)).abs() < 1e-12);
        assert!(critical_family(3, 16, 0.2, 1.0).is_err());
    }

    #[test]
    fn consistency_from_optimum_is_immediate() {
        let p = ContrastiveProblem::random(2, 3, 5, 1e-3).unwrap();
        let opt = optimal_scorer(&p, &[0.0, 0.0]).unwrap().scorer;
        let r = consistency_experiment(&p, Disutility::EntropyRisk, PairwiseLoss::Linear, &TrainConfig::default(), Some(&opt)).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!(r.is_maximizer && r.final_excess <= 1e-10);
    }
}
