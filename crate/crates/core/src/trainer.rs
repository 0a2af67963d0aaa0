//! Projected gradient descent on the implemented contrastive risks.
//!
//! Tabular scorers take preconditioned steps: the gradient block of anchor
//! `x` is divided by the anchor's total weight in the objective, so rare
//! anchors move as fast as frequent ones. Every objective here is a sum of
//! per-anchor terms, so this rescaling leaves the fixed points unchanged.
//! Scores are clipped to `[−B, B]` after each step.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{ScrlSample, SscrlSample};
use crate::oce::{Disutility, PairwiseLoss};
use crate::probspace::ContrastiveProblem;
use crate::retrieval::auc_score;
use crate::risks::{ContrastObjective, Route};
use crate::scorer::Scorer;
use crate::table::Table;

/// Consecutive risk increases after which a run is declared diverged.
pub const DIVERGENCE_PATIENCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    Constant,
    InverseSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Base step; `None` means `0.5·τ`.
    pub step: Option<f64>,
    pub schedule: StepSchedule,
    pub max_iter: usize,
    /// Stop once the projected gradient norm falls to this value.
    pub grad_tol: f64,
    /// Score box half-width; `None` picks a default from the objective.
    pub bound: Option<f64>,
    /// Record every `trace_stride`-th iterate (the first and last are always kept).
    pub trace_stride: usize,
    /// Record the population AUC of traced iterates when a problem is known.
    pub record_auc: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step: None,
            schedule: StepSchedule::Constant,
            max_iter: 500_000,
            grad_tol: 1e-10,
            bound: None,
            trace_stride: 100,
            record_auc: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(step) = self.step {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
            }
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        if let Some(b) = self.bound {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::InvalidArgument(format!("bound must be positive, got {b}")));
            }
        }
        if self.trace_stride == 0 {
            return Err(Error::InvalidArgument("trace_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Iterate history of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTrace {
    pub iterations: Vec<usize>,
    pub risks: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// Population AUC per traced iterate, when recorded.
    pub aucs: Vec<f64>,
    pub converged: bool,
    pub bound: f64,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl TrainTrace {
    pub fn final_risk(&self) -> f64 {
        *self.risks.last().expect("trace always holds the initial iterate")
    }

    pub fn steps(&self) -> usize {
        *self.iterations.last().unwrap_or(&0)
    }

    /// CSV rows `iter,risk,grad_norm,auc` (empty AUC when not recorded).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,risk,grad_norm,auc\n");
        for (k, &it) in self.iterations.iter().enumerate() {
            let auc = self.aucs.get(k).map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!("{it},{},{},{auc}\n", self.risks[k], self.grad_norms[k]));
        }
        out
    }
}

/// Borrowed view of a drawn sample.
#[derive(Debug, Clone, Copy)]
pub enum SampleRef<'a> {
    Scrl(&'a ScrlSample),
    Sscrl(&'a SscrlSample),
}

impl<'a> From<&'a ScrlSample> for SampleRef<'a> {
    fn from(s: &'a ScrlSample) -> Self {
        SampleRef::Scrl(s)
    }
}

impl<'a> From<&'a SscrlSample> for SampleRef<'a> {
    fn from(s: &'a SscrlSample) -> Self {
        SampleRef::Sscrl(s)
    }
}

/// Default box for the population objective: `max(5τ·max|log r|, τ(max r + 1), τ)`.
///
/// The second term covers minimizers that are affine rather than logarithmic
/// in the ratio, as for the mean-variance disutility.
pub fn default_population_bound(problem: &ContrastiveProblem) -> f64 {
    let tau = problem.temperature();
    let (mut widest, mut top): (f64, f64) = (0.0, 0.0);
    for x in 0..problem.anchor_size() {
        for r in problem.density_ratio(x) {
            if r > 0.0 && r.is_finite() {
                widest = widest.max(r.ln().abs());
                top = top.max(r);
            }
        }
    }
    (5.0 * tau * widest).max(tau * (top + 1.0)).max(tau)
}

/// Default box for empirical objectives, whose plug-in ratios can be 0 or ∞.
pub fn default_empirical_bound(tau: f64) -> f64 {
    10.0 * tau
}

pub fn minimize_population(
    problem: &ContrastiveProblem,
    phi: Disutility,
    ell: PairwiseLoss,
    config: &TrainConfig,
    init: &Scorer,
) -> Result<(Scorer, TrainTrace)> {
    init.check_against(problem)?;
    let objective = ContrastObjective::population(problem);
    let bound = config.bound.unwrap_or_else(|| default_population_bound(problem));
    let monitor = config.record_auc.then_some(problem);
    minimize(&objective, phi, ell, config, init, bound, monitor)
}

/// Trains a zero-initialized tabular scorer on an empirical objective.
pub fn minimize_empirical<'a>(
    sample: impl Into<SampleRef<'a>>,
    anchor_size: usize,
    item_size: usize,
    phi: Disutility,
    ell: PairwiseLoss,
    tau: f64,
    config: &TrainConfig,
) -> Result<(Scorer, TrainTrace)> {
    let objective = match sample.into() {
        SampleRef::Scrl(s) => ContrastObjective::scrl(s, anchor_size, item_size, tau)?,
        SampleRef::Sscrl(s) => ContrastObjective::sscrl(s, anchor_size, item_size, tau)?,
    };
    minimize_objective(&objective.compact(), phi, ell, config, None)
}

/// Trains a zero-initialized tabular scorer on any objective; `monitor`
/// supplies the problem for AUC recording.
pub fn minimize_objective(
    objective: &ContrastObjective,
    phi: Disutility,
    ell: PairwiseLoss,
    config: &TrainConfig,
    monitor: Option<&ContrastiveProblem>,
) -> Result<(Scorer, TrainTrace)> {
    let init = Scorer::constant(objective.anchor_size(), objective.item_size(), 0.0);
    let bound = config.bound.unwrap_or_else(|| default_empirical_bound(objective.tau()));
    minimize(objective, phi, ell, config, &init, bound, monitor.filter(|_| config.record_auc))
}

struct Recorder<'a> {
    trace: TrainTrace,
    monitor: Option<&'a ContrastiveProblem>,
    stride: usize,
    increases: usize,
    last_risk: f64,
}

impl Recorder<'_> {
    fn record(&mut self, iter: usize, risk: f64, grad_norm: f64, scorer: impl FnOnce() -> Scorer) -> Result<()> {
        self.trace.iterations.push(iter);
        self.trace.risks.push(risk);
        self.trace.grad_norms.push(grad_norm);
        if let Some(problem) = self.monitor {
            self.trace.aucs.push(auc_score(problem, &scorer())?.score);
        }
        Ok(())
    }

    /// Tracks consecutive increases; returns an error once patience runs out.
    fn observe(&mut self, iter: usize, risk: f64) -> Result<()> {
        if !risk.is_finite() {
            return Err(Error::TrainingDiverged(iter));
        }
        if risk > self.last_risk {
            self.increases += 1;
            if self.increases >= DIVERGENCE_PATIENCE {
                return Err(Error::TrainingDiverged(iter));
            }
        } else {
            self.increases = 0;
        }
        self.last_risk = risk;
        Ok(())
    }
}

fn minimize(
    objective: &ContrastObjective,
    phi: Disutility,
    ell: PairwiseLoss,
    config: &TrainConfig,
    init: &Scorer,
    bound: f64,
    monitor: Option<&ContrastiveProblem>,
) -> Result<(Scorer, TrainTrace)> {
    config.validate()?;
    if !phi.is_smooth() {
        return Err(Error::NonSmoothDisutility(phi.name()));
    }
    init.check_shape(objective.anchor_size(), objective.item_size())?;
    let start = Instant::now();
    let base_step = config.step.unwrap_or(0.5 * objective.tau());
    let recorder = Recorder {
        trace: TrainTrace {
            iterations: Vec::new(),
            risks: Vec::new(),
            grad_norms: Vec::new(),
            aucs: Vec::new(),
            converged: false,
            bound,
            elapsed: Duration::ZERO,
        },
        monitor,
        stride: config.trace_stride,
        increases: 0,
        last_risk: f64::INFINITY,
    };
    let (scorer, mut trace) = match init {
        Scorer::Tabular { scores } => descend_tabular(objective, phi, ell, config, scores.clone(), bound, base_step, recorder)?,
        Scorer::LinearEmbed { anchors, items } => {
            descend_embedding(objective, phi, ell, config, anchors.clone(), items.clone(), base_step, recorder)?
        }
    };
    trace.elapsed = start.elapsed();
    Ok((scorer, trace))
}

fn step_at(config: &TrainConfig, base: f64, k: usize) -> f64 {
    match config.schedule {
        StepSchedule::Constant => base,
        StepSchedule::InverseSqrt => base / ((k + 1) as f64).sqrt(),
    }
}

/// Total objective weight per anchor.
fn anchor_mass(objective: &ContrastObjective) -> Vec<f64> {
    let mut mass = vec![0.0; objective.anchor_size()];
    for b in objective.blocks() {
        mass[b.anchor] += b.weight;
    }
    mass
}

#[allow(clippy::too_many_arguments)]
fn descend_tabular(
    objective: &ContrastObjective,
    phi: Disutility,
    ell: PairwiseLoss,
    config: &TrainConfig,
    mut scores: Table,
    bound: f64,
    base_step: f64,
    mut rec: Recorder<'_>,
) -> Result<(Scorer, TrainTrace)> {
    let mass = anchor_mass(objective);
    for v in scores.as_mut_slice() {
        *v = v.clamp(-bound, bound);
    }
    let (mut risk, mut grad) = objective.value_and_gradient(&scores, phi, ell)?;
    let mut k = 0;
    loop {
        // Preconditioned projected-gradient mapping, used as the stopping measure.
        let eta = step_at(config, base_step, k);
        let mut next = scores.clone();
        let mut norm_sq = 0.0;
        for x in 0..scores.rows() {
            if mass[x] == 0.0 {
                continue;
            }
            let g = grad.row(x);
            let row = next.row_mut(x);
            for (s, &d) in row.iter_mut().zip(g) {
                let old = *s;
                *s = (old - eta * d / mass[x]).clamp(-bound, bound);
                let moved = (old - *s) / eta;
                norm_sq += moved * moved;
            }
        }
        let grad_norm = norm_sq.sqrt();
        let done = grad_norm <= config.grad_tol || k >= config.max_iter;
        if done || k % rec.stride == 0 {
            rec.record(k, risk, grad_norm, || Scorer::tabular(scores.clone()))?;
        }
        if done {
            rec.trace.converged = grad_norm <= config.grad_tol;
            return Ok((Scorer::tabular(scores), rec.trace));
        }
        let (next_risk, next_grad) = objective.value_and_gradient(&next, phi, ell)?;
        k += 1;
        rec.observe(k, next_risk)?;
        scores = next;
        risk = next_risk;
        grad = next_grad;
    }
}

#[allow(clippy::too_many_arguments)]
fn descend_embedding(
    objective: &ContrastObjective,
    phi: Disutility,
    ell: PairwiseLoss,
    config: &TrainConfig,
    mut u: Table,
    mut v: Table,
    base_step: f64,
    mut rec: Recorder<'_>,
) -> Result<(Scorer, TrainTrace)> {
    let materialize = |u: &Table, v: &Table| Scorer::LinearEmbed { anchors: u.clone(), items: v.clone() };
    let mut k = 0;
    let (mut risk, mut g) = objective.value_and_gradient(&materialize(&u, &v).to_table(), phi, ell)?;
    loop {
        let (gu, gv) = embedding_gradient(&g, &u, &v);
        let grad_norm = gu.as_slice().iter().chain(gv.as_slice()).map(|d| d * d).sum::<f64>().sqrt();
        let done = grad_norm <= config.grad_tol || k >= config.max_iter;
        if done || k % rec.stride == 0 {
            rec.record(k, risk, grad_norm, || materialize(&u, &v))?;
        }
        if done {
            rec.trace.converged = grad_norm <= config.grad_tol;
            return Ok((materialize(&u, &v), rec.trace));
        }
        let eta = step_at(config, base_step, k);
        for (p, d) in u.as_mut_slice().iter_mut().zip(gu.as_slice()) {
            *p -= eta * d;
        }
        for (p, d) in v.as_mut_slice().iter_mut().zip(gv.as_slice()) {
            *p -= eta * d;
        }
        k += 1;
        let (r, next) = objective.value_and_gradient(&materialize(&u, &v).to_table(), phi, ell)?;
        rec.observe(k, r)?;
        risk = r;
        g = next;
    }
}

/// Chain rule through `S = U Vᵀ`: `∂U = G V`, `∂V = Gᵀ U`.
pub fn embedding_gradient(score_grad: &Table, anchors: &Table, items: &Table) -> (Table, Table) {
    let d = anchors.cols();
    let gu = Table::from_fn(anchors.rows(), d, |x, k| {
        (0..items.rows()).map(|y| score_grad.get(x, y) * items.get(y, k)).sum()
    });
    let gv = Table::from_fn(items.rows(), d, |y, k| {
        (0..anchors.rows()).map(|x| score_grad.get(x, y) * anchors.get(x, k)).sum()
    });
    (gu, gv)
}

/// Finite-difference comparison of the analytic gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCertificate {
    /// `max |a − f| / max(‖a‖∞, ‖f‖∞)`, or the absolute error when `relative` is false.
    pub error: f64,
    pub relative: bool,
    pub scale: f64,
}

/// Below this gradient scale the absolute error is reported.
pub const FD_ABSOLUTE_BELOW: f64 = 1e-4;

/// Central differences on every score coordinate.
pub fn finite_diff_certify(
    objective: &ContrastObjective,
    phi: Disutility,
    ell: PairwiseLoss,
    scores: &Table,
    h: f64,
) -> Result<GradientCertificate> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!("finite-difference step must lie in [1e-7, 1e-3], got {h}")));
    }
    let (_, analytic) = objective.value_and_gradient(scores, phi, ell)?;
    let mut probe = scores.clone();
    let mut max_err: f64 = 0.0;
    let mut scale: f64 = analytic.max_abs();
    for i in 0..scores.as_slice().len() {
        let base = scores.as_slice()[i];
        probe.as_mut_slice()[i] = base + h;
        let up = objective.evaluate(&probe, phi, ell, Route::Auto)?.0;
        probe.as_mut_slice()[i] = base - h;
        let down = objective.evaluate(&probe, phi, ell, Route::Auto)?.0;
        probe.as_mut_slice()[i] = base;
        let fd = (up - down) / (2.0 * h);
        scale = scale.max(fd.abs());
        max_err = max_err.max((fd - analytic.as_slice()[i]).abs());
    }
    let relative = scale >= FD_ABSOLUTE_BELOW;
    Ok(GradientCertificate {
        error: if relative { max_err / scale } else { max_err },
        relative,
        scale,
    })
}
