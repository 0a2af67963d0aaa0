//! Test-local oracles. Each one recomputes a quantity by direct enumeration
//! without calling into the library's numerical routines.
#![allow(dead_code)]

use crl_risklab::rng::CounterRng;
use crl_risklab::{ContrastiveProblem, Disutility, Scorer, Table};

pub fn scores_of(problem: &ContrastiveProblem, scorer: &Scorer) -> Vec<Vec<f64>> {
    (0..problem.anchor_size())
        .map(|x| (0..problem.item_size()).map(|y| scorer.score(x, y)).collect())
        .collect()
}

/// `τ log Σ_j w_j e^{z_j/τ}` with a max shift.
pub fn lse(z: &[f64], w: &[f64], tau: f64) -> f64 {
    let top = z.iter().zip(w).filter(|(_, &w)| w > 0.0).map(|(z, _)| *z).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z.iter().zip(w).map(|(z, w)| w * ((z - top) / tau).exp()).sum();
    top + tau * s.ln()
}

/// Population log-sum-exp risk by double sum.
pub fn risk(problem: &ContrastiveProblem, s: &[Vec<f64>]) -> f64 {
    let tau = problem.temperature();
    (0..problem.anchor_size())
        .map(|x| {
            let inner = lse(&s[x], problem.neg_row(x), tau);
            let pos: f64 = problem.pos_row(x).iter().zip(&s[x]).map(|(p, s)| p * s).sum();
            problem.anchor_marginal()[x] * (inner - pos)
        })
        .sum()
}

/// `τ E_x Σ_y p⁺ log(p⁺/p⁻)` with `0 log 0 = 0`.
pub fn risk_star(problem: &ContrastiveProblem) -> f64 {
    let tau = problem.temperature();
    let mut total = 0.0;
    for x in 0..problem.anchor_size() {
        for (p, q) in problem.pos_row(x).iter().zip(problem.neg_row(x)) {
            if *p > 0.0 {
                total += problem.anchor_marginal()[x] * p * (p / q).ln();
            }
        }
    }
    -tau * total
}

/// `E(s)` by enumerating all `(x, y, y′)` with the 1e-12 tie rule.
pub fn auc(problem: &ContrastiveProblem, s: &[Vec<f64>]) -> f64 {
    let mut e = 0.0;
    for x in 0..problem.anchor_size() {
        for (y, p) in problem.pos_row(x).iter().enumerate() {
            for (y2, q) in problem.neg_row(x).iter().enumerate() {
                let d = s[x][y] - s[x][y2];
                let credit = if d.abs() <= 1e-12 { 0.5 } else if d > 0.0 { 1.0 } else { 0.0 };
                e += problem.anchor_marginal()[x] * p * q * credit;
            }
        }
    }
    e
}

/// `E*` as the AUC of the exact density ratio, compared without a tolerance.
pub fn auc_star(problem: &ContrastiveProblem) -> f64 {
    let mut e = 0.0;
    for x in 0..problem.anchor_size() {
        let (pos, neg) = (problem.pos_row(x), problem.neg_row(x));
        for y in 0..pos.len() {
            for y2 in 0..pos.len() {
                let (r, r2) = (pos[y] / neg[y], pos[y2] / neg[y2]);
                let credit = if r == r2 { 0.5 } else if r > r2 { 1.0 } else { 0.0 };
                e += problem.anchor_marginal()[x] * pos[y] * neg[y2] * credit;
            }
        }
    }
    e
}

/// `τ E_x KL(p⁺ ‖ q)` with `q ∝ p⁻ e^{s/τ}`.
pub fn kl_term(problem: &ContrastiveProblem, s: &[Vec<f64>]) -> f64 {
    let tau = problem.temperature();
    let mut total = 0.0;
    for x in 0..problem.anchor_size() {
        let (pos, neg) = (problem.pos_row(x), problem.neg_row(x));
        let top = s[x].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = neg.iter().zip(&s[x]).map(|(q, s)| q * ((s - top) / tau).exp()).collect();
        let z: f64 = unnorm.iter().sum();
        for (p, u) in pos.iter().zip(&unnorm) {
            if *p > 0.0 {
                total += problem.anchor_marginal()[x] * p * (p / (u / z)).ln();
            }
        }
    }
    tau * total
}

/// OCE by ternary search on the convex objective over a padded support box.
pub fn oce_ternary(phi: Disutility, z: &[f64], w: &[f64], tau: f64) -> f64 {
    let f = |mu: f64| mu + tau * z.iter().zip(w).map(|(z, w)| w * phi.eval((z - mu) / tau)).sum::<f64>();
    let lo0 = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi0 = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo0 - 1.0, hi0 + 1.0);
    for _ in 0..300 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    f(0.5 * (lo + hi))
}

/// Row-stochastic table with every entry at least `floor` before normalization.
pub fn random_rows(rng: &mut CounterRng, rows: usize, cols: usize, floor: f64) -> Table {
    let mut t = Table::from_fn(rows, cols, |_, _| floor + rng.exponential());
    for r in 0..rows {
        let s: f64 = t.row(r).iter().sum();
        t.row_mut(r).iter_mut().for_each(|v| *v /= s);
    }
    t
}

/// Random problem with `|X| ≤ max_x`, `|Y| ≤ max_y`, entries floored at `floor`.
pub fn random_problem(rng: &mut CounterRng, max_x: usize, max_y: usize, floor: f64) -> ContrastiveProblem {
    let nx = 1 + rng.below(max_x as u64) as usize;
    let ny = 2 + rng.below(max_y as u64 - 1) as usize;
    let px = random_rows(rng, 1, nx, floor).row(0).to_vec();
    let pos = random_rows(rng, nx, ny, floor);
    let neg = random_rows(rng, nx, ny, floor);
    let tau = rng.uniform_in(0.2, 2.0);
    ContrastiveProblem::new(px, pos, neg, tau).expect("valid random problem")
}

pub fn random_table(rng: &mut CounterRng, rows: usize, cols: usize, scale: f64) -> Table {
    Table::from_fn(rows, cols, |_, _| rng.uniform_in(-scale, scale))
}
