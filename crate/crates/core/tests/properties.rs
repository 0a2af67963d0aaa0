mod common;

use crl_risklab::experiments::{calibration_sweep, sample_scrl, sample_sscrl, scaling_study, Sweep};
use crl_risklab::oce::oce_weighted;
use crl_risklab::retrieval::auc_score;
use crl_risklab::risks::{population_oce_risk, population_risk};
use crl_risklab::rng::CounterRng;
use crl_risklab::{ContrastiveProblem, Disutility, PairwiseLoss, Scorer, Table};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn phi_strategy() -> impl Strategy<Value = Disutility> {
    prop_oneof![
        Just(Disutility::Identity),
        Just(Disutility::EntropyRisk),
        Just(Disutility::MeanVariance),
        (0.05f64..1.0).prop_map(|alpha| Disutility::Cvar { alpha }),
    ]
}

fn ell_strategy() -> impl Strategy<Value = PairwiseLoss> {
    prop_oneof![
        Just(PairwiseLoss::Linear),
        Just(PairwiseLoss::Exponential),
        Just(PairwiseLoss::SoftPlus),
        Just(PairwiseLoss::SquaredHinge),
    ]
}

/// Values with matching probability weights.
fn weighted() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..12).prop_flat_map(|m| {
        (
            prop::collection::vec(-5.0f64..5.0, m),
            prop::collection::vec(0.01f64..1.0, m).prop_map(|w| {
                let s: f64 = w.iter().sum();
                w.into_iter().map(|v| v / s).collect::<Vec<_>>()
            }),
        )
    })
}

fn oce(phi: Disutility, z: &[f64], w: &[f64], tau: f64) -> f64 {
    oce_weighted(phi, z, w, tau).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn oce_is_sup_norm_lipschitz(phi in phi_strategy(), (z, w) in weighted(), tau in 0.1f64..3.0, seed in any::<u64>()) {
        let mut rng = CounterRng::new(seed, 0);
        let z2: Vec<f64> = z.iter().map(|v| v + rng.uniform_in(-1.0, 1.0)).collect();
        let dist = z.iter().zip(&z2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let gap = (oce(phi, &z, &w, tau) - oce(phi, &z2, &w, tau)).abs();
        prop_assert!(gap <= dist + 1e-9, "gap {gap} > {dist}");
    }

    #[test]
    fn oce_dominates_the_mean(phi in phi_strategy(), (z, w) in weighted(), tau in 0.1f64..3.0) {
        let mean: f64 = z.iter().zip(&w).map(|(z, w)| z * w).sum();
        prop_assert!(oce(phi, &z, &w, tau) >= mean - 1e-9);
    }

    #[test]
    fn oce_is_translation_equivariant(phi in phi_strategy(), (z, w) in weighted(), tau in 0.1f64..3.0, c in -10.0f64..10.0) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let d = oce(phi, &shifted, &w, tau) - oce(phi, &z, &w, tau) - c;
        prop_assert!(d.abs() <= 1e-9, "deviation {d}");
    }

    #[test]
    fn oce_is_monotone(phi in phi_strategy(), (z, w) in weighted(), tau in 0.1f64..3.0, seed in any::<u64>()) {
        let mut rng = CounterRng::new(seed, 1);
        let up: Vec<f64> = z.iter().map(|v| v + rng.uniform_in(0.0, 2.0)).collect();
        prop_assert!(oce(phi, &up, &w, tau) >= oce(phi, &z, &w, tau) - 1e-9);
    }

    #[test]
    fn oce_matches_a_padded_ternary_search(phi in phi_strategy(), (z, w) in weighted(), tau in 0.1f64..3.0) {
        let lib = oce(phi, &z, &w, tau);
        let oracle = common::oce_ternary(phi, &z, &w, tau);
        prop_assert!((lib - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()), "{lib} vs {oracle}");
    }

    #[test]
    fn cvar_is_the_top_k_mean(z in prop::collection::vec(-5.0f64..5.0, 2..20), k_frac in 0.0f64..1.0, tau in 0.1f64..3.0) {
        let m = z.len();
        let k = 1 + ((m - 1) as f64 * k_frac) as usize;
        let w = vec![1.0 / m as f64; m];
        let mut sorted = z.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let top = sorted[..k].iter().sum::<f64>() / k as f64;
        let got = oce(Disutility::Cvar { alpha: k as f64 / m as f64 }, &z, &w, tau);
        prop_assert!((got - top).abs() <= 1e-9, "{got} vs {top}");
    }

    #[test]
    fn risks_and_auc_ignore_anchor_shifts(seed in any::<u64>(), phi in phi_strategy(), ell in ell_strategy()) {
        let mut rng = CounterRng::new(seed, 2);
        let p = common::random_problem(&mut rng, 4, 6, 1e-3);
        let (nx, ny) = (p.anchor_size(), p.item_size());
        let base = common::random_table(&mut rng, nx, ny, 2.0);
        let g: Vec<f64> = (0..nx).map(|_| rng.uniform_in(-5.0, 5.0)).collect();
        let s = Scorer::tabular(base.clone());
        let t = Scorer::tabular(Table::from_fn(nx, ny, |x, y| base.get(x, y) + g[x]));
        let (a, b) = (population_risk(&p, &s).unwrap().value, population_risk(&p, &t).unwrap().value);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        let (a, b) = (
            population_oce_risk(&p, &s, phi, ell).unwrap().value,
            population_oce_risk(&p, &t, phi, ell).unwrap().value,
        );
        prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()), "{a} vs {b}");
        prop_assert_eq!(auc_score(&p, &s).unwrap().score, auc_score(&p, &t).unwrap().score);
    }

    #[test]
    fn population_risk_is_midpoint_convex(seed in any::<u64>()) {
        let mut rng = CounterRng::new(seed, 3);
        let p = common::random_problem(&mut rng, 4, 6, 1e-3);
        let (nx, ny) = (p.anchor_size(), p.item_size());
        let a = common::random_table(&mut rng, nx, ny, 3.0);
        let b = common::random_table(&mut rng, nx, ny, 3.0);
        let mid = Table::from_fn(nx, ny, |x, y| 0.5 * (a.get(x, y) + b.get(x, y)));
        let l = |t: &Table| population_risk(&p, &Scorer::tabular(t.clone())).unwrap().value;
        prop_assert!(l(&mid) <= 0.5 * (l(&a) + l(&b)) + 1e-10);
    }

    #[test]
    fn library_risk_matches_the_double_sum(seed in any::<u64>()) {
        let mut rng = CounterRng::new(seed, 4);
        let p = common::random_problem(&mut rng, 5, 8, 1e-3);
        let s = Scorer::tabular(common::random_table(&mut rng, p.anchor_size(), p.item_size(), 3.0));
        let oracle = common::risk(&p, &common::scores_of(&p, &s));
        let lib = population_risk(&p, &s).unwrap().value;
        prop_assert!((lib - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()));
    }
}

/// Pearson statistic of counts against probabilities, merged over cells with
/// expected count below 5.
fn chi_square_p_value(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let (mut stat, mut cells, mut pool_o, mut pool_e) = (0.0, 0usize, 0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * n as f64;
        if e < 5.0 {
            pool_o += c as f64;
            pool_e += e;
        } else {
            stat += (c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn samplers_pass_chi_square() {
    for seed in 0..10u64 {
        let mut rng = CounterRng::new(seed, 9);
        let p = common::random_problem(&mut rng, 4, 6, 1e-2);
        let (nx, ny) = (p.anchor_size(), p.item_size());
        let s = sample_scrl(&p, 20_000, 3, seed).unwrap();
        let mut pairs = vec![0usize; nx * ny];
        let mut negs = vec![0usize; nx * ny];
        for i in 0..s.len() {
            pairs[s.anchors[i] * ny + s.positives[i]] += 1;
            for &y in &s.negatives[i] {
                negs[s.anchors[i] * ny + y] += 1;
            }
        }
        let joint: Vec<f64> = (0..nx * ny).map(|c| p.anchor_marginal()[c / ny] * p.pos_row(c / ny)[c % ny]).collect();
        let pv = chi_square_p_value(&pairs, &joint);
        assert!(pv > 1e-4, "pair sampler, seed {seed}: p = {pv}");
        for x in 0..nx {
            let pv = chi_square_p_value(&negs[x * ny..(x + 1) * ny], p.neg_row(x));
            assert!(pv > 1e-4, "negative sampler, seed {seed}, anchor {x}: p = {pv}");
        }
    }
    let joint = Table::from_rows(&[[0.1, 0.2, 0.05], [0.3, 0.25, 0.1]]).unwrap();
    let p = ContrastiveProblem::from_joint(&joint, 1.0).unwrap();
    let s = sample_sscrl(&p, 10, 30_000, 4).unwrap();
    let mut counts = vec![0usize; 3];
    s.negatives.iter().for_each(|&y| counts[y] += 1);
    let pv = chi_square_p_value(&counts, p.neg_row(0));
    assert!(pv > 1e-4, "shared negatives: p = {pv}");
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let sweep = serde_json::to_vec(&calibration_sweep(6, 5, 17, true).unwrap()).unwrap();
            let p = ContrastiveProblem::random(2, 4, 3, 1e-2).unwrap();
            let s = Scorer::tabular(Table::from_fn(2, 4, |x, y| (x + 2 * y) as f64 * 0.3));
            let scaling = serde_json::to_vec(&scaling_study(&p, &s, Sweep::InnerMScrl, &[4, 8, 16], 400, 5).unwrap()).unwrap();
            (sweep, scaling)
        })
    };
    let first = run(1);
    assert_eq!(first, run(1));
    assert_eq!(first, run(4));
}
