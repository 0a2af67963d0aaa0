//! One function per subcommand. Each fills the artifact set and returns a
//! contract violation message, if any; [`dispatch`] writes the files either way.

use serde::Serialize;
use serde_json::json;

use crl_risklab::experiments::{
    calibration_csv, calibration_sweep, consistency_experiment, critical_csv, critical_m_study, critical_train_config,
    generalization_gap, random_scorer, sample_scrl, sample_sscrl, scaling_csv, scaling_study, CriticalMConfig,
    Regime, SampleSize, Sweep,
};
use crl_risklab::oce::{dro_dual_kl, dro_primal_grid, logsumexp_identity_check, oce_weighted};
use crl_risklab::retrieval::{auc_optimum, auc_score, zero_shot_posterior};
use crl_risklab::risks::{optimal_risk, optimal_scorer, population_risk};
use crl_risklab::rng::{derive_seed, tags, CounterRng};
use crl_risklab::trainer::{minimize_empirical, minimize_population, TrainConfig};
use crl_risklab::{ClassStructure, ContrastiveProblem, Disutility, Divergence, PairwiseLoss, Scorer};

use crate::artifacts::Artifacts;
use crate::config::{parse_grid, parse_size, RunConfig};
use crate::CliError;

type Verdict = Result<Option<String>, CliError>;

pub fn dispatch(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Artifacts::new(cfg.out_dir());
    let verdict = match cfg.command.as_str() {
        "validate" => validate(cfg, &mut out),
        "calibration" => calibration(cfg, &mut out),
        "oce-check" => oce_check(cfg, &mut out),
        "dro-check" => dro_check(cfg, &mut out),
        "scaling" => scaling(cfg, &mut out),
        "gap" => gap(cfg, &mut out),
        "critical-m" => critical_m(cfg, &mut out),
        "train" => train(cfg, &mut out),
        "consistency" => consistency(cfg, &mut out),
        "zero-shot" => zero_shot(cfg, &mut out),
        other => Err(CliError::Usage(format!("unknown subcommand {other:?}"))),
    }?;
    out.finish(cfg)?;
    match verdict {
        Some(msg) => Err(CliError::Contract(msg)),
        None => Ok(()),
    }
}

fn report<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("results serialize"));
}

fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn validate(cfg: &RunConfig, out: &mut Artifacts) -> Verdict {
    let p = cfg.problem(None)?;
    let spread = p.negative_row_spread();
    let summary = json!({
        "anchor_size": p.anchor_size(),
        "item_size": p.item_size(),
        "temperature": p.temperature(),
        "optimal_risk": optimal_risk(&p),
        "auc_optimum": auc_optimum(&p),
        "negative_row_spread": spread,
        "shared_negatives": spread <= 1e-12,
    });
    out.json("validate.json", &summary)?;
    report(&summary);
    Ok(None)
}

fn calibration(cfg: &RunConfig, out: &mut Artifacts) -> Verdict {
    let tol = cfg.tol.unwrap_or(1e-9);
    let sweep = calibration_sweep(cfg.problems.unwrap_or(50), cfg.scorers.unwrap_or(20), cfg.seed(), cfg.controls.unwrap_or(false))?;
    out.table("calibration", || calibration_csv(&sweep), &sweep, cfg.json_tables()?)?;
    let worst = sweep.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    report(&json!({"rows": sweep.rows.len(), "min_slack": sweep.min_slack, "median_slack": sweep.median_slack}));
    Ok((worst < -tol).then(|| format!("calibration slack {worst:e} below -{tol:e}")))
}

fn oce_check(cfg: &RunConfig, out: &mut Artifacts) -> Verdict {
    let tol = cfg.tol.unwrap_or(1e-9);
    let instances = cfg.instances.unwrap_or(500);
    let mut rng = CounterRng::tagged(cfg.seed(), tags::CHECK, 0);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let m = 1 + rng.below(50) as usize;
        let z: Vec<f64> = (0..m).map(|_| rng.uniform_in(-20.0, 20.0)).collect();
        let tau = rng.uniform_in(0.05, 5.0);
        worst = worst.max(logsumexp_identity_check(&z, tau)?.deviation);
    }
    let result = json!({"instances": instances, "max_deviation": worst, "tol": tol});
    out.json("oce_check.json", &result)?;
    report(&result);
    Ok((worst > tol).then(|| format!("identity deviation {worst:e} above {tol:e}")))
}

fn probability_vector(rng: &mut CounterRng, m: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| floor + rng.exponential()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn dro_check(cfg: &RunConfig, out: &mut Artifacts) -> Verdict {
    let tol = cfg.tol.unwrap_or(1e-12);
    let step = cfg.grid_step.unwrap_or(1e-3);
    let (instances, grid_instances) = (cfg.instances.unwrap_or(500), cfg.grid_instances.unwrap_or(50));
    let mut rng = CounterRng::tagged(cfg.seed(), tags::CHECK, 1);
    let mut dual_worst = 0.0f64;
    for _ in 0..instances {
        let m = 1 + rng.below(30) as usize;
        let z: Vec<f64> = (0..m).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
        let w = probability_vector(&mut rng, m, 1e-3);
        let tau = rng.uniform_in(0.2, 2.0);
        let gap = dro_dual_kl(&z, &w, tau)?.value - oce_weighted(Disutility::EntropyRisk, &z, &w, tau)?.value;
        dual_worst = dual_worst.max(gap.abs());
    }
    let pairs = [
        (Divergence::KullbackLeibler, Disutility::EntropyRisk),
        (Divergence::HalfChiSquare, Disutility::MeanVariance),
        (Divergence::CvarBox { alpha: 0.5 }, Disutility::Cvar { alpha: 0.5 }),
    ];
    let mut grid_worst = 0.0f64;
    for i in 0..grid_instances {
        let m = 2 + rng.below(3) as usize;
        let z: Vec<f64> = (0..m).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let w = probability_vector(&mut rng, m, 0.05);
        let tau = rng.uniform_in(0.3, 2.0);
        let (div, phi) = pairs[i % pairs.len()];
        let range = z.iter().copied().fold(f64::NEG_INFINITY, f64::max) - z.iter().copied().fold(f64::INFINITY, f64::min);
        let err = (dro_primal_grid(div, &z, &w, tau, step)? - oce_weighted(phi, &z, &w, tau)?.value).abs();
        grid_worst = grid_worst.max(err / (10.0 * step * range).max(f64::MIN_POSITIVE));
    }
    let result = json!({
        "instances": instances,
        "dual_max_deviation": dual_worst,
        "tol": tol,
        "grid_instances": grid_instances,
        "grid_step": step,
        "grid_error_over_allowance": grid_worst,
    });
    out.json("dro_check.json", &result)?;
    report(&result);
    if dual_worst > tol {
        return Ok(Some(format!("dual deviation {dual_worst:e} above {tol:e}")));
    }
    Ok((grid_worst > 1.0).then(|| format!("grid primal error {grid_worst:.3} times the 10·step·range allowance")))
}

fn scorer_for(cfg: &RunConfig, p: &ContrastiveProblem) -> Result<Scorer, CliError> {
    let scorer = match &cfg.scorer {
        Some(path) => read_json::<Scorer>(path)?,
        None => random_scorer(p.anchor_size(), p.item_size(), p.temperature(), cfg.scorer_seed.unwrap_or(9)),
    };
    scorer.check_against(p)?;
    Ok(scorer)
}

fn scaling(cfg: &RunConfig, out: &mut Artifacts) -> Verdict {
    let mode = cfg.mode.as_deref().unwrap_or("inner_m_scrl");
    let sweep = Sweep::parse(mode).ok_or_else(|| CliError::Usage(format!("unknown scaling mode {mode:?}")))?;
    let shared = matches!(sweep, Sweep::InnerMSscrlBias | Sweep::InnerMSscrlMad);
    let p = cfg.problem(Some(if shared { "joint:3:6:42:0.01" } else { "random:3:6:42:0.01" }))?;
    let scorer = scorer_for(cfg, &p)?;
    let grid = parse_grid(cfg.grid.as_deref().unwrap_or("8:1024:x2"))?;
    let result = scaling_study(&p, &scorer, sweep, &grid, cfg.trials.unwrap_or(4000), cfg.seed())?;
    out.table("scaling", || scaling_csv(&result), &result, cfg.json_tables()?)?;
    out.json("fit.json", &result.fit)?;
    report(&result.fit);
    let (lo, hi) = match sweep {
        Sweep::InnerMScrl | Sweep::InnerMSscrlBias => (-1.2, -0.8),
        Sweep::InnerMSscrlMad | Sweep::OuterN => (-0.65, -0.35),
    };
    if result.fit.inconclusive {
        return Ok(Some(format!("fit inconclusive (R² {:.3})", result.fit.r_squared)));
    }
    if !(lo..=hi).contains(&result.fit.slope) {
        return Ok(Some(format!("slope {:.4} outside [{lo}, {hi}]", result.fit.slope)));
    }
    if sweep != Sweep::OuterN {
        if let Some(c) = result.cells.iter().find(|c| c.signed.mean < -3.0 * c.signed.se) {
            return Ok(Some(format!("signed inner bias {:e} at {} is below −3 standard errors", c.signed.mean, c.sweep_var)));
        }
    }
    Ok(None)
}

fn gap(cfg: &RunConfig, out: &mut Artifacts) -> Verdict {
    let p = cfg.problem(Some("random:3:6:42:0.01"))?;
    let base = cfg.scorer_seed.unwrap_or(1);
    let mut hypotheses: Vec<Scorer> = (0..cfg.hypotheses.unwrap_or(8) as u64)
        .map(|k| random_scorer(p.anchor_size(), p.item_size(), p.temperature(), derive_seed(base, k)))
        .collect();
    hypotheses.push(optimal_scorer(&p, &vec![0.0; p.anchor_size()])?.scorer);
    let n = parse_size(cfg.n.as_deref().unwrap_or("256"))?;
    let m = parse_size(cfg.m.as_deref().unwrap_or("64"))?;
    let result = generalization_gap(&p, &hypotheses, n, m, cfg.trials.unwrap_or(200), cfg.seed(), cfg.regime()?)?;
    out.json("gap.json", &result)?;
    report(&json!({"gap": result.gap, "quantiles": result.quantiles, "trials": result.trials}));
    Ok(None)
}

fn train_config(cfg: &RunConfig, base: TrainConfig) -> Result<TrainConfig, CliError> {
    let config = TrainConfig {
        step: cfg.step.or(base.step),
        schedule: if cfg.schedule.is_some() { cfg.schedule()? } else { base.schedule },
        max_iter: cfg.max_iter.unwrap_or(base.max_iter),
        grad_tol: cfg.tol.unwrap_or(base.grad_tol),
        bound: cfg.bound.or(base.bound),
        trace_stride: cfg.trace_stride.unwrap_or(base.trace_stride),
        record_auc: base.record_auc,
    };
    config.validate()?;
    Ok(config)
}

fn critical_m(cfg: &RunConfig, out: &mut Artifacts) -> Verdict {
    let p = cfg.problem(Some("critical:2:16"))?;
    let mut study = CriticalMConfig::new(
        parse_grid(cfg.n_grid.as_deref().unwrap_or("64:1024:x4"))?,
        parse_grid(cfg.m_grid.as_deref().unwrap_or("1:4096:x2"))?,
        cfg.seed(),
    );
    study.replicates = cfg.replicates.unwrap_or(study.replicates);
    study.delta = cfg.delta.unwrap_or(study.delta);
    study.train = train_config(cfg, critical_train_config())?;
    let result = critical_m_study(&p, &study)?;
    out.table("critical", || critical_csv(&result), &result, cfg.json_tables()?)?;
    let summary = json!({
        "plateaus": result.plateaus,
        "m_star_nondecreasing": result.m_star_nondecreasing(),
        "auc_optimum": result.auc_optimum,
        "delta": result.delta,
        "replicates": result.replicates,
    });
    out.json("plateaus.json", &summary)?;
    report(&summary);
    Ok(None)
}

fn train(cfg: &RunConfig, out: &mut Artifacts) -> Verdict {
    let p = cfg.problem(Some("random:3:5:1"))?;
    let (phi, ell) = (cfg.phi()?, cfg.ell()?);
    let (scorer, trace) = match &cfg.n {
        None => {
            if cfg.m.is_some() || cfg.regime.is_some() {
                return Err(CliError::Usage("--m and --regime need --n".into()));
            }
            let config = train_config(cfg, TrainConfig { record_auc: true, ..TrainConfig::default() })?;
            let init = Scorer::constant(p.anchor_size(), p.item_size(), 0.0);
            minimize_population(&p, phi, ell, &config, &init)?
        }
        Some(n) => {
            let (SampleSize::Draws(n), SampleSize::Draws(m)) = (parse_size(n)?, parse_size(cfg.m.as_deref().unwrap_or("16"))?) else {
                return Err(CliError::Usage("empirical training needs finite --n and --m".into()));
            };
            let config = train_config(cfg, TrainConfig::default())?;
            let (nx, ny, tau) = (p.anchor_size(), p.item_size(), p.temperature());
            match cfg.regime()? {
                Regime::Scrl => minimize_empirical(&sample_scrl(&p, n, m, cfg.seed())?, nx, ny, phi, ell, tau, &config)?,
                Regime::Sscrl => minimize_empirical(&sample_sscrl(&p, n, m, cfg.seed())?, nx, ny, phi, ell, tau, &config)?,
            }
        }
    };
    out.json("scorer.json", &scorer)?;
    out.table("trace", || trace.to_csv(), &trace, cfg.json_tables()?)?;
    let summary = json!({
        "phi": phi.to_string(),
        "ell": ell.to_string(),
        "final_objective": trace.final_risk(),
        "iterations": trace.iterations.last(),
        "converged": trace.converged,
        "population_risk": population_risk(&p, &scorer)?.value,
        "optimal_risk": optimal_risk(&p),
        "auc": auc_score(&p, &scorer)?.score,
        "auc_optimum": auc_optimum(&p),
    });
    out.json("train.json", &summary)?;
    report(&summary);
    Ok(None)
}

fn consistency(cfg: &RunConfig, out: &mut Artifacts) -> Verdict {
    let p = cfg.problem(Some("random:3:5:1"))?;
    let (phi, ell): (Disutility, PairwiseLoss) = (cfg.phi()?, cfg.ell()?);
    let config = train_config(cfg, TrainConfig::default())?;
    let result = consistency_experiment(&p, phi, ell, &config, None)?;
    let csv = || {
        let mut s = String::from("iter,risk,excess,auc_gap\n");
        for pt in &result.points {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", pt.iter, pt.risk, pt.excess, pt.auc_gap));
        }
        s
    };
    out.table("consistency", csv, &result, cfg.json_tables()?)?;
    let auc_gap = result.auc_optimum - result.final_auc;
    let summary = json!({
        "phi": result.phi,
        "ell": result.ell,
        "final_excess": result.final_excess,
        "exact_reference": result.exact_reference,
        "auc_gap": auc_gap,
        "is_maximizer": result.is_maximizer,
        "converged": result.converged,
    });
    out.json("consistency_summary.json", &summary)?;
    report(&summary);
    if !result.converged {
        return Ok(Some("trainer did not reach the gradient tolerance".into()));
    }
    let (excess_tol, auc_tol) = if result.exact_reference { (1e-8, 1e-4) } else { (f64::INFINITY, 1e-3) };
    if result.final_excess > excess_tol {
        return Ok(Some(format!("excess risk {:e} above {excess_tol:e}", result.final_excess)));
    }
    Ok((auc_gap > auc_tol).then(|| format!("retrieval gap {auc_gap:e} above {auc_tol:e}")))
}

fn zero_shot(cfg: &RunConfig, out: &mut Artifacts) -> Verdict {
    let p = cfg.problem(None)?;
    let path = cfg.classes.as_ref().ok_or_else(|| CliError::Usage("zero-shot needs --classes".into()))?;
    let classes: ClassStructure = read_json(path)?;
    let scorer = match &cfg.scorer {
        Some(path) => read_json::<Scorer>(path)?,
        None => optimal_scorer(&p, &vec![0.0; p.anchor_size()])?.scorer,
    };
    let anchors: Vec<usize> = match cfg.anchor {
        Some(x) => vec![x],
        None => (0..p.anchor_size()).collect(),
    };
    let rows = anchors
        .into_iter()
        .map(|x| {
            let post = zero_shot_posterior(&p, &classes, &scorer, x)?;
            Ok(json!({"anchor": x, "raw": post.raw, "normalized": post.normalized}))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    out.json("zero_shot.json", &rows)?;
    report(&rows);
    Ok(None)
}
