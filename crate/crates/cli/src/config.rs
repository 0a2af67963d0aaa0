//! Run configuration: one flat document shared by flags and config files.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crl_risklab::experiments::{critical_family, Regime, SampleSize, CRITICAL_CONTRAST};
use crl_risklab::trainer::StepSchedule;
use crl_risklab::{ContrastiveProblem, Disutility, PairwiseLoss, Table};

use crate::CliError;

/// Every knob of every subcommand. Each subcommand accepts only the keys it
/// uses; anything else is a usage error, whether it came from a flag or a file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand name; filled from argv, checked against config files.
    #[arg(skip)]
    pub command: String,
    /// Problem JSON file {anchor_marginal, pos_cond, neg_cond, temperature}.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<PathBuf>,
    /// Built-in problem: random:NX:NY:SEED[:FLOOR], joint:NX:NY:SEED[:FLOOR],
    /// critical:NX:NY[:CONTRAST] or two-point.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    /// Overrides the problem temperature.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory (default: out).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Table format: csv or json (default: csv).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// Worker threads; falls back to CRL_RISKLAB_THREADS, then all cores.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problems: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorers: Option<usize>,
    /// Append an optimal-scorer control row per problem.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_instances: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    /// Scaling sweep: inner_m_scrl, inner_m_sscrl_bias, inner_m_sscrl_mad or outer_n.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Grid as lo:hi:xK or a comma list.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_grid: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Contract tolerance, or the gradient tolerance for training commands.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Anchor count, or `exact`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    /// Negatives per anchor, or `exact`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<String>,
    /// scrl or sscrl.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<usize>,
    /// identity, entropy_risk, mean_variance or cvar:ALPHA.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    /// linear, exponential, softplus or squared_hinge.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// constant or inverse_sqrt.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_stride: Option<usize>,
    /// Scorer JSON file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorer: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorer_seed: Option<u64>,
    /// Class structure JSON file {prior, item_dists[, label_map]}.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
}

const ALWAYS: &[&str] = &["command", "seed", "out", "format", "threads"];
const PROBLEM: &[&str] = &["problem", "generator", "temperature"];
const TRAIN: &[&str] = &["phi", "ell", "max_iter", "step", "schedule", "bound", "tol", "trace_stride"];

fn relevant(command: &str) -> Vec<&'static str> {
    let own: &[&[&str]] = match command {
        "validate" => &[PROBLEM],
        "calibration" => &[&["problems", "scorers", "controls", "tol"]],
        "oce-check" => &[&["instances", "tol"]],
        "dro-check" => &[&["instances", "grid_instances", "grid_step", "tol"]],
        "scaling" => &[PROBLEM, &["mode", "grid", "trials", "scorer", "scorer_seed"]],
        "gap" => &[PROBLEM, &["n", "m", "trials", "regime", "hypotheses", "scorer_seed"]],
        "critical-m" => &[PROBLEM, &["n_grid", "m_grid", "replicates", "delta", "max_iter", "step", "bound", "tol"]],
        "train" => &[PROBLEM, TRAIN, &["n", "m", "regime"]],
        "consistency" => &[PROBLEM, TRAIN],
        "zero-shot" => &[PROBLEM, &["classes", "scorer", "anchor"]],
        _ => &[],
    };
    ALWAYS.iter().chain(own.iter().flat_map(|k| k.iter())).copied().collect()
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl RunConfig {
    /// Reads a JSON or TOML config (by extension; JSON otherwise).
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        if is_toml {
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
        }
    }

    fn to_object(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("config serializes") {
            Value::Object(map) => map,
            _ => unreachable!("config is a struct"),
        }
    }

    /// `self` with every key set in `flags` replaced by the flag value.
    pub fn overlay(&self, flags: &RunConfig) -> RunConfig {
        let mut base = self.to_object();
        for (k, v) in flags.to_object() {
            if !v.is_null() && !(k == "command" && v == Value::String(String::new())) {
                base.insert(k, v);
            }
        }
        serde_json::from_value(Value::Object(base)).expect("merged config deserializes")
    }

    /// Rejects keys the subcommand does not use.
    pub fn check_keys(&self) -> Result<(), CliError> {
        let allowed = relevant(&self.command);
        let stray: Vec<String> = self
            .to_object()
            .into_iter()
            .filter(|(k, v)| !v.is_null() && !allowed.contains(&k.as_str()))
            .map(|(k, _)| format!("--{}", k.replace('_', "-")))
            .collect();
        if stray.is_empty() {
            Ok(())
        } else {
            Err(usage(format!("{} does not accept {}", self.command, stray.join(", "))))
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn json_tables(&self) -> Result<bool, CliError> {
        match self.format.as_deref() {
            None | Some("csv") => Ok(false),
            Some("json") => Ok(true),
            Some(other) => Err(usage(format!("unknown format {other:?}; expected csv or json"))),
        }
    }

    /// Loads `--problem`, else builds `--generator`, else `default_generator`.
    pub fn problem(&self, default_generator: Option<&str>) -> Result<ContrastiveProblem, CliError> {
        let problem = match (&self.problem, &self.generator) {
            (Some(_), Some(_)) => return Err(usage("give either --problem or --generator, not both")),
            (Some(path), None) => {
                let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            (None, Some(recipe)) => generate(recipe)?,
            (None, None) => match default_generator {
                Some(recipe) => generate(recipe)?,
                None => return Err(usage(format!("{} needs --problem or --generator", self.command))),
            },
        };
        match self.temperature {
            Some(t) => Ok(problem.with_temperature(t)?),
            None => Ok(problem),
        }
    }

    pub fn phi(&self) -> Result<Disutility, CliError> {
        parse_phi(self.phi.as_deref().unwrap_or("entropy_risk"))
    }

    pub fn ell(&self) -> Result<PairwiseLoss, CliError> {
        let name = self.ell.as_deref().unwrap_or("linear");
        PairwiseLoss::ALL
            .into_iter()
            .find(|l| l.name() == name)
            .ok_or_else(|| usage(format!("unknown pairwise loss {name:?}")))
    }

    pub fn regime(&self) -> Result<Regime, CliError> {
        match self.regime.as_deref().unwrap_or("scrl") {
            "scrl" => Ok(Regime::Scrl),
            "sscrl" => Ok(Regime::Sscrl),
            other => Err(usage(format!("unknown regime {other:?}; expected scrl or sscrl"))),
        }
    }

    pub fn schedule(&self) -> Result<StepSchedule, CliError> {
        match self.schedule.as_deref().unwrap_or("constant") {
            "constant" => Ok(StepSchedule::Constant),
            "inverse_sqrt" => Ok(StepSchedule::InverseSqrt),
            other => Err(usage(format!("unknown schedule {other:?}; expected constant or inverse_sqrt"))),
        }
    }
}

pub fn parse_phi(name: &str) -> Result<Disutility, CliError> {
    match name {
        "identity" => Ok(Disutility::Identity),
        "entropy_risk" => Ok(Disutility::EntropyRisk),
        "mean_variance" => Ok(Disutility::MeanVariance),
        _ => match name.strip_prefix("cvar:").map(str::parse::<f64>) {
            Some(Ok(alpha)) if alpha > 0.0 && alpha <= 1.0 => Ok(Disutility::Cvar { alpha }),
            _ => Err(usage(format!("unknown disutility {name:?}"))),
        },
    }
}

/// `exact` or a positive count.
pub fn parse_size(text: &str) -> Result<SampleSize, CliError> {
    if text == "exact" {
        return Ok(SampleSize::Exact);
    }
    match text.parse::<usize>() {
        Ok(v) if v > 0 => Ok(SampleSize::Draws(v)),
        _ => Err(usage(format!("expected a positive count or `exact`, got {text:?}"))),
    }
}

/// `lo:hi:xK` (geometric, factor `K ≥ 2`) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || usage(format!("bad grid {text:?}; expected lo:hi:xK or a comma list"));
    let grid: Vec<usize> = if let [lo, hi, factor] = text.split(':').collect::<Vec<_>>()[..] {
        let lo: usize = lo.parse().map_err(|_| bad())?;
        let hi: usize = hi.parse().map_err(|_| bad())?;
        let k: usize = factor.strip_prefix('x').and_then(|k| k.parse().ok()).ok_or_else(bad)?;
        if lo == 0 || k < 2 || hi < lo {
            return Err(bad());
        }
        std::iter::successors(Some(lo), |v| v.checked_mul(k)).take_while(|v| *v <= hi).collect()
    } else {
        text.split(',').map(|v| v.trim().parse::<usize>().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.contains(&0) {
        return Err(bad());
    }
    Ok(grid)
}

pub fn generate(recipe: &str) -> Result<ContrastiveProblem, CliError> {
    let bad = || usage(format!("bad generator {recipe:?}"));
    let parts: Vec<&str> = recipe.split(':').collect();
    let int = |i: usize| parts.get(i).and_then(|v| v.parse::<usize>().ok()).ok_or_else(bad);
    let float = |i: usize, default: f64| match parts.get(i) {
        None => Ok(default),
        Some(v) => v.parse::<f64>().map_err(|_| bad()),
    };
    let problem = match parts[0] {
        "random" | "joint" if parts.len() == 4 || parts.len() == 5 => {
            let p = ContrastiveProblem::random(int(1)?, int(2)?, int(3)? as u64, float(4, 1e-3)?)?;
            if parts[0] == "joint" {
                ContrastiveProblem::from_joint(&p.positive_joint(), p.temperature())?
            } else {
                p
            }
        }
        "critical" if parts.len() == 3 || parts.len() == 4 => critical_family(int(1)?, int(2)?, float(3, CRITICAL_CONTRAST)?, 1.0)?,
        "two-point" if parts.len() == 1 => ContrastiveProblem::new(
            vec![1.0],
            Table::from_rows(&[[0.8, 0.2]])?,
            Table::from_rows(&[[0.5, 0.5]])?,
            1.0,
        )?,
        _ => return Err(bad()),
    };
    Ok(problem)
}
