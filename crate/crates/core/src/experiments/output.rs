//! CSV renderings of study results.

use std::fmt::Write;

use super::montecarlo::ScalingReport;
use super::studies::{CalibrationSweep, CriticalMReport};

pub fn scaling_csv(report: &ScalingReport) -> String {
    let mut out = String::from("sweep_var,mean_err,se,trials\n");
    for c in &report.cells {
        let _ = writeln!(out, "{},{:e},{:e},{}", c.sweep_var, c.mean_err, c.se, c.trials);
    }
    out
}

/// Control rows carry `optimal` in the scorer column.
pub fn calibration_csv(sweep: &CalibrationSweep) -> String {
    let mut out = String::from("problem_seed,scorer_seed,lhs,rhs,slack\n");
    for r in &sweep.rows {
        let scorer = r.scorer_seed.map_or_else(|| "optimal".to_string(), |s| s.to_string());
        let _ = writeln!(out, "{},{},{:e},{:e},{:e}", r.problem_seed, scorer, r.lhs, r.rhs, r.slack);
    }
    out
}

pub fn critical_csv(report: &CriticalMReport) -> String {
    let mut out = String::from("n,m,mean_auc,se,is_mstar\n");
    for c in &report.cells {
        let _ = writeln!(out, "{},{},{:.12},{:e},{}", c.n, c.m, c.mean_auc, c.se, c.is_mstar);
    }
    out
}
