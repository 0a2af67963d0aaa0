//! Samplers and Monte-Carlo studies.

mod engine;
mod montecarlo;
mod output;
mod sampling;
mod studies;

pub use engine::{Estimate, Regime, SampleSize};
pub use montecarlo::{
    generalization_gap, inner_outer_decomposition, scaling_study, DecompositionReport, GapReport, ScalingCell,
    ScalingReport, SlopeFit, Sweep, CONCLUSIVE_R2, MAX_RELATIVE_SE, MIN_TRIALS,
};
pub use output::{calibration_csv, critical_csv, scaling_csv};
pub use sampling::{sample_scrl, sample_sscrl, ScrlSample, SscrlSample};
pub use studies::{
    calibration_sweep, consistency_experiment, critical_family, critical_m_study, critical_train_config,
    random_scorer, sweep_problem, CalibrationRow, CalibrationSweep, ConsistencyPoint, ConsistencyReport,
    CriticalCell, CriticalMConfig, CriticalMReport, Plateau, CRITICAL_CONTRAST, DEFAULT_DELTA, SWEEP_FLOOR,
};
