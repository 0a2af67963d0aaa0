use thiserror::Error;

/// Errors raised by problem construction, risk evaluation and experiments.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("not a probability distribution: {0}")]
    NotADistribution(String),

    #[error("support violation at anchor {anchor}, item {item}: positive mass where negative mass is zero")]
    SupportViolation { anchor: usize, item: usize },

    #[error("anchor {0} has zero marginal mass")]
    ZeroMarginal(usize),

    #[error("anchor {anchor} has no mass on the {slice} label slice")]
    MissingLabelSlice { anchor: usize, slice: &'static str },

    #[error("class {0} has prior mass 1; its complement distribution is undefined")]
    DegenerateClassPrior(usize),

    #[error("probability floor {min_mass} is infeasible for {size} outcomes")]
    InfeasibleFloor { min_mass: f64, size: usize },

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("simplex grid search supports at most 4 atoms, got {0}")]
    SimplexTooLarge(usize),

    #[error("sample shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("disutility {0} is not differentiable; gradient-based training is unavailable")]
    NonSmoothDisutility(&'static str),

    #[error("negative distributions differ across anchors (max deviation {0:e})")]
    HeterogeneousNegatives(f64),

    #[error("insufficient trials: relative standard error {rel_se:.3} at grid value {at}")]
    InsufficientTrials { at: f64, rel_se: f64 },

    #[error("training diverged after {0} iterations")]
    TrainingDiverged(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
