//! Contrastive risk laboratory on finite spaces.
//!
//! - [`probspace`]: anchor/item spaces and contrastive problems.
//! - [`oce`]: optimized certainty equivalents, pairwise losses, DRO duality.
//! - [`risks`]: population and empirical contrastive risks, optimal scorers,
//!   analytic gradients.
//! - [`retrieval`]: the AUC-type retrieval criterion, its optimum and the
//!   calibration bound.
//! - [`trainer`]: projected gradient descent over tabular and embedding scorers.
//! - [`experiments`]: Monte-Carlo samplers and the scaling, gap, calibration
//!   and critical-negative-size studies.

pub mod error;
pub mod experiments;
pub mod numeric;
pub mod oce;
pub mod probspace;
pub mod retrieval;
pub mod risks;
pub mod rng;
pub mod scorer;
pub mod table;
pub mod trainer;

pub use error::{Error, Result};
pub use oce::{Disutility, Divergence, PairwiseLoss};
pub use scorer::Scorer;
pub use probspace::{ClassStructure, ContrastiveProblem, LabeledJoint};
pub use table::Table;
