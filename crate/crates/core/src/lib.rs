//! Active sequential multi-hypothesis testing with budgeted, partially
//! available data sources.
//!
//! The crate covers four layers:
//!
//! * [`model`] and [`config`]: the statistical environment and its JSON form.
//! * [`divergence`]: the KL table every exponent is a linear functional of.
//! * [`region`]: exact error-exponent regions (adaptive, non-adaptive and the
//!   fixed-proportion comparison region) plus the decision-risk exponents.
//! * [`policy`] and [`sim`]: the exploration-mixed MLE test with MSPRT-style
//!   stopping, and Monte Carlo estimation of its error probabilities.

// `!(x >= 0.0)` deliberately rejects NaN; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod divergence;
pub mod fixtures;
pub mod lp;
pub mod model;
pub mod policy;
pub mod region;
pub mod seed;
pub mod sim;

pub use divergence::{build_table, exponent, kl, DivergenceError, DivergenceTable};
pub use model::{
    validate_model, ActionSpace, Alphabet, AvailabilityDist, Budget, BudgetSpec, Environment,
    JointModel, ModelError, Pmf, SelectionFrequency, SourceSet, Tolerances, ValidationReport,
};
pub use policy::{Artifacts, ParamOptions, Policy, PolicyError, TestParams, TrialResult};
pub use sim::{
    estimate_errors, fit_exponents, verify_constraints, ExperimentConfig, ExperimentReport,
};
