//! The two-regime active sequential test.
//!
//! [`Artifacts`] bundles everything derived once per model; [`Policy`] adds
//! the per-`T` parameters and the precomputed samplers, and runs trials.

mod params;
mod trial;

use thiserror::Error;

use crate::divergence::{build_table, DivergenceError, DivergenceTable};
use crate::model::{validate_model, Environment, ModelError, SelectionFrequency, ValidationReport};
use crate::region::{decision_risk_exponents, ConstraintPolytope, RegionError};

pub use params::{
    build_params, choose_exploration_rate, exploration_probability, k_function, regime_for,
    solve_l, Exploration, ParamOptions, Regime, TestParams,
};
pub use trial::{action_pmf, mle, should_stop, LlrState, Policy, TrialResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("selection frequency for hypothesis {index} is outside the constraint set")]
    InvalidBeta { index: usize },
    #[error("expected {expected} selection frequencies, got {got}")]
    BetaCount { expected: usize, got: usize },
    #[error("no explorable action separates hypotheses {theta} and {m}")]
    NoExplorationPossible { theta: usize, m: usize },
    #[error("action distribution for z = {z} has negative remainder {remainder}")]
    InvalidPmf { z: usize, remainder: f64 },
    #[error("trial hit the step cap of {0}")]
    TrialBudgetExceeded(u64),
    #[error("hypotheses {theta} and {m} cannot be told apart by any action")]
    Inseparable { theta: usize, m: usize },
    #[error("stopping-time budget must be a finite number >= 1, got {0}")]
    InvalidHorizon(f64),
    #[error("forcing the adaptive test needs T >= e, got {0}")]
    ForcedBelowE(f64),
    #[error("exploration probability must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Region(#[from] RegionError),
}

/// Per-model data shared by every `T` and every trial.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub env: Environment,
    pub table: DivergenceTable,
    pub poly: ConstraintPolytope,
    pub exploration: Exploration,
    pub report: ValidationReport,
}

impl Artifacts {
    /// Validates the model and requires every pair to be separable by some action.
    pub fn new(env: Environment) -> Result<Self, PolicyError> {
        let report = validate_model(&env)?;
        let table = build_table(&env)?;
        if !report.separable {
            let (theta, m) = table
                .ordered_pairs()
                .find(|&(th, m)| {
                    (0..table.actions())
                        .all(|a| (0..table.sets()).all(|z| table.get(a, z, th, m) <= 0.0))
                })
                .unwrap_or((0, 1));
            return Err(PolicyError::Inseparable { theta, m });
        }
        let exploration = choose_exploration_rate(&env, &table)?;
        let poly = ConstraintPolytope::from_env(&env);
        Ok(Self {
            env,
            table,
            poly,
            exploration,
            report,
        })
    }

    /// `β^m` maximizing `min_{θ≠m} e*_{m|θ}(β)` over the constraint set.
    pub fn auto_betas(&self) -> Result<Vec<SelectionFrequency>, PolicyError> {
        let risk = decision_risk_exponents(&self.table, &self.poly)?;
        Ok(risk
            .beta
            .into_iter()
            .map(|b| {
                // LP round-off can leave entries a hair below zero.
                let values = b.values().iter().map(|v| v.max(0.0)).collect();
                SelectionFrequency::from_values(b.actions(), b.sets(), values)
                    .expect("same dimensions")
            })
            .collect())
    }
}
