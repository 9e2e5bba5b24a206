//! JSON model files.
//!
//! ```json
//! {
//!   "M": 2, "n": 1, "alphabets": [2],
//!   "hypotheses": [{"independent": [[0.8, 0.2]]}, {"joint": [0.3, 0.7]}],
//!   "availability": [{"subset": [1], "prob": 1.0}],
//!   "actions": [[1]],
//!   "budgets": [{"coeff": [1.0], "rate": 0.5}]
//! }
//! ```
//!
//! Sources are labelled from 1. `availability` defaults to every source
//! always available, `actions` to the singletons, and `∅` is always added
//! as action 0. Parse errors carry the JSON path of the offending value.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    product_table, ActionSpace, Alphabet, AvailabilityDist, Budget, BudgetSpec, Environment,
    JointModel, ModelError, SourceSet, Tolerances,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid model file at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum HypothesisSpec {
    /// Per-source PMFs; the joint table is their product.
    Independent(Vec<Vec<f64>>),
    /// Row-major joint table, last source fastest.
    Joint(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvailabilityEntry {
    pub subset: Vec<usize>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "M")]
    pub hypotheses_count: usize,
    pub n: usize,
    pub alphabets: Vec<usize>,
    pub hypotheses: Vec<HypothesisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability: Option<Vec<AvailabilityEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub budgets: Vec<Budget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    pub fn to_environment(&self) -> Result<Environment, ConfigError> {
        if self.alphabets.len() != self.n {
            return Err(ConfigError::Inconsistent(format!(
                "n = {} but {} alphabet sizes given",
                self.n,
                self.alphabets.len()
            )));
        }
        if self.hypotheses.len() != self.hypotheses_count {
            return Err(ConfigError::Inconsistent(format!(
                "M = {} but {} hypotheses given",
                self.hypotheses_count,
                self.hypotheses.len()
            )));
        }
        let tolerances = self.tolerances.unwrap_or_default();
        let alphabet = Alphabet::new(self.alphabets.clone())?;
        let mut tables = Vec::with_capacity(self.hypotheses.len());
        for (theta, spec) in self.hypotheses.iter().enumerate() {
            let table = match spec {
                HypothesisSpec::Joint(table) => table.clone(),
                HypothesisSpec::Independent(per_source) => {
                    product_table(&alphabet, per_source, theta, tolerances.normalization)?
                }
            };
            tables.push(table);
        }
        let model = JointModel::new(alphabet, tables, tolerances.normalization)?;

        let availability = match &self.availability {
            None => AvailabilityDist::always(self.n),
            Some(entries) => AvailabilityDist::new(
                entries
                    .iter()
                    .map(|e| Ok((SourceSet::from_labels(&e.subset, self.n)?, e.prob)))
                    .collect::<Result<Vec<_>, ModelError>>()?,
                tolerances.normalization,
            )?,
        };
        let actions = match &self.actions {
            None => ActionSpace::singletons(self.n),
            Some(list) => ActionSpace::new(
                list.iter()
                    .map(|a| SourceSet::from_labels(a, self.n))
                    .collect::<Result<Vec<_>, _>>()?,
            )?,
        };
        let budgets = BudgetSpec::new(self.budgets.clone(), self.n)?;
        Ok(Environment::new(model, availability, actions, budgets)?.with_tolerances(tolerances))
    }

    /// The normalized file for `env`: joint tables and every default spelled out.
    pub fn from_environment(env: &Environment) -> Self {
        let n = env.sources();
        ModelFile {
            hypotheses_count: env.hypotheses(),
            n,
            alphabets: env.model.alphabet().sizes().to_vec(),
            hypotheses: (0..env.hypotheses())
                .map(|t| HypothesisSpec::Joint(env.model.joint(t).to_vec()))
                .collect(),
            availability: Some(
                env.availability
                    .sets()
                    .iter()
                    .zip(env.availability.probs())
                    .map(|(s, &p)| AvailabilityEntry {
                        subset: s.labels(),
                        prob: p,
                    })
                    .collect(),
            ),
            actions: Some(
                env.actions.actions()[1..]
                    .iter()
                    .map(|a| a.labels())
                    .collect(),
            ),
            budgets: env.budgets.budgets().to_vec(),
            tolerances: Some(env.tolerances),
        }
    }
}

/// Reads and validates a model file.
pub fn load_environment(path: &Path) -> Result<Environment, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ModelFile::from_json(&text)?.to_environment()
}
