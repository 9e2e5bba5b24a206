//! Monte Carlo experiments: error probabilities, fitted exponents and
//! constraint checks.
//!
//! Every trial draws from its own generator seeded by
//! [`trial_seed`](crate::seed::trial_seed), so results are bit-identical
//! regardless of how rayon schedules the work.

pub mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Budget, SelectionFrequency};
use crate::policy::{Artifacts, ParamOptions, Policy, PolicyError, Regime};
use crate::seed::trial_seed;

pub use stats::{fit_line, mean_and_se, one_sided_z, two_sided_z, wilson_interval, LineFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Stopping-time budgets, strictly increasing.
    pub t_grid: Vec<f64>,
    /// Ground truths to simulate.
    pub truths: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    /// Two-sided level of the reported intervals.
    pub confidence: f64,
    /// Per-trial step cap; defaults to `200·T`.
    pub max_steps: Option<u64>,
    pub options: ParamOptions,
}

impl ExperimentConfig {
    pub fn new(t_grid: Vec<f64>, truths: Vec<usize>, trials: u64, seed: u64) -> Self {
        Self {
            t_grid,
            truths,
            trials,
            seed,
            confidence: 0.95,
            max_steps: None,
            options: ParamOptions::default(),
        }
    }

    fn check(&self, hypotheses: usize) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.t_grid.is_empty() {
            return bad("the T grid is empty");
        }
        if self.t_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("the T grid must be strictly increasing");
        }
        if self.truths.is_empty() || self.truths.iter().any(|&t| t >= hypotheses) {
            return bad("ground truths must index existing hypotheses");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad("confidence must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Aggregates for one `(T, θ*)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub t: f64,
    pub truth: usize,
    pub trials: u64,
    /// Trials that hit the step cap; excluded from every other estimate.
    pub invalid: u64,
    /// How often each hypothesis was declared.
    pub declared: Vec<u64>,
    /// `π̂_{m|θ*}` for every `m` (the `m = θ*` entry is the success rate).
    pub pi_hat: Vec<f64>,
    pub pi_ci: Vec<(f64, f64)>,
    pub mean_tau: f64,
    pub tau_se: f64,
    /// Mean `B_{τ,j}` per source and its standard error.
    pub source_usage: Vec<f64>,
    pub source_usage_se: Vec<f64>,
    /// Mean `b_i(B_τ)` per budget and its standard error.
    pub budget_usage: Vec<f64>,
    pub budget_usage_se: Vec<f64>,
    pub regime: Regime,
    pub forced: bool,
}

impl CellReport {
    pub fn valid(&self) -> u64 {
        self.trials - self.invalid
    }

    pub fn invalid_fraction(&self) -> f64 {
        self.invalid as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub hypotheses: usize,
    pub trials: u64,
    pub seed: u64,
    pub confidence: f64,
    pub budgets: Vec<Budget>,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn cell(&self, t: f64, truth: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.t == t && c.truth == truth)
    }
}

/// Runs every `(T, θ*)` cell of the experiment.
pub fn estimate_errors(
    artifacts: &Artifacts,
    betas: &[SelectionFrequency],
    config: &ExperimentConfig,
) -> Result<ExperimentReport, SimError> {
    let h = artifacts.env.hypotheses();
    config.check(h)?;
    let budgets: Vec<Budget> = artifacts.env.budgets.budgets().to_vec();
    let mut cells = Vec::new();
    for &t in &config.t_grid {
        let mut policy = Policy::new(artifacts, t, betas.to_vec(), config.options)?;
        if let Some(cap) = config.max_steps {
            policy = policy.with_max_steps(cap);
        }
        for &truth in &config.truths {
            let results: Vec<Result<_, PolicyError>> = (0..config.trials)
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, truth, t, i));
                    policy.run_trial(truth, &mut rng)
                })
                .collect();
            let mut valid = Vec::with_capacity(results.len());
            let mut invalid = 0;
            for r in results {
                match r {
                    Ok(r) => valid.push(r),
                    Err(PolicyError::TrialBudgetExceeded(_)) => invalid += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            let n = valid.len() as u64;
            let mut declared = vec![0u64; h];
            for r in &valid {
                declared[r.declared] += 1;
            }
            let pi_hat = declared
                .iter()
                .map(|&k| if n == 0 { 0.0 } else { k as f64 / n as f64 })
                .collect();
            let pi_ci = declared
                .iter()
                .map(|&k| wilson_interval(k, n, config.confidence))
                .collect();
            let (mean_tau, tau_se) = mean_and_se(valid.iter().map(|r| r.tau as f64));
            let sources = artifacts.env.sources();
            let (source_usage, source_usage_se) = (0..sources)
                .map(|j| mean_and_se(valid.iter().map(|r| r.source_counts[j] as f64)))
                .unzip();
            let (budget_usage, budget_usage_se) = budgets
                .iter()
                .map(|b| {
                    mean_and_se(valid.iter().map(|r| {
                        let counts: Vec<f64> = r.source_counts.iter().map(|&c| c as f64).collect();
                        b.cost(&counts)
                    }))
                })
                .unzip();
            cells.push(CellReport {
                t,
                truth,
                trials: config.trials,
                invalid,
                declared,
                pi_hat,
                pi_ci,
                mean_tau,
                tau_se,
                source_usage,
                source_usage_se,
                budget_usage,
                budget_usage_se,
                regime: policy.params().regime,
                forced: policy.params().forced,
            });
        }
    }
    Ok(ExperimentReport {
        hypotheses: h,
        trials: config.trials,
        seed: config.seed,
        confidence: config.confidence,
        budgets,
        cells,
    })
}

/// Estimate of `e_{m|θ}` from the decay of `π̂_{m|θ}` across the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExponentEstimate {
    /// Slope of `−log π̂` against `T`.
    Fitted {
        slope: f64,
        stderr: f64,
        points: usize,
    },
    /// No errors observed: `−log(1/N)/T` at the largest such `T`.
    LowerBound { value: f64, t: f64 },
    /// Fewer than three usable grid points.
    InsufficientData { points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentEntry {
    pub declared: usize,
    pub truth: usize,
    pub estimate: ExponentEstimate,
}

/// Fits every `(m, θ)` entry with `m ≠ θ` present in the report.
pub fn fit_exponents(report: &ExperimentReport) -> Vec<ExponentEntry> {
    let mut truths: Vec<usize> = report.cells.iter().map(|c| c.truth).collect();
    truths.sort_unstable();
    truths.dedup();
    let mut out = Vec::new();
    for &truth in &truths {
        let cells: Vec<&CellReport> = report.cells.iter().filter(|c| c.truth == truth).collect();
        for m in (0..report.hypotheses).filter(|&m| m != truth) {
            let usable: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| {
                    let (lo, hi) = c.pi_ci[m];
                    c.pi_hat[m] > 0.0 && hi - lo < c.pi_hat[m]
                })
                .map(|c| (c.t, -c.pi_hat[m].ln()))
                .collect();
            let estimate = if usable.len() >= 3 {
                let (x, y): (Vec<f64>, Vec<f64>) = usable.iter().copied().unzip();
                let fit = fit_line(&x, &y).expect("grid is strictly increasing");
                ExponentEstimate::Fitted {
                    slope: fit.slope,
                    stderr: fit.slope_se,
                    points: usable.len(),
                }
            } else if let Some(c) = cells
                .iter()
                .filter(|c| c.declared[m] == 0 && c.valid() > 0)
                .max_by(|a, b| a.t.total_cmp(&b.t))
            {
                ExponentEstimate::LowerBound {
                    value: (c.valid() as f64).ln() / c.t,
                    t: c.t,
                }
            } else {
                ExponentEstimate::InsufficientData {
                    points: usable.len(),
                }
            };
            out.push(ExponentEntry {
                declared: m,
                truth,
                estimate,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `E[τ] ≤ T`.
    StoppingTime,
    /// `b_i(B) ≤ r_i T`.
    Budget(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub t: f64,
    pub truth: usize,
    pub kind: ConstraintKind,
    pub mean: f64,
    pub stderr: f64,
    pub bound: f64,
    /// `bound − mean`.
    pub slack: f64,
    /// False only when `mean − z·se > bound` at the one-sided level.
    pub pass: bool,
}

/// Checks `E[τ] ≤ T` and `b_i(B) ≤ r_i T` per cell with one-sided tests.
pub fn verify_constraints(report: &ExperimentReport, level: f64) -> Vec<ConstraintCheck> {
    let z = one_sided_z(level);
    let mut out = Vec::new();
    for c in &report.cells {
        let mut push = |kind, mean: f64, stderr: f64, bound: f64| {
            out.push(ConstraintCheck {
                t: c.t,
                truth: c.truth,
                kind,
                mean,
                stderr,
                bound,
                slack: bound - mean,
                pass: mean - z * stderr <= bound,
            })
        };
        push(ConstraintKind::StoppingTime, c.mean_tau, c.tau_se, c.t);
        for (i, b) in report.budgets.iter().enumerate() {
            push(
                ConstraintKind::Budget(i),
                c.budget_usage[i],
                c.budget_usage_se[i],
                b.rate * c.t,
            );
        }
    }
    out
}

/// Mean and standard error of `e^{S_{t,m,θ}}` over `trials` prefixes under
/// truth `θ`; the true mean is exactly 1.
pub fn martingale_check(
    policy: &Policy,
    truth: usize,
    m: usize,
    t: u64,
    trials: u64,
    seed: u64,
) -> (f64, f64) {
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, truth, t as f64, i));
            policy.run_prefix(truth, t, &mut rng).get(m, truth).exp()
        })
        .collect();
    mean_and_se(values)
}
