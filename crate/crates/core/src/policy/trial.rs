//! LLR bookkeeping, the action distribution, and the trial loop.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use crate::model::{Environment, SelectionFrequency};

use super::params::{build_params, Exploration, ParamOptions, Regime, TestParams};
use super::{Artifacts, PolicyError};

const PMF_TOL: f64 = 1e-12;

/// Cumulative log-likelihood ratios `S[θ][m]` in nats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlrState {
    s: Vec<Vec<f64>>,
    t: u64,
}

impl LlrState {
    pub fn new(hypotheses: usize) -> Self {
        Self {
            s: vec![vec![0.0; hypotheses]; hypotheses],
            t: 0,
        }
    }

    /// Builds a state from an arbitrary matrix (diagonal ignored).
    pub fn from_matrix(s: Vec<Vec<f64>>, t: u64) -> Self {
        Self { s, t }
    }

    pub fn hypotheses(&self) -> usize {
        self.s.len()
    }

    pub fn get(&self, theta: usize, m: usize) -> f64 {
        self.s[theta][m]
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    /// Adds one observation given `log P_θ(x)` for every `θ`.
    /// Pairwise differences of the same numbers keep `S` exactly antisymmetric.
    pub fn update(&mut self, log_probs: &[f64]) {
        let h = self.s.len();
        for theta in 0..h {
            for m in 0..h {
                if theta != m {
                    self.s[theta][m] += log_probs[theta] - log_probs[m];
                }
            }
        }
        self.t += 1;
    }

    /// A step with nothing observed (`a ∩ z = ∅`).
    pub fn tick(&mut self) {
        self.t += 1;
    }

    fn row_min(&self, theta: usize) -> f64 {
        (0..self.s.len())
            .filter(|&m| m != theta)
            .map(|m| self.s[theta][m])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Smallest `θ` whose row is nonnegative; falls back to the largest row sum.
pub fn mle(state: &LlrState) -> usize {
    let h = state.hypotheses();
    if let Some(theta) = (0..h).find(|&th| state.row_min(th) >= 0.0) {
        return theta;
    }
    let mut best = (0, f64::NEG_INFINITY);
    for theta in 0..h {
        let sum: f64 = (0..h)
            .filter(|&m| m != theta)
            .map(|m| state.s[theta][m])
            .sum();
        if sum > best.1 {
            best = (theta, sum);
        }
    }
    best.0
}

/// Smallest `θ` with `S[θ][m] ≥ T·A_{θ,m} − ε_θ` for every `m ≠ θ`.
pub fn should_stop(state: &LlrState, params: &TestParams) -> Option<usize> {
    let h = state.hypotheses();
    (0..h).find(|&theta| {
        (0..h)
            .filter(|&m| m != theta)
            .all(|m| state.s[theta][m] >= params.thresholds[theta][m])
    })
}

/// `P(a | z)` while `θ̂` is the estimate; index 0 is `∅` and takes the remainder.
pub fn action_pmf(
    env: &Environment,
    exploration: &Exploration,
    epsilon: f64,
    beta: &SelectionFrequency,
    z: usize,
) -> Result<Vec<f64>, PolicyError> {
    let alpha = env.availability.alpha(z);
    let mut pmf = vec![0.0; env.actions.len()];
    let mut used = 0.0;
    for (a, p) in pmf.iter_mut().enumerate().skip(1) {
        let explore = if exploration.explores(a, z) {
            exploration.inv_h
        } else {
            0.0
        };
        *p = ((1.0 - epsilon) * beta.get(a, z) + epsilon * explore) / alpha;
        used += *p;
    }
    let remainder = 1.0 - used;
    if remainder < -PMF_TOL {
        return Err(PolicyError::InvalidPmf { z, remainder });
    }
    pmf[0] = remainder.max(0.0);
    Ok(pmf)
}

/// Observation model for one `(a, z)` pair.
#[derive(Debug, Clone)]
struct Observation {
    /// `None` when nothing is observed.
    samplers: Option<Vec<WeightedIndex<f64>>>,
    /// `log_probs[cell][θ]`.
    log_probs: Vec<Vec<f64>>,
}

/// Outcome of one run of the test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialResult {
    pub tau: u64,
    pub declared: usize,
    /// `B_{τ,j}`: times source `j` was observed.
    pub source_counts: Vec<u64>,
    /// Times each `(a, z)` occurred, indexed `a·|Z| + z`.
    pub action_counts: Vec<u64>,
    pub regime: Regime,
}

/// The test at one stopping-time budget, ready to simulate.
#[derive(Debug, Clone)]
pub struct Policy {
    env: Environment,
    params: TestParams,
    betas: Vec<SelectionFrequency>,
    availability: WeightedIndex<f64>,
    /// `actions[θ̂][z]`; `None` when the pmf is a point mass (sampler needs two weights).
    actions: Vec<Vec<(Vec<f64>, WeightedIndex<f64>)>>,
    observations: Vec<Observation>,
    max_steps: u64,
}

impl Policy {
    pub fn new(
        artifacts: &Artifacts,
        t: f64,
        betas: Vec<SelectionFrequency>,
        options: ParamOptions,
    ) -> Result<Self, PolicyError> {
        let env = &artifacts.env;
        let params = build_params(
            t,
            env,
            &artifacts.table,
            &artifacts.exploration,
            &betas,
            artifacts.report.max_llr,
            options,
        )?;
        let (h, na, nz) = (env.hypotheses(), env.actions.len(), env.availability.len());
        let availability =
            WeightedIndex::new(env.availability.probs()).expect("availability is a valid pmf");
        let mut actions = Vec::with_capacity(h);
        for beta in &betas {
            let mut per_z = Vec::with_capacity(nz);
            for z in 0..nz {
                let pmf = action_pmf(env, &artifacts.exploration, params.epsilon, beta, z)?;
                let sampler = WeightedIndex::new(&pmf).map_err(|_| PolicyError::InvalidPmf {
                    z,
                    remainder: pmf[0],
                })?;
                per_z.push((pmf, sampler));
            }
            actions.push(per_z);
        }
        let mut observations = Vec::with_capacity(na * nz);
        for a in 0..na {
            for z in 0..nz {
                if env.selected(a, z).is_empty() {
                    observations.push(Observation {
                        samplers: None,
                        log_probs: Vec::new(),
                    });
                    continue;
                }
                let marginals: Vec<_> = (0..h).map(|th| env.marginal(a, z, th)).collect();
                let cells = marginals[0].len();
                let log_probs = (0..cells)
                    .map(|c| marginals.iter().map(|p| p.probs()[c].ln()).collect())
                    .collect();
                let samplers = marginals
                    .iter()
                    .map(|p| WeightedIndex::new(p.probs()).expect("marginal is a valid pmf"))
                    .collect();
                observations.push(Observation {
                    samplers: Some(samplers),
                    log_probs,
                });
            }
        }
        let max_steps = (200.0 * t).ceil().max(1.0) as u64;
        Ok(Self {
            env: env.clone(),
            params,
            betas,
            availability,
            actions,
            observations,
            max_steps,
        })
    }

    pub fn params(&self) -> &TestParams {
        &self.params
    }

    pub fn betas(&self) -> &[SelectionFrequency] {
        &self.betas
    }

    /// Precomputed `P(· | z)` while `θ̂` is the estimate.
    pub fn action_distribution(&self, theta_hat: usize, z: usize) -> &[f64] {
        &self.actions[theta_hat][z].0
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps.max(1);
        self
    }

    /// One adaptive step under ground truth `truth`; returns `(a, z)`.
    fn step<R: Rng + ?Sized>(
        &self,
        truth: usize,
        state: &mut LlrState,
        rng: &mut R,
    ) -> (usize, usize) {
        let z = self.availability.sample(rng);
        let theta_hat = mle(state);
        let a = self.actions[theta_hat][z].1.sample(rng);
        let obs = &self.observations[a * self.env.availability.len() + z];
        match &obs.samplers {
            Some(samplers) => {
                let cell = samplers[truth].sample(rng);
                state.update(&obs.log_probs[cell]);
            }
            None => state.tick(),
        }
        (a, z)
    }

    /// Runs the test once. The step cap marks the trial invalid.
    pub fn run_trial<R: Rng + ?Sized>(
        &self,
        truth: usize,
        rng: &mut R,
    ) -> Result<TrialResult, PolicyError> {
        let h = self.env.hypotheses();
        let (na, nz) = (self.env.actions.len(), self.env.availability.len());
        let mut action_counts = vec![0u64; na * nz];
        let mut source_counts = vec![0u64; self.env.sources()];
        if self.params.regime == Regime::Guess {
            return Ok(TrialResult {
                tau: 1,
                declared: rng.random_range(0..h),
                source_counts,
                action_counts,
                regime: Regime::Guess,
            });
        }
        let mut state = LlrState::new(h);
        while state.time() < self.max_steps {
            let (a, z) = self.step(truth, &mut state, rng);
            action_counts[a * nz + z] += 1;
            for j in self.env.selected(a, z).iter() {
                source_counts[j] += 1;
            }
            if let Some(declared) = should_stop(&state, &self.params) {
                return Ok(TrialResult {
                    tau: state.time(),
                    declared,
                    source_counts,
                    action_counts,
                    regime: Regime::Adaptive,
                });
            }
        }
        Err(PolicyError::TrialBudgetExceeded(self.max_steps))
    }

    /// Runs `t` adaptive steps without stopping and returns the LLR state.
    pub fn run_prefix<R: Rng + ?Sized>(&self, truth: usize, t: u64, rng: &mut R) -> LlrState {
        let mut state = LlrState::new(self.env.hypotheses());
        for _ in 0..t {
            self.step(truth, &mut state, rng);
        }
        state
    }
}
