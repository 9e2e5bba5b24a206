//! Membership in the fixed-proportion (non-adaptive, per-source) region.
//!
//! With per-source sampling proportions `β_j` and
//! `g_θ(P) = Σ_j β_j D(P_j ‖ P_{θ,j})`, a tuple `e` belongs to the region iff
//! `min_P f(P) ≥ 0` where
//!
//! ```text
//! f(P) = max_m min_{θ≠m} [ g_θ(P) − e_{m|θ} ].
//! ```
//!
//! Read operationally: whatever empirical distribution `P` is observed, some
//! declaration `m` keeps every error exponent `e_{m|θ}` below the rate at
//! which `P` becomes atypical under `θ`.
//!
//! `f` is not convex, but `max_m min_θ` equals `min_c max_m` over choice
//! functions `c: m ↦ c(m) ≠ m`, so `min_P f = min_c v_c` with
//! `v_c = min_P max_m [g_{c(m)}(P) − e_{m|c(m)}]` convex. Each `v_c` has the
//! exact dual
//!
//! ```text
//! h_c(λ) = Σ_j β_j (−log Σ_x Π_θ P_{θ,j}(x)^{w_θ}) − Σ_m λ_m e_{m|c(m)},
//! w_θ = Σ_{m: c(m)=θ} λ_m,   λ in the simplex,
//! ```
//!
//! whose inner minimizer is the normalized geometric mixture. Any `λ` with
//! `h_c(λ) ≥ 0` certifies `v_c ≥ 0`; the mixture at the dual optimum is the
//! primal optimum and serves as an explicit witness when `v_c < 0`.

use serde::Serialize;

use crate::model::JointModel;

use super::{ExponentTuple, RegionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TuncelVerdict {
    In,
    Out,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuncelOptions {
    /// Dual ascent iterations per choice function.
    pub max_iters: usize,
    /// `in` is reported when every dual bound is at least `-in_tol`.
    pub in_tol: f64,
    /// `out` needs a witness with `f(P) < -out_tol`.
    pub out_tol: f64,
}

impl Default for TuncelOptions {
    fn default() -> Self {
        TuncelOptions {
            max_iters: 2000,
            in_tol: 1e-12,
            out_tol: 1e-9,
        }
    }
}

/// Per-source log-probabilities on the common support, for sources with `β_j > 0`.
struct Sources {
    weights: Vec<f64>,
    /// `log_q[j][θ][x]`.
    log_q: Vec<Vec<Vec<f64>>>,
}

impl Sources {
    fn new(model: &JointModel, beta: &[f64]) -> Self {
        let h = model.hypotheses();
        let marginals: Vec<Vec<Vec<f64>>> = (0..h).map(|t| model.source_marginals(t)).collect();
        let mut weights = Vec::new();
        let mut log_q = Vec::new();
        for (j, &b) in beta.iter().enumerate() {
            if b <= 0.0 {
                continue;
            }
            let support: Vec<usize> = (0..marginals[0][j].len())
                .filter(|&x| marginals[0][j][x] > 0.0)
                .collect();
            weights.push(b);
            log_q.push(
                (0..h)
                    .map(|t| support.iter().map(|&x| marginals[t][j][x].ln()).collect())
                    .collect(),
            );
        }
        Sources { weights, log_q }
    }

    /// Normalized geometric mixture per source and `Σ_j β_j (−log Z_j)`.
    fn mixture(&self, w: &[f64]) -> (Vec<Vec<f64>>, f64) {
        let mut value = 0.0;
        let mut mixture = Vec::with_capacity(self.log_q.len());
        for (b, lq) in self.weights.iter().zip(&self.log_q) {
            let logs: Vec<f64> = (0..lq[0].len())
                .map(|x| w.iter().zip(lq).map(|(wt, q)| wt * q[x]).sum())
                .collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logs.iter().map(|l| (l - top).exp()).sum();
            let log_z = top + z.ln();
            value -= b * log_z;
            mixture.push(logs.iter().map(|l| (l - log_z).exp()).collect());
        }
        (mixture, value)
    }

    /// `g_θ(P)` for every `θ`.
    fn rates(&self, p: &[Vec<f64>], hypotheses: usize) -> Vec<f64> {
        (0..hypotheses)
            .map(|t| {
                self.weights
                    .iter()
                    .zip(&self.log_q)
                    .zip(p)
                    .map(|((b, lq), pj)| {
                        b * pj
                            .iter()
                            .zip(&lq[t])
                            .filter(|(px, _)| **px > 0.0)
                            .map(|(px, lqx)| px * (px.ln() - lqx))
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }
}

/// `f(P) = max_m min_{θ≠m} [g_θ(P) − e_{m|θ}]` from the rates `g`.
fn objective(g: &[f64], tuple: &ExponentTuple) -> f64 {
    let h = g.len();
    (0..h)
        .map(|m| {
            (0..h)
                .filter(|&t| t != m)
                .map(|t| g[t] - tuple.get(m, t))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Evaluates `f(P)` at explicit per-source distributions `p[j]` (full alphabets).
pub fn tuncel_objective(
    tuple: &ExponentTuple,
    model: &JointModel,
    beta: &[f64],
    p: &[Vec<f64>],
) -> f64 {
    let h = model.hypotheses();
    let g: Vec<f64> = (0..h)
        .map(|t| {
            let q = model.source_marginals(t);
            beta.iter()
                .zip(p)
                .zip(&q)
                .filter(|((b, _), _)| **b > 0.0)
                .map(|((b, pj), qj)| {
                    b * pj
                        .iter()
                        .zip(qj)
                        .filter(|(px, _)| **px > 0.0)
                        .map(|(px, qx)| px * (px / qx).ln())
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    objective(&g, tuple)
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

enum ChoiceOutcome {
    Certified,
    Witness,
    Undecided,
}

fn resolve_choice(
    sources: &Sources,
    tuple: &ExponentTuple,
    choice: &[usize],
    options: &TuncelOptions,
) -> ChoiceOutcome {
    let h = choice.len();
    let weights = |lambda: &[f64]| {
        let mut w = vec![0.0; h];
        for (m, &l) in lambda.iter().enumerate() {
            w[choice[m]] += l;
        }
        w
    };
    let offsets: Vec<f64> = (0..h).map(|m| tuple.get(m, choice[m])).collect();
    // Returns (h_c(λ), ∇h_c(λ), primal witness f(P(λ))).
    let evaluate = |lambda: &[f64]| {
        let w = weights(lambda);
        let (mixture, base) = sources.mixture(&w);
        let value = base - lambda.iter().zip(&offsets).map(|(l, e)| l * e).sum::<f64>();
        // ∂/∂w_θ of Σ_j β_j(−log Z_j) is −Σ_j β_j E_{P*_j}[log P_{θ,j}].
        let dw: Vec<f64> = (0..h)
            .map(|t| {
                -sources
                    .weights
                    .iter()
                    .zip(&sources.log_q)
                    .zip(&mixture)
                    .map(|((b, lq), p)| b * p.iter().zip(&lq[t]).map(|(px, l)| px * l).sum::<f64>())
                    .sum::<f64>()
            })
            .collect();
        let grad: Vec<f64> = (0..h).map(|m| dw[choice[m]] - offsets[m]).collect();
        let witness = objective(&sources.rates(&mixture, h), tuple);
        (value, grad, witness)
    };

    let mut lambda = vec![1.0 / h as f64; h];
    let (mut value, mut grad, mut witness) = evaluate(&lambda);
    let mut step = 1.0;
    for _ in 0..options.max_iters {
        if value >= -options.in_tol {
            return ChoiceOutcome::Certified;
        }
        if witness < -options.out_tol {
            return ChoiceOutcome::Witness;
        }
        let mut moved = false;
        while step > 1e-14 {
            let trial: Vec<f64> = lambda
                .iter()
                .zip(&grad)
                .map(|(l, g)| l + step * g)
                .collect();
            let trial = project_simplex(&trial);
            let ascent: f64 = trial
                .iter()
                .zip(&lambda)
                .zip(&grad)
                .map(|((t, l), g)| (t - l) * g)
                .sum();
            let (v, g, wit) = evaluate(&trial);
            if v >= value + 1e-4 * ascent && ascent > 0.0 {
                let change: f64 = trial.iter().zip(&lambda).map(|(a, b)| (a - b).abs()).sum();
                lambda = trial;
                value = v;
                grad = g;
                witness = wit;
                step *= 2.0;
                moved = change > 1e-15;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if value >= -options.in_tol {
        ChoiceOutcome::Certified
    } else if witness < -options.out_tol {
        ChoiceOutcome::Witness
    } else {
        ChoiceOutcome::Undecided
    }
}

/// Decides membership of `tuple` in the fixed-proportion region for the
/// per-source proportions `beta`.
pub fn tuncel_membership(
    tuple: &ExponentTuple,
    model: &JointModel,
    beta: &[f64],
    options: &TuncelOptions,
) -> Result<TuncelVerdict, RegionError> {
    let h = model.hypotheses();
    if tuple.hypotheses() != h {
        return Err(RegionError::DimensionMismatch {
            expected: h,
            got: tuple.hypotheses(),
        });
    }
    if beta.len() != model.sources() {
        return Err(RegionError::InvalidProportions(format!(
            "expected {} entries, got {}",
            model.sources(),
            beta.len()
        )));
    }
    if beta.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(RegionError::InvalidProportions(
            "entries must be finite and nonnegative".into(),
        ));
    }
    if !model.is_product_form(1e-12) {
        return Err(RegionError::NotProductForm);
    }
    let sources = Sources::new(model, beta);

    let mut undecided = false;
    let mut choice = vec![0usize; h];
    let total = (h - 1).pow(h as u32);
    for mut code in 0..total {
        for (m, c) in choice.iter_mut().enumerate() {
            let k = code % (h - 1);
            code /= h - 1;
            *c = if k >= m { k + 1 } else { k };
        }
        match resolve_choice(&sources, tuple, &choice, options) {
            ChoiceOutcome::Certified => {}
            ChoiceOutcome::Witness => return Ok(TuncelVerdict::Out),
            ChoiceOutcome::Undecided => undecided = true,
        }
    }
    Ok(if undecided {
        TuncelVerdict::Unresolved
    } else {
        TuncelVerdict::In
    })
}
