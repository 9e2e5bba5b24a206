//! The constraint polytope `C` of selection frequencies and its vertices.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::lp::{LinearProgram, Relation};
use crate::model::{Environment, SelectionFrequency, BUDGET_TOL, MEMBERSHIP_TOL};

use super::RegionError;

/// Active-set systems examined before giving up; far beyond desk scale.
pub const MAX_ACTIVE_SETS: u128 = 5_000_000;

const DEDUP_TOL: f64 = 1e-9;

/// `C = {β ≥ 0, Σ_a β_{a,z} = α_z ∀z, ⟨c_i, ω(β)⟩ ≤ r_i ∀i}` written over
/// the `|A|·|Z|` coordinates of `β` (action-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintPolytope {
    actions: usize,
    sets: usize,
    alpha: Vec<f64>,
    /// `weights[i][a·|Z| + z] = Σ_{j ∈ a∩z} c_{i,j}`, so budget `i` reads `⟨weights_i, β⟩ ≤ r_i`.
    weights: Vec<Vec<f64>>,
    rates: Vec<f64>,
}

impl ConstraintPolytope {
    pub fn from_env(env: &Environment) -> Self {
        let (actions, sets) = (env.actions.len(), env.availability.len());
        let weights = env
            .budgets
            .iter()
            .map(|b| {
                (0..actions)
                    .flat_map(|a| (0..sets).map(move |z| (a, z)))
                    .map(|(a, z)| b.weight(env.selected(a, z)))
                    .collect()
            })
            .collect();
        ConstraintPolytope {
            actions,
            sets,
            alpha: env.availability.probs().to_vec(),
            weights,
            rates: env.budgets.iter().map(|b| b.rate).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.actions * self.sets
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn budget_count(&self) -> usize {
        self.rates.len()
    }

    /// Budget `i` evaluated at `β`.
    pub fn budget_load(&self, i: usize, beta: &SelectionFrequency) -> f64 {
        self.weights[i]
            .iter()
            .zip(beta.values())
            .map(|(w, b)| w * b)
            .sum()
    }

    pub fn contains(&self, beta: &SelectionFrequency) -> bool {
        if beta.values().len() != self.dim() || beta.values().iter().any(|&b| !(b >= 0.0)) {
            return false;
        }
        let sums_ok = (0..self.sets).all(|z| {
            let total: f64 = (0..self.actions).map(|a| beta.get(a, z)).sum();
            (total - self.alpha[z]).abs() <= MEMBERSHIP_TOL
        });
        sums_ok
            && (0..self.rates.len())
                .all(|i| self.budget_load(i, beta) <= self.rates[i] + BUDGET_TOL)
    }

    /// Adds the rows of `C` to `lp`, with `β` occupying columns `offset..offset + dim`.
    pub fn push_rows(&self, lp: &mut LinearProgram, offset: usize) {
        let vars = lp.vars();
        for z in 0..self.sets {
            let mut row = vec![0.0; vars];
            for a in 0..self.actions {
                row[offset + a * self.sets + z] = 1.0;
            }
            lp.push(row, Relation::Eq, self.alpha[z]);
        }
        for (w, &r) in self.weights.iter().zip(&self.rates) {
            if w.iter().all(|&v| v == 0.0) {
                continue;
            }
            let mut row = vec![0.0; vars];
            row[offset..offset + self.dim()].copy_from_slice(w);
            lp.push(row, Relation::Le, r);
        }
    }

    fn to_beta(&self, values: Vec<f64>) -> SelectionFrequency {
        SelectionFrequency::from_values(self.actions, self.sets, values)
            .expect("dimension matches polytope")
    }

    /// All extreme points of `C`, found by solving every square system of
    /// `|A|·|Z| − |Z|` tight inequalities together with the equalities.
    pub fn enumerate_vertices(&self) -> Result<Vec<SelectionFrequency>, RegionError> {
        let d = self.dim();
        let tight_needed = d - self.sets;
        let candidates = d + self.rates.len();
        let count = binomial(candidates as u128, tight_needed as u128);
        if count > MAX_ACTIVE_SETS {
            return Err(RegionError::TooManyActiveSets { count });
        }

        let mut vertices: Vec<Vec<f64>> = Vec::new();
        for tight in (0..candidates).combinations(tight_needed) {
            let mut m = DMatrix::<f64>::zeros(d, d);
            let mut rhs = DVector::<f64>::zeros(d);
            for z in 0..self.sets {
                for a in 0..self.actions {
                    m[(z, a * self.sets + z)] = 1.0;
                }
                rhs[z] = self.alpha[z];
            }
            for (row, &k) in tight.iter().enumerate() {
                let r = self.sets + row;
                if k < d {
                    m[(r, k)] = 1.0;
                } else {
                    let i = k - d;
                    for (col, &w) in self.weights[i].iter().enumerate() {
                        m[(r, col)] = w;
                    }
                    rhs[r] = self.rates[i];
                }
            }
            // SVD decides rank; the pivoted LU solve keeps 0/1 systems exact.
            let singular = m.clone().singular_values();
            if singular.min() <= 1e-10 * singular.max().max(1.0) {
                continue;
            }
            let Some(x) = m.full_piv_lu().solve(&rhs) else {
                continue;
            };
            let mut x: Vec<f64> = x.iter().copied().collect();
            if x.iter().any(|&v| v < -DEDUP_TOL) {
                continue;
            }
            for v in x.iter_mut() {
                if *v < 0.0 || v.abs() < 1e-15 {
                    *v = 0.0;
                }
            }
            let feasible =
                self.weights.iter().zip(&self.rates).all(|(w, &r)| {
                    w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() <= r + DEDUP_TOL
                });
            if !feasible {
                continue;
            }
            let duplicate = vertices
                .iter()
                .any(|v| v.iter().zip(&x).all(|(p, q)| (p - q).abs() <= DEDUP_TOL));
            if !duplicate {
                vertices.push(x);
            }
        }
        if vertices.is_empty() {
            return Err(RegionError::InfeasiblePolytope);
        }
        Ok(vertices.into_iter().map(|v| self.to_beta(v)).collect())
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}
