//! KL divergences between the per-action marginals and the exponent
//! functionals `e*_{m|θ}(β) = Σ_{a,z} β_{a,z} D(P^{a,z}_m ‖ P^{a,z}_θ)`.
//!
//! All logarithms are natural, so every quantity is in nats.

use thiserror::Error;

use crate::model::{Environment, SelectionFrequency};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("distributions have different lengths ({p} vs {q})")]
    LengthMismatch { p: usize, q: usize },
    #[error("support mismatch at symbol {index}: p = {p} but q = 0")]
    SupportMismatch { index: usize, p: f64 },
}

/// `D(p‖q) = Σ p log(p/q)` with `0·log(0/q) = 0`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::LengthMismatch {
            p: p.len(),
            q: q.len(),
        });
    }
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(DivergenceError::SupportMismatch { index, p: pi });
        }
        total += pi * (pi / qi).ln();
    }
    // Rounding can leave a tiny negative sum for p ≈ q.
    Ok(total.max(0.0))
}

/// Dense table `D[a][z][m][θ]`; entries with `a ∩ z = ∅` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceTable {
    actions: usize,
    sets: usize,
    hypotheses: usize,
    data: Vec<f64>,
}

impl DivergenceTable {
    /// Builds a table from a closure; used by tests and synthetic instances.
    pub fn from_fn(
        actions: usize,
        sets: usize,
        hypotheses: usize,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(actions * sets * hypotheses * hypotheses);
        for a in 0..actions {
            for z in 0..sets {
                for m in 0..hypotheses {
                    for theta in 0..hypotheses {
                        data.push(if m == theta { 0.0 } else { f(a, z, m, theta) });
                    }
                }
            }
        }
        DivergenceTable {
            actions,
            sets,
            hypotheses,
            data,
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn hypotheses(&self) -> usize {
        self.hypotheses
    }

    pub fn get(&self, a: usize, z: usize, m: usize, theta: usize) -> f64 {
        let h = self.hypotheses;
        self.data[((a * self.sets + z) * h + m) * h + theta]
    }

    /// `e*_{m|θ}(β)`.
    pub fn exponent(&self, beta: &SelectionFrequency, m: usize, theta: usize) -> f64 {
        let mut total = 0.0;
        for a in 0..self.actions {
            for z in 0..self.sets {
                total += beta.get(a, z) * self.get(a, z, m, theta);
            }
        }
        total
    }

    /// The full matrix `e*_{m|θ}(β)` (zero diagonal).
    pub fn exponents(&self, beta: &SelectionFrequency) -> Vec<Vec<f64>> {
        (0..self.hypotheses)
            .map(|m| {
                (0..self.hypotheses)
                    .map(|theta| self.exponent(beta, m, theta))
                    .collect()
            })
            .collect()
    }

    /// Iterates the ordered pairs `(m, θ)` with `m ≠ θ` in row-major order.
    pub fn ordered_pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let h = self.hypotheses;
        (0..h).flat_map(move |m| (0..h).filter(move |&t| t != m).map(move |t| (m, t)))
    }
}

/// Precomputes `D(P^{a,z}_m ‖ P^{a,z}_θ)` for every `(a, z, m, θ)`.
pub fn build_table(env: &Environment) -> Result<DivergenceTable, DivergenceError> {
    let h = env.hypotheses();
    let (actions, sets) = (env.actions.len(), env.availability.len());
    let mut data = Vec::with_capacity(actions * sets * h * h);
    for a in 0..actions {
        for z in 0..sets {
            let empty = env.selected(a, z).is_empty();
            let marginals: Vec<_> = if empty {
                Vec::new()
            } else {
                (0..h).map(|t| env.marginal(a, z, t)).collect()
            };
            for m in 0..h {
                for theta in 0..h {
                    data.push(if empty || m == theta {
                        0.0
                    } else {
                        kl(marginals[m].probs(), marginals[theta].probs())?
                    });
                }
            }
        }
    }
    Ok(DivergenceTable {
        actions,
        sets,
        hypotheses: h,
        data,
    })
}

/// `e*_{m|θ}(β)`; see [`DivergenceTable::exponent`].
pub fn exponent(beta: &SelectionFrequency, table: &DivergenceTable, m: usize, theta: usize) -> f64 {
    table.exponent(beta, m, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{three_hypothesis_env, THREE_HYPOTHESIS_PMFS as P};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Independent summation, no shared code with `kl`.
    fn kl_oracle(p: &[f64], q: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..p.len() {
            if p[i] > 0.0 {
                s += p[i] * p[i].ln() - p[i] * q[i].ln();
            }
        }
        s
    }

    #[test]
    fn kl_basic_values() {
        assert_eq!(kl(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            kl(&[1.0, 0.0], &[0.5, 0.5]).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        assert!(matches!(
            kl(&[0.5, 0.5], &[1.0, 0.0]),
            Err(DivergenceError::SupportMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn kl_of_reference_pair() {
        let d = kl(&P[0][0], &P[1][0]).unwrap();
        assert_abs_diff_eq!(d, kl_oracle(&P[0][0], &P[1][0]), epsilon = 1e-14);
        assert_abs_diff_eq!(d, 1.62498, epsilon = 1e-5);
    }

    #[test]
    fn chernoff_table_collapses_to_per_source_kl() {
        let env = three_hypothesis_env();
        let table = build_table(&env).unwrap();
        for j in 0..2 {
            for m in 0..3 {
                for t in 0..3 {
                    let expected = if m == t {
                        0.0
                    } else {
                        kl_oracle(&P[m][j], &P[t][j])
                    };
                    assert_abs_diff_eq!(table.get(j + 1, 0, m, t), expected, epsilon = 1e-13);
                    assert_eq!(table.get(0, 0, m, t), 0.0);
                }
            }
        }
        assert_abs_diff_eq!(table.get(1, 0, 0, 1), 1.62498, epsilon = 1e-5);
    }

    #[test]
    fn identical_hypotheses_give_zero_slice() {
        let alphabet = crate::Alphabet::new(vec![2]).unwrap();
        let model = crate::JointModel::new(
            alphabet,
            vec![vec![0.3, 0.7], vec![0.3, 0.7], vec![0.6, 0.4]],
            1e-12,
        )
        .unwrap();
        let table = build_table(&Environment::chernoff(model)).unwrap();
        assert_eq!(table.get(1, 0, 0, 1), 0.0);
        assert_eq!(table.get(1, 0, 1, 0), 0.0);
        assert!(table.get(1, 0, 0, 2) > 0.0);
    }

    #[test]
    fn exponent_examples() {
        let env = three_hypothesis_env();
        let table = build_table(&env).unwrap();
        let mut first = env.zero_beta();
        first.set(1, 0, 1.0);
        assert_abs_diff_eq!(
            exponent(&first, &table, 0, 1),
            kl_oracle(&P[0][0], &P[1][0]),
            epsilon = 1e-13
        );
        assert_eq!(exponent(&env.zero_beta(), &table, 2, 1), 0.0);

        let mut half = env.zero_beta();
        half.set(1, 0, 0.5);
        half.set(2, 0, 0.5);
        for (m, t) in table.ordered_pairs() {
            let expected =
                0.5 * kl_oracle(&P[m][0], &P[t][0]) + 0.5 * kl_oracle(&P[m][1], &P[t][1]);
            assert_abs_diff_eq!(exponent(&half, &table, m, t), expected, epsilon = 1e-13);
        }
    }

    fn pmf_strategy(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_on_diagonal(p in pmf_strategy(4), q in pmf_strategy(4)) {
            let d = kl(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!((d - kl_oracle(&p, &q)).abs() < 1e-12);
            prop_assert_eq!(kl(&p, &p).unwrap(), 0.0);
            if p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-6) {
                prop_assert!(d > 0.0);
            }
        }

        #[test]
        fn exponent_is_linear(w1 in prop::collection::vec(0.0f64..1.0, 3),
                              w2 in prop::collection::vec(0.0f64..1.0, 3),
                              lambda in 0.0f64..1.0) {
            let env = three_hypothesis_env();
            let table = build_table(&env).unwrap();
            let b1 = SelectionFrequency::from_values(3, 1, w1).unwrap();
            let b2 = SelectionFrequency::from_values(3, 1, w2).unwrap();
            let mixed = b1.mix(&b2, lambda);
            for (m, t) in table.ordered_pairs() {
                let lhs = table.exponent(&mixed, m, t);
                let rhs = lambda * table.exponent(&b1, m, t) + (1.0 - lambda) * table.exponent(&b2, m, t);
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn product_model_kl_is_additive(p1 in pmf_strategy(2), p2 in pmf_strategy(3),
                                        q1 in pmf_strategy(2), q2 in pmf_strategy(3)) {
            let model = crate::JointModel::from_independent(
                crate::Alphabet::new(vec![2, 3]).unwrap(),
                vec![vec![p1.clone(), p2.clone()], vec![q1.clone(), q2.clone()]],
                1e-12,
            ).unwrap();
            let both = crate::SourceSet::from_indices([0, 1]);
            let joint = kl(model.marginal_on(both, 0).probs(), model.marginal_on(both, 1).probs()).unwrap();
            let sum = kl_oracle(&p1, &q1) + kl_oracle(&p2, &q2);
            prop_assert!((joint - sum).abs() < 1e-12);
        }
    }
}
