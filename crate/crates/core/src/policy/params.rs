//! Parameters of the test for a given stopping-time budget `T`.
//!
//! | symbol | value |
//! |---|---|
//! | `ε(T)` | `(ln T)^{-1/4}` |
//! | `Ã_{θ,m}` | `(1/h) Σ_{(a,z)∈E} D(P^{a,z}_θ ‖ P^{a,z}_m)` |
//! | `Â_{θ,m}` | `(1−ε) e*_{θ|m}(β^θ) + ε Ã_{θ,m}` |
//! | `l` | root of `l(1+l)² = T^{-1/6} (min Â / min Ã)²` |
//! | `A_{θ,m}` | `Â_{θ,m} / (1+l)` |
//! | `I(T)` | `ε min Ã` |
//! | `b(l)` | `l³/(4(1+l)³) · (I/(4L))²` |
//! | `B(l)` | `2 + 2(1+l)²/l² · (4L/I)²` |
//! | `q` | `1 + (1/b)(1 + ln(M B (1+b)))` |
//! | `Δ` | `−M B (1+b) e^{−b(T−1)}` |
//! | `K(x)` | `√(xe+1) − 1` on `[−1/e, 0]` |
//! | `ε_θ` | `A^max_θ (1 − K(Δ)/b)` |
//!
//! The adaptive test runs only when `T ≥ max{e, q}` (regime 2); otherwise it
//! stops at once with a uniform guess (regime 1).

use std::f64::consts::E;

use serde::Serialize;

use crate::divergence::DivergenceTable;
use crate::model::{Environment, SelectionFrequency};

use super::PolicyError;

/// Which branch of the test is used at a given `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Stop at `t = 1` with a uniform random guess.
    Guess,
    /// Run the adaptive test.
    Adaptive,
}

impl Regime {
    pub fn number(self) -> u8 {
        match self {
            Regime::Guess => 1,
            Regime::Adaptive => 2,
        }
    }
}

/// The exploration rate `1/h` and the pairs `(a, z)` that receive it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exploration {
    pub inv_h: f64,
    /// `support[a·|Z| + z]`: whether `(a, z)` is explored. Never true for `∅`.
    pub support: Vec<bool>,
    sets: usize,
}

impl Exploration {
    pub fn explores(&self, a: usize, z: usize) -> bool {
        self.support[a * self.sets + z]
    }
}

/// `1/h = min(min_z α_z / |A|, min_{i: r_i>0} r_i / b_i(ω(𝟙)))`. Pairs whose
/// selected sources carry cost in a zero-rate budget are left unexplored.
pub fn choose_exploration_rate(
    env: &Environment,
    table: &DivergenceTable,
) -> Result<Exploration, PolicyError> {
    let (actions, sets) = (env.actions.len(), env.availability.len());
    let ones = SelectionFrequency::from_fn(actions, sets, |_, _| 1.0);
    let omega_ones = env.omega(&ones);
    let mut inv_h = env.availability.min_alpha() / actions as f64;
    for b in env.budgets.iter() {
        let load = b.cost(&omega_ones);
        if b.rate > 0.0 && load > 0.0 {
            inv_h = inv_h.min(b.rate / load);
        }
    }
    let mut support = vec![false; actions * sets];
    for a in 1..actions {
        for z in 0..sets {
            let selected = env.selected(a, z);
            support[a * sets + z] = env
                .budgets
                .iter()
                .all(|b| b.rate > 0.0 || b.weight(selected) <= 0.0);
        }
    }
    let exploration = Exploration {
        inv_h,
        support,
        sets,
    };
    for (theta, m) in table.ordered_pairs() {
        if a_tilde_sum(table, &exploration, theta, m) <= 0.0 {
            return Err(PolicyError::NoExplorationPossible { theta, m });
        }
    }
    Ok(exploration)
}

fn a_tilde_sum(table: &DivergenceTable, exploration: &Exploration, theta: usize, m: usize) -> f64 {
    let mut sum = 0.0;
    for a in 0..table.actions() {
        for z in 0..table.sets() {
            if exploration.explores(a, z) {
                sum += table.get(a, z, theta, m);
            }
        }
    }
    sum
}

/// `ε(T) = (ln T)^{-1/4}`.
pub fn exploration_probability(t: f64) -> f64 {
    t.ln().powf(-0.25)
}

/// `K(x) = √(xe + 1) − 1`, defined on `[−1/e, 0]`.
pub fn k_function(x: f64) -> Option<f64> {
    if !(-1.0 / E..=0.0).contains(&x) {
        // Allow the rounding of −1/e itself.
        if (x + 1.0 / E).abs() <= 1e-15 {
            return Some(-1.0);
        }
        return None;
    }
    Some((x * E + 1.0).max(0.0).sqrt() - 1.0)
}

/// The unique positive root of `l(1+l)² = c` for `c > 0`, by bisection.
pub fn solve_l(c: f64) -> f64 {
    assert!(
        c > 0.0 && c.is_finite(),
        "l-equation needs a positive finite right-hand side"
    );
    let f = |l: f64| l * (1.0 + l) * (1.0 + l) - c;
    // l(1+l)² ≥ l³ and ≥ l, so the root lies below min(c, c^{1/3}) and 1 + both.
    let (mut lo, mut hi) = (0.0f64, c.min(c.cbrt()).max(f64::MIN_POSITIVE));
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever bracket end has the smaller residual.
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Overrides for experimentation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamOptions {
    /// Replaces `ε(T)`; `Some(0.0)` is pure exploitation.
    pub epsilon: Option<f64>,
    /// Runs the adaptive test even when `T < q`, with `ε_θ = 0` there
    /// (`K(Δ)` is undefined below `q`). `T ≥ e` is still required.
    pub force_adaptive: bool,
}

/// Every quantity the test needs at budget `T`. Matrices are `M × M`,
/// indexed `[θ][m]`, with zero diagonals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestParams {
    pub t_budget: f64,
    pub hypotheses: usize,
    pub epsilon: f64,
    pub inv_h: f64,
    pub a_tilde: Vec<Vec<f64>>,
    pub a_hat: Vec<Vec<f64>>,
    pub l: f64,
    pub a: Vec<Vec<f64>>,
    pub a_max: Vec<f64>,
    pub i_t: f64,
    pub b: f64,
    pub big_b: f64,
    pub q: f64,
    /// `Δ` and `K(Δ)`; `None` when `T < q` makes `K(Δ)` undefined.
    pub delta: Option<f64>,
    pub k_delta: Option<f64>,
    pub eps_theta: Vec<f64>,
    /// `T·A_{θ,m} − ε_θ`.
    pub thresholds: Vec<Vec<f64>>,
    pub regime: Regime,
    /// True when regime 2 was forced below its natural range.
    pub forced: bool,
    pub max_llr: f64,
}

/// Regime 2 holds iff `T ≥ max{e, q}`.
pub fn regime_for(t: f64, q: f64) -> Regime {
    if t >= E.max(q) {
        Regime::Adaptive
    } else {
        Regime::Guess
    }
}

/// Computes all test parameters. `betas[θ]` is the selection frequency used
/// while `θ` is the maximum-likelihood estimate; `max_llr` is `L`.
pub fn build_params(
    t: f64,
    env: &Environment,
    table: &DivergenceTable,
    exploration: &Exploration,
    betas: &[SelectionFrequency],
    max_llr: f64,
    options: ParamOptions,
) -> Result<TestParams, PolicyError> {
    let h = env.hypotheses();
    if !(t >= 1.0) || !t.is_finite() {
        return Err(PolicyError::InvalidHorizon(t));
    }
    if betas.len() != h {
        return Err(PolicyError::BetaCount {
            expected: h,
            got: betas.len(),
        });
    }
    for (index, beta) in betas.iter().enumerate() {
        if !env.in_constraint_set(beta) {
            return Err(PolicyError::InvalidBeta { index });
        }
    }
    if options.force_adaptive && t < E {
        return Err(PolicyError::ForcedBelowE(t));
    }
    let epsilon = match options.epsilon {
        Some(e) if (0.0..=1.0).contains(&e) => e,
        Some(e) => return Err(PolicyError::InvalidEpsilon(e)),
        // Below e the formula exceeds one; such T only ever runs regime 1.
        None if t < E => 1.0,
        None => exploration_probability(t),
    };

    let matrix = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..h)
            .map(|th| {
                (0..h)
                    .map(|m| if th == m { 0.0 } else { f(th, m) })
                    .collect()
            })
            .collect()
    };
    let a_tilde = matrix(&|th, m| exploration.inv_h * a_tilde_sum(table, exploration, th, m));
    let a_hat = matrix(&|th, m| {
        (1.0 - epsilon) * table.exponent(&betas[th], th, m) + epsilon * a_tilde[th][m]
    });
    let off_min = |x: &Vec<Vec<f64>>| {
        table
            .ordered_pairs()
            .map(|(th, m)| x[th][m])
            .fold(f64::INFINITY, f64::min)
    };
    let (min_hat, min_tilde) = (off_min(&a_hat), off_min(&a_tilde));
    let c = t.powf(-1.0 / 6.0) * (min_hat / min_tilde).powi(2);
    let l = if c > 0.0 { solve_l(c) } else { 0.0 };
    let a = matrix(&|th, m| a_hat[th][m] / (1.0 + l));
    let a_max: Vec<f64> = (0..h)
        .map(|th| {
            (0..h)
                .filter(|&m| m != th)
                .map(|m| a[th][m])
                .fold(0.0, f64::max)
        })
        .collect();
    let i_t = epsilon * min_tilde;
    let ratio = i_t / (4.0 * max_llr);
    let b = l.powi(3) / (4.0 * (1.0 + l).powi(3)) * ratio * ratio;
    let big_b = 2.0 + 2.0 * (1.0 + l).powi(2) / (l * l) / (ratio * ratio);
    let q = 1.0 + (1.0 + (h as f64 * big_b * (1.0 + b)).ln()) / b;
    // q is +∞ (or NaN from 0·∞) when ε = 0 or l = 0.
    let q = if q.is_nan() { f64::INFINITY } else { q };

    let natural = regime_for(t, q);
    let regime = if options.force_adaptive {
        Regime::Adaptive
    } else {
        natural
    };
    let forced = regime == Regime::Adaptive && natural == Regime::Guess;
    let (delta, k_delta) = if natural == Regime::Adaptive {
        let delta = -(h as f64) * big_b * (1.0 + b) * (-b * (t - 1.0)).exp();
        (Some(delta), k_function(delta))
    } else {
        (None, None)
    };
    let eps_theta: Vec<f64> = match k_delta {
        Some(k) => a_max.iter().map(|am| am * (1.0 - k / b)).collect(),
        None => vec![0.0; h],
    };
    let thresholds = matrix(&|th, m| t * a[th][m] - eps_theta[th]);
    Ok(TestParams {
        t_budget: t,
        hypotheses: h,
        epsilon,
        inv_h: exploration.inv_h,
        a_tilde,
        a_hat,
        l,
        a,
        a_max,
        i_t,
        b,
        big_b,
        q,
        delta,
        k_delta,
        eps_theta,
        thresholds,
        regime,
        forced,
        max_llr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::build_table;
    use crate::fixtures::three_hypothesis_env;
    use crate::model::{validate_model, Budget, BudgetSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn uniform(env: &Environment) -> SelectionFrequency {
        SelectionFrequency::from_fn(env.actions.len(), 1, |a, _| if a == 0 { 0.0 } else { 0.5 })
    }

    fn params_at(t: f64, options: ParamOptions) -> TestParams {
        let env = three_hypothesis_env();
        let table = build_table(&env).unwrap();
        let exploration = choose_exploration_rate(&env, &table).unwrap();
        let l = validate_model(&env).unwrap().max_llr;
        let betas = vec![uniform(&env); 3];
        build_params(t, &env, &table, &exploration, &betas, l, options).unwrap()
    }

    #[test]
    fn k_endpoints() {
        assert_eq!(k_function(-1.0 / E), Some(-1.0));
        assert_eq!(k_function(0.0), Some(0.0));
        assert!(k_function(-1e-300).unwrap() <= 0.0);
        assert_eq!(k_function(-0.5), None);
        assert_eq!(k_function(0.1), None);
    }

    #[test]
    fn l_solver_closed_form() {
        assert_eq!(solve_l(4.0), 1.0);
        let l = solve_l(18.0); // 2·3² = 18
        assert_abs_diff_eq!(l, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn chernoff_exploration_rate() {
        let env = three_hypothesis_env();
        let table = build_table(&env).unwrap();
        let ex = choose_exploration_rate(&env, &table).unwrap();
        assert_abs_diff_eq!(ex.inv_h, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(ex.support, vec![false, true, true]);
    }

    #[test]
    fn budgeted_exploration_rate() {
        let env = Environment {
            budgets: BudgetSpec::new(
                vec![Budget {
                    coeff: vec![1.0, 1.0],
                    rate: 0.2,
                }],
                2,
            )
            .unwrap(),
            ..three_hypothesis_env()
        };
        let table = build_table(&env).unwrap();
        let ex = choose_exploration_rate(&env, &table).unwrap();
        // ω(𝟙) = (1, 1) for singleton actions, so b(ω(𝟙)) = 2.
        assert_abs_diff_eq!(ex.inv_h, (1.0f64 / 3.0).min(0.2 / 2.0), epsilon = 1e-15);
    }

    #[test]
    fn zero_rate_on_every_source_prevents_exploration() {
        let env = Environment {
            budgets: BudgetSpec::new(
                vec![Budget {
                    coeff: vec![1.0, 1.0],
                    rate: 0.0,
                }],
                2,
            )
            .unwrap(),
            ..three_hypothesis_env()
        };
        let table = build_table(&env).unwrap();
        assert!(matches!(
            choose_exploration_rate(&env, &table),
            Err(PolicyError::NoExplorationPossible { .. })
        ));
    }

    #[test]
    fn small_budgets_are_regime_one() {
        for t in [1.0, 2.0, 2.5, 100.0, 1e4] {
            let p = params_at(t, ParamOptions::default());
            assert_eq!(p.regime, Regime::Guess, "T = {t}");
            assert_eq!(p.regime, regime_for(t, p.q));
        }
    }

    #[test]
    fn table_identities_hold() {
        let p = params_at(1e4, ParamOptions::default());
        let c = 1e4f64.powf(-1.0 / 6.0)
            * (p.a_hat
                .iter()
                .enumerate()
                .flat_map(|(i, r)| {
                    r.iter()
                        .enumerate()
                        .filter(move |(j, _)| *j != i)
                        .map(|(_, v)| *v)
                })
                .fold(f64::INFINITY, f64::min)
                / p.a_tilde
                    .iter()
                    .enumerate()
                    .flat_map(|(i, r)| {
                        r.iter()
                            .enumerate()
                            .filter(move |(j, _)| *j != i)
                            .map(|(_, v)| *v)
                    })
                    .fold(f64::INFINITY, f64::min))
            .powi(2);
        assert!((p.l * (1.0 + p.l).powi(2) - c).abs() <= 1e-12);
        assert!(p.b > 0.0 && p.big_b > 2.0);
        for th in 0..3 {
            for m in 0..3 {
                if th != m {
                    assert!(p.a_tilde[th][m] > 0.0);
                    assert_abs_diff_eq!(p.a[th][m] * (1.0 + p.l), p.a_hat[th][m], epsilon = 1e-12);
                }
            }
        }
        assert_abs_diff_eq!(p.epsilon, 1e4f64.ln().powf(-0.25), epsilon = 1e-15);
    }

    #[test]
    fn forced_mode_runs_adaptive_with_zero_slack() {
        let p = params_at(
            200.0,
            ParamOptions {
                force_adaptive: true,
                epsilon: None,
            },
        );
        assert_eq!(p.regime, Regime::Adaptive);
        assert!(p.forced);
        assert_eq!(p.eps_theta, vec![0.0; 3]);
        assert_abs_diff_eq!(p.thresholds[0][1], 200.0 * p.a[0][1], epsilon = 1e-12);
    }

    #[test]
    fn regime_two_parameters_at_huge_budget() {
        let p = params_at(2e11, ParamOptions::default());
        assert_eq!(p.regime, Regime::Adaptive);
        let delta = p.delta.unwrap();
        assert!((-1.0 / E..0.0).contains(&delta));
        let k = p.k_delta.unwrap();
        assert!((-1.0..=0.0).contains(&k));
        for th in 0..3 {
            assert!(p.eps_theta[th] >= p.a_max[th]);
        }
    }

    #[test]
    fn invalid_beta_rejected() {
        let env = three_hypothesis_env();
        let table = build_table(&env).unwrap();
        let ex = choose_exploration_rate(&env, &table).unwrap();
        let bad = SelectionFrequency::from_fn(3, 1, |_, _| 0.5);
        let betas = vec![uniform(&env), bad, uniform(&env)];
        assert!(matches!(
            build_params(
                100.0,
                &env,
                &table,
                &ex,
                &betas,
                1.0,
                ParamOptions::default()
            ),
            Err(PolicyError::InvalidBeta { index: 1 })
        ));
    }

    proptest! {
        #[test]
        fn l_solver_residual(c in 1e-9f64..1e6) {
            let l = solve_l(c);
            prop_assert!(l > 0.0);
            prop_assert!((l * (1.0 + l).powi(2) - c).abs() <= 1e-12 * c.max(1.0));
        }
    }
}
