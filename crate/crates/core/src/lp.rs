//! A small dense two-phase simplex solver.
//!
//! Problems have the form `maximize cᵀx  s.t.  a_iᵀx {≤,≥,=} b_i,  x ≥ 0`.
//! Pivoting follows Bland's rule, so degenerate problems terminate. When the
//! problem is infeasible the solver returns a Farkas certificate that can be
//! checked independently with [`FarkasCertificate::verify`].
//!
//! Sizes here are tiny (tens of rows and columns), so a dense tableau is
//! both the simplest and the fastest option.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-11;
const FEASIBILITY_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("constraint {row} has {got} coefficients, expected {expected}")]
    Dimension {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite coefficient in constraint {row}")]
    NonFinite { row: usize },
    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    vars: usize,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

/// Multipliers `y` proving infeasibility: `y_i ≤ 0` on `≤` rows, `y_i ≥ 0` on
/// `≥` rows, free on equalities, `Σ y_i a_i ≤ 0` componentwise and
/// `Σ y_i b_i > 0`. Any feasible `x ≥ 0` would give
/// `0 < Σ y_i b_i ≤ (Σ y_i a_i)ᵀx ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub multipliers: Vec<f64>,
}

impl FarkasCertificate {
    /// Checks the certificate against `lp` using plain arithmetic.
    pub fn verify(&self, lp: &LinearProgram, tol: f64) -> bool {
        let y = &self.multipliers;
        if y.len() != lp.constraints.len() {
            return false;
        }
        let scale = y.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return false;
        }
        let y: Vec<f64> = y.iter().map(|v| v / scale).collect();
        for (yi, c) in y.iter().zip(&lp.constraints) {
            let ok = match c.relation {
                Relation::Le => *yi <= tol,
                Relation::Ge => *yi >= -tol,
                Relation::Eq => true,
            };
            if !ok {
                return false;
            }
        }
        let mut combo = vec![0.0; lp.vars];
        let mut bound = 0.0;
        for (yi, c) in y.iter().zip(&lp.constraints) {
            // Sign slack on a multiplier is rounded to zero before combining.
            let yi = match c.relation {
                Relation::Le => yi.min(0.0),
                Relation::Ge => yi.max(0.0),
                Relation::Eq => *yi,
            };
            for (acc, a) in combo.iter_mut().zip(&c.coeffs) {
                *acc += yi * a;
            }
            bound += yi * c.rhs;
        }
        combo.iter().all(|&v| v <= tol) && bound > tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible(FarkasCertificate),
    Unbounded,
}

impl LpOutcome {
    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible(_))
    }
}

impl LinearProgram {
    /// A program over `vars` nonnegative variables with a zero objective.
    pub fn new(vars: usize) -> Self {
        LinearProgram {
            vars,
            objective: vec![0.0; vars],
            constraints: Vec::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Sets the objective to be maximized.
    pub fn maximize(&mut self, objective: Vec<f64>) -> &mut Self {
        self.objective = objective;
        self
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    pub fn solve(&self) -> Result<LpOutcome, LpError> {
        for (row, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != self.vars {
                return Err(LpError::Dimension {
                    row,
                    expected: self.vars,
                    got: c.coeffs.len(),
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(LpError::NonFinite { row });
            }
        }
        if self.objective.len() != self.vars {
            return Err(LpError::Dimension {
                row: usize::MAX,
                expected: self.vars,
                got: self.objective.len(),
            });
        }
        Tableau::build(self).run(self)
    }
}

/// Dense tableau in minimization form: `reduced[j] = c_j − c_Bᵀ B⁻¹ A_j`,
/// the last entry of each row holds the right-hand side.
struct Tableau {
    rows: Vec<Vec<f64>>,
    reduced: Vec<f64>,
    basis: Vec<usize>,
    /// Column that formed the initial identity in each row.
    initial: Vec<usize>,
    /// Sign applied to each original row to make its rhs nonnegative.
    flip: Vec<f64>,
    /// First artificial column; columns `>= artificial_start` are artificial.
    artificial_start: usize,
    cols: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let m = lp.constraints.len();
        let n = lp.vars;
        let mut flip = Vec::with_capacity(m);
        let mut relations = Vec::with_capacity(m);
        for c in &lp.constraints {
            let s = if c.rhs < 0.0 { -1.0 } else { 1.0 };
            flip.push(s);
            relations.push(match (c.relation, s < 0.0) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => r,
            });
        }
        let slack_count = relations.iter().filter(|r| **r != Relation::Eq).count();
        let artificial_count = relations.iter().filter(|r| **r != Relation::Le).count();
        let artificial_start = n + slack_count;
        let cols = artificial_start + artificial_count;

        let mut rows = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let mut next_slack = n;
        let mut next_art = artificial_start;
        for (i, c) in lp.constraints.iter().enumerate() {
            for (j, a) in c.coeffs.iter().enumerate() {
                rows[i][j] = flip[i] * a;
            }
            rows[i][cols] = flip[i] * c.rhs;
            match relations[i] {
                Relation::Le => {
                    rows[i][next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    rows[i][next_slack] = -1.0;
                    next_slack += 1;
                    rows[i][next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    rows[i][next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }
        let initial = basis.clone();
        let mut t = Tableau {
            rows,
            reduced: vec![0.0; cols + 1],
            basis,
            initial,
            flip,
            artificial_start,
            cols,
        };
        let phase1: Vec<f64> = (0..cols)
            .map(|j| if j >= artificial_start { 1.0 } else { 0.0 })
            .collect();
        t.set_costs(&phase1);
        t
    }

    /// Recomputes the reduced-cost row for costs `c` under the current basis.
    fn set_costs(&mut self, c: &[f64]) {
        let mut reduced: Vec<f64> = c.to_vec();
        reduced.push(0.0);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = c[b];
            if cb != 0.0 {
                for (r, a) in reduced.iter_mut().zip(&self.rows[i]) {
                    *r -= cb * a;
                }
            }
        }
        self.reduced = reduced;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.reduced[c];
        if f != 0.0 {
            for (v, pv) in self.reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.reduced[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs Bland's-rule pivots over columns `< limit`. Returns `false` on unboundedness.
    fn optimize(&mut self, limit: usize) -> Result<bool, LpError> {
        for _ in 0..MAX_PIVOTS {
            let Some(enter) = (0..limit).find(|&j| self.reduced[j] < -PIVOT_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_TOL {
                    let ratio = row[self.cols] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-15
                                || (ratio <= best + 1e-15 && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, enter),
            }
        }
        Err(LpError::PivotLimit(MAX_PIVOTS))
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome, LpError> {
        let m = self.rows.len();
        self.optimize(self.cols)?;
        let infeasibility = -self.reduced[self.cols];
        if infeasibility > FEASIBILITY_TOL {
            // Phase-1 duals: y'_i = c_j − reduced_j for the row's initial column.
            let multipliers = (0..m)
                .map(|i| {
                    let j = self.initial[i];
                    let cost = if j >= self.artificial_start { 1.0 } else { 0.0 };
                    self.flip[i] * (cost - self.reduced[j])
                })
                .collect();
            return Ok(LpOutcome::Infeasible(FarkasCertificate { multipliers }));
        }

        // Drive remaining (zero-valued) artificials out of the basis.
        let mut redundant = Vec::new();
        for i in 0..m {
            if self.basis[i] < self.artificial_start {
                continue;
            }
            match (0..self.artificial_start).find(|&j| self.rows[i][j].abs() > PIVOT_TOL) {
                Some(j) => self.pivot(i, j),
                None => redundant.push(i),
            }
        }
        for &i in redundant.iter().rev() {
            self.rows.remove(i);
            self.basis.remove(i);
        }

        let mut costs = vec![0.0; self.cols];
        for (c, o) in costs.iter_mut().zip(&lp.objective) {
            *c = -o;
        }
        self.set_costs(&costs);
        if !self.optimize(self.artificial_start)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; lp.vars];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < lp.vars {
                x[b] = self.rows[i][self.cols].max(0.0);
            }
        }
        let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal { x, value })
    }
}
