//! Error-exponent regions.
//!
//! For declared hypothesis `m` the achievable exponents `(e_{m|θ})_{θ≠m}`
//! form the downward closure, inside the nonnegative orthant, of the convex
//! hull of the corner points `(e*_{m|θ}(β))_{θ≠m}` over the vertices `β` of
//! the constraint polytope `C`. The full region is the direct product of
//! these per-`m` polytopes, which is why membership factors over `m`.
//!
//! The non-adaptive region instead asks for a single `β ∈ C` that dominates
//! every coordinate at once, and is decided by a linear program.

pub mod hull;
pub mod slice;
pub mod tuncel;
pub mod vertices;

use serde::Serialize;
use thiserror::Error;

use crate::divergence::DivergenceTable;
use crate::lp::{LinearProgram, LpError, LpOutcome, Relation};
use crate::model::{ActionSpace, Environment, SelectionFrequency, SourceSet, MEMBERSHIP_TOL};

pub use hull::{DownwardHull, Facet};
pub use slice::{individual_hypothesis_region_slice, nonadaptive_slice, tuncel_slice, SliceFamily};
pub use tuncel::{tuncel_membership, TuncelOptions, TuncelVerdict};
pub use vertices::ConstraintPolytope;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("constraint set is empty")]
    InfeasiblePolytope,
    #[error("vertex enumeration would examine {count} active sets")]
    TooManyActiveSets { count: u128 },
    #[error("model is not in the classical form: {0}")]
    NotChernoffForm(String),
    #[error("exponent tuple has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("slices are supported for 2 or 3 hypotheses with 2 free coordinates, got M = {hypotheses} with {fixed} fixed")]
    UnsupportedDimension { hypotheses: usize, fixed: usize },
    #[error("the comparison region needs independent sources")]
    NotProductForm,
    #[error("invalid per-source proportions: {0}")]
    InvalidProportions(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// A tuple `(e_{m|θ})` over ordered pairs `m ≠ θ`, stored as an `M × M`
/// matrix with an ignored zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentTuple {
    hypotheses: usize,
    values: Vec<f64>,
}

impl ExponentTuple {
    pub fn zeros(hypotheses: usize) -> Self {
        ExponentTuple {
            hypotheses,
            values: vec![0.0; hypotheses * hypotheses],
        }
    }

    pub fn from_fn(hypotheses: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(hypotheses);
        for m in 0..hypotheses {
            for theta in 0..hypotheses {
                if m != theta {
                    t.values[m * hypotheses + theta] = f(m, theta);
                }
            }
        }
        t
    }

    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self, RegionError> {
        let h = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != h) {
            return Err(RegionError::DimensionMismatch {
                expected: h,
                got: bad.len(),
            });
        }
        Ok(Self::from_fn(h, |m, t| rows[m][t]))
    }

    /// The tuple with `e_{m|θ} = e_θ` for every `m ≠ θ`.
    pub fn individual(e: &[f64]) -> Self {
        Self::from_fn(e.len(), |_, theta| e[theta])
    }

    pub fn hypotheses(&self) -> usize {
        self.hypotheses
    }

    pub fn get(&self, m: usize, theta: usize) -> f64 {
        self.values[m * self.hypotheses + theta]
    }

    pub fn set(&mut self, m: usize, theta: usize, value: f64) {
        if m != theta {
            self.values[m * self.hypotheses + theta] = value;
        }
    }

    /// `(e_{m|θ})_{θ≠m}` in increasing `θ`.
    pub fn row(&self, m: usize) -> Vec<f64> {
        (0..self.hypotheses)
            .filter(|&t| t != m)
            .map(|t| self.get(m, t))
            .collect()
    }

    pub fn mix(&self, other: &ExponentTuple, lambda: f64) -> ExponentTuple {
        ExponentTuple {
            hypotheses: self.hypotheses,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect(),
        }
    }
}

/// The per-declared-hypothesis polytope `Conv{∪_{β∈V_C} ζ_m(β)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerHypothesisRegion {
    pub declared: usize,
    /// Ground-truth hypothesis of each coordinate.
    pub coords: Vec<usize>,
    pub hull: DownwardHull,
}

impl PerHypothesisRegion {
    pub fn contains(&self, row: &[f64]) -> Result<bool, RegionError> {
        Ok(self.hull.contains(row, MEMBERSHIP_TOL)?)
    }
}

/// The full region: vertices of `C` plus one polytope per declared hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentRegion {
    pub vertices_c: Vec<SelectionFrequency>,
    pub per_hypothesis: Vec<PerHypothesisRegion>,
}

impl ExponentRegion {
    pub fn hypotheses(&self) -> usize {
        self.per_hypothesis.len()
    }

    /// Membership of a full tuple; factors over declared hypotheses.
    pub fn membership(&self, tuple: &ExponentTuple) -> Result<bool, RegionError> {
        if tuple.hypotheses() != self.hypotheses() {
            return Err(RegionError::DimensionMismatch {
                expected: self.hypotheses(),
                got: tuple.hypotheses(),
            });
        }
        for (m, region) in self.per_hypothesis.iter().enumerate() {
            if !region.contains(&tuple.row(m))? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The tuple of per-coordinate maxima `max_{β∈V_C} e*_{m|θ}(β)`.
    pub fn maxima(&self) -> ExponentTuple {
        let h = self.hypotheses();
        let mut t = ExponentTuple::zeros(h);
        for (m, region) in self.per_hypothesis.iter().enumerate() {
            for (theta, v) in region.coords.iter().zip(region.hull.maxima()) {
                t.set(m, *theta, v);
            }
        }
        t
    }
}

/// Builds the polytope for declared hypothesis `m` from the vertices of `C`.
pub fn region_polytope(
    table: &DivergenceTable,
    vertices_c: &[SelectionFrequency],
    m: usize,
) -> Result<PerHypothesisRegion, RegionError> {
    let coords: Vec<usize> = (0..table.hypotheses()).filter(|&t| t != m).collect();
    let corners = vertices_c
        .iter()
        .map(|beta| coords.iter().map(|&t| table.exponent(beta, m, t)).collect())
        .collect();
    Ok(PerHypothesisRegion {
        declared: m,
        hull: DownwardHull::new(corners, coords.len())?,
        coords,
    })
}

/// The optimal exponent region over the constraint polytope `poly`.
pub fn exponent_region(
    table: &DivergenceTable,
    poly: &ConstraintPolytope,
) -> Result<ExponentRegion, RegionError> {
    let vertices_c = poly.enumerate_vertices()?;
    let per_hypothesis = (0..table.hypotheses())
        .map(|m| region_polytope(table, &vertices_c, m))
        .collect::<Result<_, _>>()?;
    Ok(ExponentRegion {
        vertices_c,
        per_hypothesis,
    })
}

/// The region in the classical setup: every source always available,
/// singleton actions and no budgets, so `C` is the probability simplex.
pub fn chernoff_region(
    env: &Environment,
    table: &DivergenceTable,
) -> Result<ExponentRegion, RegionError> {
    let n = env.sources();
    if env.availability.sets() != [SourceSet::full(n)] {
        return Err(RegionError::NotChernoffForm(
            "availability must be every source with probability one".into(),
        ));
    }
    if env.actions != ActionSpace::singletons(n) {
        return Err(RegionError::NotChernoffForm(
            "actions must be the single sources".into(),
        ));
    }
    if !env.budgets.is_empty() {
        return Err(RegionError::NotChernoffForm(
            "budgets are not allowed".into(),
        ));
    }
    exponent_region(table, &ConstraintPolytope::from_env(env))
}

/// Feasibility program for `∃β ∈ C: e_{m|θ} ≤ e*_{m|θ}(β)` for all pairs.
pub fn nonadaptive_program(
    tuple: &ExponentTuple,
    table: &DivergenceTable,
    poly: &ConstraintPolytope,
) -> Result<LinearProgram, RegionError> {
    if tuple.hypotheses() != table.hypotheses() {
        return Err(RegionError::DimensionMismatch {
            expected: table.hypotheses(),
            got: tuple.hypotheses(),
        });
    }
    let d = poly.dim();
    let mut lp = LinearProgram::new(d);
    poly.push_rows(&mut lp, 0);
    for (m, theta) in table.ordered_pairs() {
        let e = tuple.get(m, theta);
        if e <= 0.0 {
            continue;
        }
        let row = (0..poly.actions())
            .flat_map(|a| (0..poly.sets()).map(move |z| (a, z)))
            .map(|(a, z)| table.get(a, z, m, theta))
            .collect();
        lp.push(row, Relation::Ge, e);
    }
    Ok(lp)
}

/// Membership in the non-adaptive region.
pub fn nonadaptive_membership(
    tuple: &ExponentTuple,
    table: &DivergenceTable,
    poly: &ConstraintPolytope,
) -> Result<bool, RegionError> {
    Ok(nonadaptive_program(tuple, table, poly)?
        .solve()?
        .is_feasible())
}

/// Decision-risk exponents and the selection frequencies attaining them.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRisk {
    pub gamma: Vec<f64>,
    pub beta: Vec<SelectionFrequency>,
}

/// `γ_m = max_{β∈C} min_{θ≠m} e*_{m|θ}(β)`, one LP per `m`.
pub fn decision_risk_exponents(
    table: &DivergenceTable,
    poly: &ConstraintPolytope,
) -> Result<DecisionRisk, RegionError> {
    let d = poly.dim();
    let h = table.hypotheses();
    let mut gamma = Vec::with_capacity(h);
    let mut beta = Vec::with_capacity(h);
    for m in 0..h {
        let mut lp = LinearProgram::new(d + 1);
        let mut objective = vec![0.0; d + 1];
        objective[d] = 1.0;
        lp.maximize(objective);
        poly.push_rows(&mut lp, 0);
        for theta in (0..h).filter(|&t| t != m) {
            let mut row: Vec<f64> = (0..poly.actions())
                .flat_map(|a| (0..poly.sets()).map(move |z| (a, z)))
                .map(|(a, z)| -table.get(a, z, m, theta))
                .collect();
            row.push(1.0);
            lp.push(row, Relation::Le, 0.0);
        }
        match lp.solve()? {
            LpOutcome::Optimal { x, value } => {
                gamma.push(value.max(0.0));
                beta.push(
                    SelectionFrequency::from_values(poly.actions(), poly.sets(), x[..d].to_vec())
                        .expect("dimension matches polytope"),
                );
            }
            LpOutcome::Infeasible(_) => return Err(RegionError::InfeasiblePolytope),
            LpOutcome::Unbounded => unreachable!("t is bounded by the exponents"),
        }
    }
    Ok(DecisionRisk { gamma, beta })
}
