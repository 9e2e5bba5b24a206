//! The statistical environment of an active test.
//!
//! A test is run against `M` hypotheses over `n` finite-alphabet data
//! sources. Under hypothesis `θ` the full source tuple `(X_1, …, X_n)`
//! follows a dense joint table `pmf[θ]` over the product alphabet; an action
//! `a` taken while the sources `z` are available reveals the marginal on
//! `a ∩ z`. Availability sets are drawn i.i.d. from [`AvailabilityDist`],
//! actions come from a finite [`ActionSpace`] that always contains `∅`, and
//! linear budgets bound the expected per-source selection counts.
//!
//! Everything here is immutable once constructed and safe to share between
//! worker threads. Randomness is always supplied by the caller.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::kl;

/// Tolerance on `Σ p = 1` for every stored distribution.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Tolerance for affine (in)equality membership tests on selection frequencies.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Slack allowed on budget inequalities `⟨c_i, ω(β)⟩ ≤ r_i`.
pub const BUDGET_TOL: f64 = 1e-12;

/// Largest supported source count; source sets are stored as bitmasks.
pub const MAX_SOURCES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("need at least two hypotheses, got {0}")]
    TooFewHypotheses(usize),
    #[error("source count must be in 1..={max}, got {got}", max = MAX_SOURCES)]
    BadSourceCount { got: usize },
    #[error("source {label} has an empty alphabet")]
    EmptyAlphabet { label: usize },
    #[error("hypothesis {hypothesis}: expected {expected} probabilities, got {got}")]
    TableSize {
        hypothesis: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid distribution ({context}): {reason}")]
    InvalidDistribution { context: String, reason: String },
    #[error(
        "support mismatch: cell {cell} has probability {p_first} under hypothesis {first} \
         but {p_second} under hypothesis {second}"
    )]
    SupportMismatch {
        cell: usize,
        first: usize,
        second: usize,
        p_first: f64,
        p_second: f64,
    },
    #[error("source index {label} is outside 1..={n}")]
    SourceOutOfRange { label: usize, n: usize },
    #[error("availability set {0} listed twice")]
    DuplicateAvailability(SourceSet),
    #[error("action {0} listed twice")]
    DuplicateAction(SourceSet),
    #[error("availability distribution has no support")]
    EmptyAvailability,
    #[error("budget {index}: {reason}")]
    InvalidBudget { index: usize, reason: String },
    #[error("selection frequency has {got} entries, expected {expected}")]
    BetaDimension { expected: usize, got: usize },
}

/// A subset of the sources `[1:n]`, stored as a bitmask over zero-based indices.
///
/// `Display` uses the one-based labels of the model files, e.g. `{1,3}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SourceSet(u64);

impl SourceSet {
    pub const EMPTY: SourceSet = SourceSet(0);

    /// Builds a set from zero-based source indices.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut bits = 0u64;
        for j in indices {
            assert!(j < MAX_SOURCES, "source index {j} exceeds bitmask width");
            bits |= 1 << j;
        }
        SourceSet(bits)
    }

    /// Builds a set from one-based labels, checking them against `n`.
    pub fn from_labels(labels: &[usize], n: usize) -> Result<Self, ModelError> {
        let mut bits = 0u64;
        for &label in labels {
            if label == 0 || label > n {
                return Err(ModelError::SourceOutOfRange { label, n });
            }
            bits |= 1 << (label - 1);
        }
        Ok(SourceSet(bits))
    }

    pub fn full(n: usize) -> Self {
        Self::from_indices(0..n)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, j: usize) -> bool {
        j < MAX_SOURCES && self.0 & (1 << j) != 0
    }

    pub fn intersect(self, other: SourceSet) -> SourceSet {
        SourceSet(self.0 & other.0)
    }

    /// Zero-based indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_SOURCES).filter(move |&j| self.contains(j))
    }

    /// One-based labels in increasing order.
    pub fn labels(self) -> Vec<usize> {
        self.iter().map(|j| j + 1).collect()
    }
}

impl fmt::Display for SourceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, label) in self.labels().into_iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{label}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for SourceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Per-source symbol counts `K_j`. Product-alphabet cells are indexed
/// row-major with the last source varying fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    sizes: Vec<usize>,
}

impl Alphabet {
    pub fn new(sizes: Vec<usize>) -> Result<Self, ModelError> {
        if sizes.is_empty() || sizes.len() > MAX_SOURCES {
            return Err(ModelError::BadSourceCount { got: sizes.len() });
        }
        if let Some(j) = sizes.iter().position(|&k| k == 0) {
            return Err(ModelError::EmptyAlphabet { label: j + 1 });
        }
        Ok(Alphabet { sizes })
    }

    pub fn sources(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, j: usize) -> usize {
        self.sizes[j]
    }

    /// Number of cells of the product alphabet.
    pub fn product_size(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn decode(&self, mut cell: usize) -> Vec<usize> {
        let mut symbols = vec![0; self.sizes.len()];
        for j in (0..self.sizes.len()).rev() {
            symbols[j] = cell % self.sizes[j];
            cell /= self.sizes[j];
        }
        symbols
    }

    pub fn encode(&self, symbols: &[usize]) -> usize {
        symbols
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&x, &k)| acc * k + x)
    }

    /// Number of cells of the sub-alphabet indexed by `set`.
    pub fn sub_size(&self, set: SourceSet) -> usize {
        set.iter().map(|j| self.sizes[j]).product()
    }
}

/// A distribution over the sub-alphabet of the sources in `sources`
/// (row-major, last listed source fastest). For `sources = ∅` it is the
/// point mass on the empty tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    sources: SourceSet,
    shape: Vec<usize>,
    probs: Vec<f64>,
}

impl Pmf {
    pub fn sources(&self) -> SourceSet {
        self.sources
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Symbols of a sub-alphabet cell, one per source in `sources`.
    pub fn symbols(&self, mut cell: usize) -> Vec<usize> {
        let mut symbols = vec![0; self.shape.len()];
        for k in (0..self.shape.len()).rev() {
            symbols[k] = cell % self.shape[k];
            cell /= self.shape[k];
        }
        symbols
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// Draws a sub-alphabet cell index.
    pub fn sample_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.probs.len() == 1 {
            return 0;
        }
        WeightedIndex::new(&self.probs)
            .expect("validated pmf has positive mass")
            .sample(rng)
    }
}

fn check_pmf(probs: &[f64], tol: f64, context: impl Fn() -> String) -> Result<(), ModelError> {
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(ModelError::InvalidDistribution {
            context: context(),
            reason: format!("entry {p} is negative or not finite"),
        });
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(ModelError::InvalidDistribution {
            context: context(),
            reason: format!("entries sum to {total}"),
        });
    }
    Ok(())
}

/// Product-form joint table of hypothesis `theta` from its per-source PMFs.
pub fn product_table(
    alphabet: &Alphabet,
    sources: &[Vec<f64>],
    theta: usize,
    tol: f64,
) -> Result<Vec<f64>, ModelError> {
    if sources.len() != alphabet.sources() {
        return Err(ModelError::TableSize {
            hypothesis: theta,
            expected: alphabet.sources(),
            got: sources.len(),
        });
    }
    for (j, p) in sources.iter().enumerate() {
        if p.len() != alphabet.size(j) {
            return Err(ModelError::InvalidDistribution {
                context: format!("hypothesis {theta}, source {}", j + 1),
                reason: format!("expected {} entries, got {}", alphabet.size(j), p.len()),
            });
        }
        check_pmf(p, tol, || format!("hypothesis {theta}, source {}", j + 1))?;
    }
    Ok((0..alphabet.product_size())
        .map(|cell| {
            alphabet
                .decode(cell)
                .iter()
                .enumerate()
                .map(|(j, &x)| sources[j][x])
                .product()
        })
        .collect())
}

/// Joint distributions of the source tuple under each hypothesis.
///
/// Construction enforces normalization and a common support across
/// hypotheses, which is what keeps every log-likelihood ratio finite.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    alphabet: Alphabet,
    pmf: Vec<Vec<f64>>,
}

impl JointModel {
    pub fn new(alphabet: Alphabet, pmf: Vec<Vec<f64>>, tol: f64) -> Result<Self, ModelError> {
        if pmf.len() < 2 {
            return Err(ModelError::TooFewHypotheses(pmf.len()));
        }
        let cells = alphabet.product_size();
        for (theta, table) in pmf.iter().enumerate() {
            if table.len() != cells {
                return Err(ModelError::TableSize {
                    hypothesis: theta,
                    expected: cells,
                    got: table.len(),
                });
            }
            check_pmf(table, tol, || format!("hypothesis {theta} joint table"))?;
        }
        for theta in 1..pmf.len() {
            for cell in 0..cells {
                let (p0, p1) = (pmf[0][cell], pmf[theta][cell]);
                if (p0 > 0.0) != (p1 > 0.0) {
                    return Err(ModelError::SupportMismatch {
                        cell,
                        first: 0,
                        second: theta,
                        p_first: p0,
                        p_second: p1,
                    });
                }
            }
        }
        Ok(JointModel { alphabet, pmf })
    }

    /// Expands per-source marginals `per_source[θ][j]` into product-form joint tables.
    pub fn from_independent(
        alphabet: Alphabet,
        per_source: Vec<Vec<Vec<f64>>>,
        tol: f64,
    ) -> Result<Self, ModelError> {
        let pmf = per_source
            .iter()
            .enumerate()
            .map(|(theta, sources)| product_table(&alphabet, sources, theta, tol))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(alphabet, pmf, tol)
    }

    pub fn hypotheses(&self) -> usize {
        self.pmf.len()
    }

    pub fn sources(&self) -> usize {
        self.alphabet.sources()
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn joint(&self, theta: usize) -> &[f64] {
        &self.pmf[theta]
    }

    /// Exact marginal of hypothesis `theta` on the sources in `set`.
    pub fn marginal_on(&self, set: SourceSet, theta: usize) -> Pmf {
        let shape: Vec<usize> = set.iter().map(|j| self.alphabet.size(j)).collect();
        if set.is_empty() {
            return Pmf {
                sources: set,
                shape,
                probs: vec![1.0],
            };
        }
        let mut probs = vec![0.0; shape.iter().product()];
        let members: Vec<usize> = set.iter().collect();
        for (cell, &p) in self.pmf[theta].iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let symbols = self.alphabet.decode(cell);
            let sub = members
                .iter()
                .zip(&shape)
                .fold(0, |acc, (&j, &k)| acc * k + symbols[j]);
            probs[sub] += p;
        }
        Pmf {
            sources: set,
            shape,
            probs,
        }
    }

    /// Single-source marginals `P_{θ,j}` for every source.
    pub fn source_marginals(&self, theta: usize) -> Vec<Vec<f64>> {
        (0..self.sources())
            .map(|j| self.marginal_on(SourceSet::from_indices([j]), theta).probs)
            .collect()
    }

    /// Whether every joint table equals the product of its single-source marginals.
    pub fn is_product_form(&self, tol: f64) -> bool {
        (0..self.hypotheses()).all(|theta| {
            let marginals = self.source_marginals(theta);
            self.pmf[theta].iter().enumerate().all(|(cell, &p)| {
                let prod: f64 = self
                    .alphabet
                    .decode(cell)
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| marginals[j][x])
                    .product();
                (prod - p).abs() <= tol
            })
        })
    }
}

/// Law of the availability set `Z_t`: support sets and their probabilities `α_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityDist {
    sets: Vec<SourceSet>,
    probs: Vec<f64>,
}

impl AvailabilityDist {
    pub fn new(entries: Vec<(SourceSet, f64)>, tol: f64) -> Result<Self, ModelError> {
        if entries.is_empty() {
            return Err(ModelError::EmptyAvailability);
        }
        let mut sets = Vec::with_capacity(entries.len());
        let mut probs = Vec::with_capacity(entries.len());
        for (set, p) in entries {
            if sets.contains(&set) {
                return Err(ModelError::DuplicateAvailability(set));
            }
            if !(p > 0.0) {
                return Err(ModelError::InvalidDistribution {
                    context: format!("availability of {set}"),
                    reason: format!("probability {p} must be positive"),
                });
            }
            sets.push(set);
            probs.push(p);
        }
        check_pmf(&probs, tol, || "availability".to_string())?;
        Ok(AvailabilityDist { sets, probs })
    }

    /// The single set `[1:n]` with probability one.
    pub fn always(n: usize) -> Self {
        AvailabilityDist {
            sets: vec![SourceSet::full(n)],
            probs: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[SourceSet] {
        &self.sets
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn set(&self, z: usize) -> SourceSet {
        self.sets[z]
    }

    pub fn alpha(&self, z: usize) -> f64 {
        self.probs[z]
    }

    pub fn min_alpha(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The finite action space. Index `0` is always the empty action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    actions: Vec<SourceSet>,
}

impl ActionSpace {
    /// Builds an action space from the listed actions; `∅` is inserted at
    /// index 0 (an explicitly listed `∅` is absorbed).
    pub fn new(listed: Vec<SourceSet>) -> Result<Self, ModelError> {
        let mut actions = vec![SourceSet::EMPTY];
        for a in listed {
            if a.is_empty() {
                continue;
            }
            if actions.contains(&a) {
                return Err(ModelError::DuplicateAction(a));
            }
            actions.push(a);
        }
        Ok(ActionSpace { actions })
    }

    /// `{∅, {1}, …, {n}}`.
    pub fn singletons(n: usize) -> Self {
        let mut actions = vec![SourceSet::EMPTY];
        actions.extend((0..n).map(|j| SourceSet::from_indices([j])));
        ActionSpace { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[SourceSet] {
        &self.actions
    }

    pub fn action(&self, a: usize) -> SourceSet {
        self.actions[a]
    }
}

/// One linear budget `⟨coeff, B⟩ ≤ rate · T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub coeff: Vec<f64>,
    pub rate: f64,
}

impl Budget {
    pub fn cost(&self, per_source: &[f64]) -> f64 {
        self.coeff.iter().zip(per_source).map(|(c, x)| c * x).sum()
    }

    /// Weight a single `(a, z)` selection contributes: `Σ_{j ∈ a∩z} c_j`.
    pub fn weight(&self, selected: SourceSet) -> f64 {
        selected.iter().map(|j| self.coeff[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BudgetSpec {
    budgets: Vec<Budget>,
}

impl BudgetSpec {
    pub fn new(budgets: Vec<Budget>, n: usize) -> Result<Self, ModelError> {
        for (index, b) in budgets.iter().enumerate() {
            if b.coeff.len() != n {
                return Err(ModelError::InvalidBudget {
                    index,
                    reason: format!("expected {n} coefficients, got {}", b.coeff.len()),
                });
            }
            if b.coeff.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(ModelError::InvalidBudget {
                    index,
                    reason: "coefficients must be finite and nonnegative".into(),
                });
            }
            if !b.rate.is_finite() || b.rate < 0.0 {
                return Err(ModelError::InvalidBudget {
                    index,
                    reason: format!("rate {} must be finite and nonnegative", b.rate),
                });
            }
        }
        Ok(BudgetSpec { budgets })
    }

    pub fn none() -> Self {
        BudgetSpec::default()
    }

    pub fn len(&self) -> usize {
        self.budgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.budgets.is_empty()
    }

    pub fn budgets(&self) -> &[Budget] {
        &self.budgets
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Budget> {
        self.budgets.iter()
    }
}

/// Selection frequencies `β_{a,z}`, stored action-major: `values[a * |Z| + z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFrequency {
    actions: usize,
    sets: usize,
    values: Vec<f64>,
}

impl SelectionFrequency {
    pub fn zeros(actions: usize, sets: usize) -> Self {
        SelectionFrequency {
            actions,
            sets,
            values: vec![0.0; actions * sets],
        }
    }

    pub fn from_values(actions: usize, sets: usize, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != actions * sets {
            return Err(ModelError::BetaDimension {
                expected: actions * sets,
                got: values.len(),
            });
        }
        Ok(SelectionFrequency {
            actions,
            sets,
            values,
        })
    }

    pub fn from_fn(actions: usize, sets: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let values = (0..actions)
            .flat_map(|a| (0..sets).map(move |z| (a, z)))
            .map(|(a, z)| f(a, z))
            .collect();
        SelectionFrequency {
            actions,
            sets,
            values,
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn get(&self, a: usize, z: usize) -> f64 {
        self.values[a * self.sets + z]
    }

    pub fn set(&mut self, a: usize, z: usize, value: f64) {
        self.values[a * self.sets + z] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `λ·self + (1−λ)·other`.
    pub fn mix(&self, other: &SelectionFrequency, lambda: f64) -> SelectionFrequency {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
            .collect();
        SelectionFrequency {
            actions: self.actions,
            sets: self.sets,
            values,
        }
    }
}

/// Documented numeric tolerances; overridable from a model file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub normalization: f64,
    pub membership: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            normalization: NORMALIZATION_TOL,
            membership: MEMBERSHIP_TOL,
        }
    }
}

/// A complete, structurally valid problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub model: JointModel,
    pub availability: AvailabilityDist,
    pub actions: ActionSpace,
    pub budgets: BudgetSpec,
    pub tolerances: Tolerances,
}

/// Outcome of [`validate_model`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Largest |log-likelihood ratio| of the joint tables over the common support.
    pub max_llr: f64,
    /// Every ordered pair is separated by at least one `(a, z)`.
    pub separable: bool,
    /// Every ordered pair is separated by every `(a, z)` (informational).
    pub uniformly_separable: bool,
}

impl Environment {
    pub fn new(
        model: JointModel,
        availability: AvailabilityDist,
        actions: ActionSpace,
        budgets: BudgetSpec,
    ) -> Result<Self, ModelError> {
        let n = model.sources();
        let full = SourceSet::full(n);
        for set in availability.sets().iter().chain(actions.actions()) {
            if set.bits() & !full.bits() != 0 {
                return Err(ModelError::SourceOutOfRange {
                    label: 64 - set.bits().leading_zeros() as usize,
                    n,
                });
            }
        }
        if budgets.budgets().iter().any(|b| b.coeff.len() != n) {
            return Err(ModelError::InvalidBudget {
                index: 0,
                reason: "coefficient length differs from source count".into(),
            });
        }
        Ok(Environment {
            model,
            availability,
            actions,
            budgets,
            tolerances: Tolerances::default(),
        })
    }

    /// Chernoff's setup: every source always available, singleton actions, no budgets.
    pub fn chernoff(model: JointModel) -> Self {
        let n = model.sources();
        Environment {
            model,
            availability: AvailabilityDist::always(n),
            actions: ActionSpace::singletons(n),
            budgets: BudgetSpec::none(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn hypotheses(&self) -> usize {
        self.model.hypotheses()
    }

    pub fn sources(&self) -> usize {
        self.model.sources()
    }

    /// `|A| · |Z|`, the dimension of a selection frequency.
    pub fn beta_dim(&self) -> usize {
        self.actions.len() * self.availability.len()
    }

    /// The sources actually sampled by action `a` under availability `z`.
    pub fn selected(&self, a: usize, z: usize) -> SourceSet {
        self.actions.action(a).intersect(self.availability.set(z))
    }

    pub fn marginal(&self, a: usize, z: usize, theta: usize) -> Pmf {
        self.model.marginal_on(self.selected(a, z), theta)
    }

    /// Draws the observed sub-tuple for `(a, z)` under hypothesis `theta`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        a: usize,
        z: usize,
        theta: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let pmf = self.marginal(a, z, theta);
        let cell = pmf.sample_cell(rng);
        pmf.symbols(cell)
    }

    pub fn zero_beta(&self) -> SelectionFrequency {
        SelectionFrequency::zeros(self.actions.len(), self.availability.len())
    }

    /// Per-source selection frequencies `ω_j(β) = Σ_{a,z} β_{a,z} 1{j ∈ a∩z}`.
    pub fn omega(&self, beta: &SelectionFrequency) -> Vec<f64> {
        let mut omega = vec![0.0; self.sources()];
        for a in 0..self.actions.len() {
            for z in 0..self.availability.len() {
                let b = beta.get(a, z);
                for j in self.selected(a, z).iter() {
                    omega[j] += b;
                }
            }
        }
        omega
    }

    /// Membership of `β` in the constraint set `C`.
    pub fn in_constraint_set(&self, beta: &SelectionFrequency) -> bool {
        if beta.actions() != self.actions.len() || beta.sets() != self.availability.len() {
            return false;
        }
        if beta.values().iter().any(|&b| !(b >= 0.0)) {
            return false;
        }
        let tol = self.tolerances.membership;
        for z in 0..self.availability.len() {
            let total: f64 = (0..self.actions.len()).map(|a| beta.get(a, z)).sum();
            if (total - self.availability.alpha(z)).abs() > tol {
                return false;
            }
        }
        let omega = self.omega(beta);
        self.budgets
            .iter()
            .all(|b| b.cost(&omega) <= b.rate + BUDGET_TOL)
    }
}

/// Computes the one-step LLR bound and the discrimination flags.
pub fn validate_model(env: &Environment) -> Result<ValidationReport, ModelError> {
    let model = &env.model;
    let m_count = model.hypotheses();
    for theta in 0..m_count {
        check_pmf(model.joint(theta), env.tolerances.normalization, || {
            format!("hypothesis {theta} joint table")
        })?;
    }
    let mut max_llr: f64 = 0.0;
    for theta in 0..m_count {
        for m in 0..m_count {
            if m == theta {
                continue;
            }
            for (cell, (&p, &q)) in model.joint(theta).iter().zip(model.joint(m)).enumerate() {
                match (p > 0.0, q > 0.0) {
                    (true, true) => max_llr = max_llr.max((p / q).ln().abs()),
                    (false, false) => {}
                    _ => {
                        return Err(ModelError::SupportMismatch {
                            cell,
                            first: theta,
                            second: m,
                            p_first: p,
                            p_second: q,
                        })
                    }
                }
            }
        }
    }

    let pairs = env.actions.len() * env.availability.len();
    let mut separated = vec![vec![0usize; m_count]; m_count];
    for a in 0..env.actions.len() {
        for z in 0..env.availability.len() {
            let marginals: Vec<Pmf> = (0..m_count).map(|t| env.marginal(a, z, t)).collect();
            for theta in 0..m_count {
                for m in 0..m_count {
                    if m != theta
                        && kl(marginals[m].probs(), marginals[theta].probs()).map_err(|_| {
                            ModelError::InvalidDistribution {
                                context: format!("marginal on {}", env.selected(a, z)),
                                reason: "support differs across hypotheses".into(),
                            }
                        })? > 0.0
                    {
                        separated[m][theta] += 1;
                    }
                }
            }
        }
    }
    let off_diagonal = || {
        (0..m_count).flat_map(move |m| (0..m_count).filter(move |&t| t != m).map(move |t| (m, t)))
    };
    Ok(ValidationReport {
        max_llr,
        separable: off_diagonal().all(|(m, t)| separated[m][t] > 0),
        uniformly_separable: off_diagonal().all(|(m, t)| separated[m][t] == pairs),
    })
}
