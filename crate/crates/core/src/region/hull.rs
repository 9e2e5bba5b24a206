//! Convex hulls of downward-closed point sets in the nonnegative orthant.
//!
//! For corner points `c_1, …, c_k ∈ ℝ^d_+` the set of interest is
//! `H = {x ≥ 0 : x ≤ y for some y ∈ conv{c_i}}`. `H` equals the convex hull
//! of every coordinate-zeroing of every corner, which is what the facet
//! computation enumerates. Facets are found by brute-force hyperplane
//! enumeration, exact and fast enough for `d ≤ 3` at desk scale; in higher
//! dimension membership is decided by a linear program instead.

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::lp::{LinearProgram, LpError, Relation};

/// Largest dimension for which facets are enumerated.
pub const FACET_DIM_LIMIT: usize = 3;
/// Hyperplane candidates examined before falling back to LP membership.
const MAX_HYPERPLANE_CANDIDATES: usize = 20_000_000;
const DEDUP_TOL: f64 = 1e-12;

/// The halfspace `normal · x ≤ offset` with a unit normal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Facet {
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.offset - dot(&self.normal, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownwardHull {
    dim: usize,
    corners: Vec<Vec<f64>>,
    vertices: Option<Vec<Vec<f64>>>,
    facets: Option<Vec<Facet>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dominates(q: &[f64], p: &[f64]) -> bool {
    q.iter().zip(p).all(|(a, b)| *a >= *b - DEDUP_TOL)
}

fn same(p: &[f64], q: &[f64]) -> bool {
    p.iter().zip(q).all(|(a, b)| (a - b).abs() <= DEDUP_TOL)
}

/// Drops duplicates and points dominated coordinatewise by another point.
fn pareto(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !unique.iter().any(|q| same(q, &p)) {
            unique.push(p);
        }
    }
    (0..unique.len())
        .filter(|&i| !(0..unique.len()).any(|j| j != i && dominates(&unique[j], &unique[i])))
        .map(|i| unique[i].clone())
        .collect()
}

/// Whether `x` lies in the downward hull of `corners`, by LP feasibility.
fn in_downward_hull(corners: &[Vec<f64>], x: &[f64], tol: f64) -> Result<bool, LpError> {
    if x.iter().any(|&v| v < -tol) {
        return Ok(false);
    }
    if corners.is_empty() {
        return Ok(x.iter().all(|&v| v <= tol));
    }
    let k = corners.len();
    let mut lp = LinearProgram::new(k);
    lp.push(vec![1.0; k], Relation::Eq, 1.0);
    for (i, &xi) in x.iter().enumerate() {
        if xi <= tol {
            continue;
        }
        lp.push(
            corners.iter().map(|c| c[i]).collect(),
            Relation::Ge,
            xi - tol,
        );
    }
    Ok(lp.solve()?.is_feasible())
}

impl DownwardHull {
    pub fn new(points: Vec<Vec<f64>>, dim: usize) -> Result<Self, LpError> {
        let points: Vec<Vec<f64>> = points
            .into_iter()
            .map(|p| p.into_iter().map(|v| v.max(0.0)).collect())
            .collect();
        let mut corners = pareto(points);
        // Remove corners already inside the hull of the others.
        let mut i = 0;
        while corners.len() > 1 && i < corners.len() {
            let others: Vec<Vec<f64>> = corners
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, c)| c.clone())
                .collect();
            if in_downward_hull(&others, &corners[i], 1e-12)? {
                corners.remove(i);
            } else {
                i += 1;
            }
        }
        if corners.is_empty() {
            corners.push(vec![0.0; dim]);
        }
        let mut hull = DownwardHull {
            dim,
            corners,
            vertices: None,
            facets: None,
        };
        if dim <= FACET_DIM_LIMIT {
            hull.compute_facets();
        }
        Ok(hull)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The extreme corner points that generate the hull.
    pub fn corners(&self) -> &[Vec<f64>] {
        &self.corners
    }

    pub fn vertices(&self) -> Option<&[Vec<f64>]> {
        self.vertices.as_deref()
    }

    pub fn facets(&self) -> Option<&[Facet]> {
        self.facets.as_deref()
    }

    /// Coordinatewise maxima over the hull.
    pub fn maxima(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.corners.iter().map(|c| c[i]).fold(0.0, f64::max))
            .collect()
    }

    /// Membership with tolerance `tol`: facet test when facets exist, LP otherwise.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool, LpError> {
        match &self.facets {
            Some(facets) => {
                Ok(x.iter().all(|&v| v >= -tol) && facets.iter().all(|f| f.slack(x) >= -tol))
            }
            None => in_downward_hull(&self.corners, x, tol),
        }
    }

    /// Membership decided by LP regardless of the facet representation.
    pub fn contains_by_lp(&self, x: &[f64], tol: f64) -> Result<bool, LpError> {
        in_downward_hull(&self.corners, x, tol)
    }

    fn compute_facets(&mut self) {
        let d = self.dim;
        let maxima = self.maxima();
        let live: Vec<usize> = (0..d).filter(|&i| maxima[i] > DEDUP_TOL).collect();
        let dead: Vec<usize> = (0..d).filter(|&i| maxima[i] <= DEDUP_TOL).collect();
        let lift = |v: &[f64]| {
            let mut out = vec![0.0; d];
            for (k, &i) in live.iter().enumerate() {
                out[i] = v[k];
            }
            out
        };

        let mut facets: Vec<Facet> = Vec::new();
        let mut vertices: Vec<Vec<f64>> = Vec::new();
        match live.len() {
            0 => vertices.push(vec![0.0; d]),
            1 => {
                let i = live[0];
                let mut n = vec![0.0; d];
                n[i] = 1.0;
                facets.push(Facet {
                    normal: n.clone(),
                    offset: maxima[i],
                });
                n[i] = -1.0;
                facets.push(Facet {
                    normal: n,
                    offset: 0.0,
                });
                vertices.push(vec![0.0; d]);
                let mut top = vec![0.0; d];
                top[i] = maxima[i];
                vertices.push(top);
            }
            k => {
                let projected: Vec<Vec<f64>> = self
                    .corners
                    .iter()
                    .map(|c| live.iter().map(|&i| c[i]).collect())
                    .collect();
                let mut zeroed = Vec::new();
                for c in &projected {
                    for mask in 0..(1usize << k) {
                        zeroed.push(
                            (0..k)
                                .map(|i| if mask & (1 << i) != 0 { c[i] } else { 0.0 })
                                .collect::<Vec<f64>>(),
                        );
                    }
                }
                let points = pareto_by_support(zeroed);
                let candidates = binomial(points.len(), k);
                if candidates > MAX_HYPERPLANE_CANDIDATES {
                    return;
                }
                let scale = maxima.iter().fold(1.0f64, |s, v| s.max(*v));
                let tol = 1e-10 * scale;
                let live_facets = brute_force_facets(&points, k, tol);
                for p in &points {
                    let tight: Vec<&Facet> = live_facets
                        .iter()
                        .filter(|f| f.slack(p).abs() <= tol)
                        .collect();
                    if tight.len() >= k {
                        let m = DMatrix::from_fn(tight.len(), k, |r, c| tight[r].normal[c]);
                        if m.rank(1e-9) == k {
                            vertices.push(lift(p));
                        }
                    }
                }
                facets.extend(live_facets.iter().map(|f| Facet {
                    normal: lift(&f.normal),
                    offset: f.offset,
                }));
            }
        }
        for &i in &dead {
            for sign in [1.0, -1.0] {
                let mut n = vec![0.0; d];
                n[i] = sign;
                facets.push(Facet {
                    normal: n,
                    offset: 0.0,
                });
            }
        }
        vertices.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        self.vertices = Some(vertices);
        self.facets = Some(facets);
    }
}

/// Within each support pattern keep only the Pareto-maximal points.
fn pareto_by_support(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let support = |p: &[f64]| -> u32 {
        p.iter()
            .enumerate()
            .filter(|(_, v)| **v > DEDUP_TOL)
            .fold(0, |acc, (i, _)| acc | (1 << i))
    };
    let groups = points.into_iter().into_group_map_by(|p| support(p));
    let mut keys: Vec<u32> = groups.keys().copied().collect();
    keys.sort_unstable();
    keys.into_iter()
        .flat_map(|k| pareto(groups[&k].clone()))
        .collect()
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Supporting hyperplanes through `k` affinely independent points, `k ∈ {2, 3}`.
fn brute_force_facets(points: &[Vec<f64>], k: usize, tol: f64) -> Vec<Facet> {
    let mut facets: Vec<Facet> = Vec::new();
    for combo in (0..points.len()).combinations(k) {
        let p = &points[combo[0]];
        let normal: Vec<f64> = match k {
            2 => {
                let q = &points[combo[1]];
                vec![-(q[1] - p[1]), q[0] - p[0]]
            }
            3 => {
                let (q, r) = (&points[combo[1]], &points[combo[2]]);
                let u = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
                let w = [r[0] - p[0], r[1] - p[1], r[2] - p[2]];
                vec![
                    u[1] * w[2] - u[2] * w[1],
                    u[2] * w[0] - u[0] * w[2],
                    u[0] * w[1] - u[1] * w[0],
                ]
            }
            _ => unreachable!("facets are enumerated for dimension 2 or 3 only"),
        };
        let norm = dot(&normal, &normal).sqrt();
        if norm <= 1e-12 {
            continue;
        }
        let mut normal: Vec<f64> = normal.iter().map(|v| v / norm).collect();
        let mut offset = dot(&normal, p);
        let sides: Vec<f64> = points.iter().map(|x| dot(&normal, x) - offset).collect();
        if sides.iter().all(|&s| s <= tol) {
            // already outward
        } else if sides.iter().all(|&s| s >= -tol) {
            normal.iter_mut().for_each(|v| *v = -*v);
            offset = -offset;
        } else {
            continue;
        }
        for v in normal.iter_mut() {
            if v.abs() < 1e-15 {
                *v = 0.0;
            }
        }
        let duplicate = facets.iter().any(|f| {
            (f.offset - offset).abs() <= tol
                && f.normal
                    .iter()
                    .zip(&normal)
                    .all(|(a, b)| (a - b).abs() <= 1e-9)
        });
        if !duplicate {
            facets.push(Facet { normal, offset });
        }
    }
    facets
}

/// Exposes LP membership for callers that hold raw corner points.
pub fn downward_hull_contains(corners: &[Vec<f64>], x: &[f64], tol: f64) -> Result<bool, LpError> {
    in_downward_hull(corners, x, tol)
}
