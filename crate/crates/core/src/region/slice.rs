//! Two-dimensional slices of individual-hypothesis exponent regions.
//!
//! An individual exponent vector `(e_0, …, e_{M−1})` is achievable when the
//! tuple `e_{m|θ} = e_θ` is. Fixing all but two coordinates leaves a convex
//! polygon in the plane of the free pair `(x, y)` (lower index first), which
//! is returned counter-clockwise starting at the origin. An empty vector means
//! the fixed coordinates are not achievable at all.

use serde::Serialize;

use crate::divergence::DivergenceTable;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::model::{JointModel, MEMBERSHIP_TOL};

use super::{
    tuncel_membership, ConstraintPolytope, ExponentRegion, ExponentTuple, RegionError,
    TuncelOptions, TuncelVerdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceFamily {
    Adaptive,
    Nonadaptive,
    Tuncel,
}

impl SliceFamily {
    pub fn label(self) -> &'static str {
        match self {
            SliceFamily::Adaptive => "adaptive",
            SliceFamily::Nonadaptive => "nonadaptive",
            SliceFamily::Tuncel => "tuncel",
        }
    }
}

/// Validates the fixed coordinates and returns the two free ones.
fn free_pair(hypotheses: usize, fixed: &[(usize, f64)]) -> Result<(usize, usize), RegionError> {
    let unsupported = || RegionError::UnsupportedDimension {
        hypotheses,
        fixed: fixed.len(),
    };
    if !(2..=3).contains(&hypotheses) || fixed.len() + 2 != hypotheses {
        return Err(unsupported());
    }
    let free: Vec<usize> = (0..hypotheses)
        .filter(|t| !fixed.iter().any(|(k, _)| k == t))
        .collect();
    if free.len() != 2 {
        return Err(unsupported());
    }
    Ok((free[0], free[1]))
}

fn dedup(points: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::new();
    for p in points {
        let close = |q: &[f64; 2]| (p[0] - q[0]).abs() <= 1e-12 && (p[1] - q[1]).abs() <= 1e-12;
        if !out.iter().any(close) {
            out.push(p);
        }
    }
    out
}

/// Orders polygon vertices counter-clockwise, starting from the one nearest the origin.
fn counter_clockwise(points: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let mut points = dedup(points);
    if points.len() < 3 {
        points.sort_by(|a, b| (a[0] + a[1]).partial_cmp(&(b[0] + b[1])).expect("finite"));
        return points;
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    points.sort_by(|a, b| {
        let ta = (a[1] - cy).atan2(a[0] - cx);
        let tb = (b[1] - cy).atan2(b[0] - cx);
        ta.partial_cmp(&tb).expect("finite")
    });
    let start = (0..points.len())
        .min_by(|&i, &j| {
            let (a, b) = (points[i], points[j]);
            (a[0] + a[1]).partial_cmp(&(b[0] + b[1])).expect("finite")
        })
        .expect("nonempty");
    points.rotate_left(start);
    points
}

/// Vertices of `{p : a·p ≤ b for every (a, b)}`, assumed bounded.
fn halfplane_polygon(halfplanes: &[([f64; 2], f64)]) -> Vec<[f64; 2]> {
    let scale = halfplanes.iter().fold(1.0f64, |s, (_, b)| s.max(b.abs()));
    let tol = 1e-9 * scale;
    let mut points = Vec::new();
    for i in 0..halfplanes.len() {
        for j in (i + 1)..halfplanes.len() {
            let ([a1, b1], c1) = halfplanes[i];
            let ([a2, b2], c2) = halfplanes[j];
            let det = a1 * b2 - a2 * b1;
            if det.abs() <= 1e-14 {
                continue;
            }
            let p = [(c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det];
            if halfplanes
                .iter()
                .all(|([a, b], c)| a * p[0] + b * p[1] <= c + tol)
            {
                points.push([p[0].max(0.0), p[1].max(0.0)]);
            }
        }
    }
    counter_clockwise(points)
}

/// Slice of the adaptive region through the fixed coordinates.
pub fn individual_hypothesis_region_slice(
    region: &ExponentRegion,
    fixed: &[(usize, f64)],
) -> Result<Vec<[f64; 2]>, RegionError> {
    let h = region.hypotheses();
    let (fx, fy) = free_pair(h, fixed)?;
    let mut halfplanes: Vec<([f64; 2], f64)> = vec![([-1.0, 0.0], 0.0), ([0.0, -1.0], 0.0)];
    for r in &region.per_hypothesis {
        let facets = r.hull.facets().ok_or(RegionError::UnsupportedDimension {
            hypotheses: h,
            fixed: fixed.len(),
        })?;
        for f in facets {
            let mut normal = [0.0; 2];
            let mut offset = f.offset;
            for (k, &theta) in r.coords.iter().enumerate() {
                if theta == fx {
                    normal[0] += f.normal[k];
                } else if theta == fy {
                    normal[1] += f.normal[k];
                } else {
                    let v = fixed.iter().find(|(t, _)| *t == theta).expect("fixed").1;
                    offset -= f.normal[k] * v;
                }
            }
            if normal == [0.0, 0.0] {
                if offset < -MEMBERSHIP_TOL {
                    return Ok(Vec::new());
                }
                continue;
            }
            halfplanes.push((normal, offset));
        }
    }
    if fixed.iter().any(|(_, v)| *v < -MEMBERSHIP_TOL) {
        return Ok(Vec::new());
    }
    Ok(halfplane_polygon(&halfplanes))
}

/// LP over `(β, x, y)` describing the non-adaptive individual region slice.
fn nonadaptive_slice_program(
    table: &DivergenceTable,
    poly: &ConstraintPolytope,
    free: (usize, usize),
    fixed: &[(usize, f64)],
) -> LinearProgram {
    let d = poly.dim();
    let mut lp = LinearProgram::new(d + 2);
    poly.push_rows(&mut lp, 0);
    let pairs: Vec<(usize, usize)> = (0..poly.actions())
        .flat_map(|a| (0..poly.sets()).map(move |z| (a, z)))
        .collect();
    let h = table.hypotheses();
    for theta in 0..h {
        for m in (0..h).filter(|&m| m != theta) {
            let mut row: Vec<f64> = pairs
                .iter()
                .map(|&(a, z)| table.get(a, z, m, theta))
                .collect();
            row.extend([0.0, 0.0]);
            if theta == free.0 || theta == free.1 {
                // e_θ − e*_{m|θ}(β) ≤ 0
                row.iter_mut().for_each(|v| *v = -*v);
                row[d + usize::from(theta == free.1)] = 1.0;
                lp.push(row, Relation::Le, 0.0);
            } else {
                let v = fixed.iter().find(|(t, _)| *t == theta).expect("fixed").1;
                if v > 0.0 {
                    lp.push(row, Relation::Ge, v);
                }
            }
        }
    }
    lp
}

fn support_point(lp: &LinearProgram, dir: [f64; 2]) -> Result<Option<[f64; 2]>, RegionError> {
    let mut lp = lp.clone();
    let d = lp.vars() - 2;
    let mut objective = vec![0.0; d + 2];
    objective[d] = dir[0];
    objective[d + 1] = dir[1];
    lp.maximize(objective);
    Ok(match lp.solve()? {
        LpOutcome::Optimal { x, .. } => Some([x[d], x[d + 1]]),
        LpOutcome::Infeasible(_) => None,
        LpOutcome::Unbounded => unreachable!("exponents are bounded on C"),
    })
}

/// Extreme point maximizing `primary` first, then `secondary`.
fn lexicographic_point(
    lp: &LinearProgram,
    primary: usize,
) -> Result<Option<[f64; 2]>, RegionError> {
    let mut dir = [0.0; 2];
    dir[primary] = 1.0;
    let Some(p) = support_point(lp, dir)? else {
        return Ok(None);
    };
    let mut pinned = lp.clone();
    let d = lp.vars() - 2;
    let mut row = vec![0.0; d + 2];
    row[d + primary] = 1.0;
    pinned.push(row, Relation::Ge, p[primary] - 1e-12 * (1.0 + p[primary]));
    let mut dir = [0.0; 2];
    dir[1 - primary] = 1.0;
    Ok(support_point(&pinned, dir)?.or(Some(p)))
}

/// Exact slice of the non-adaptive region, by recursive support-function refinement.
pub fn nonadaptive_slice(
    table: &DivergenceTable,
    poly: &ConstraintPolytope,
    fixed: &[(usize, f64)],
) -> Result<Vec<[f64; 2]>, RegionError> {
    let free = free_pair(table.hypotheses(), fixed)?;
    let lp = nonadaptive_slice_program(table, poly, free, fixed);
    let (Some(px), Some(py)) = (lexicographic_point(&lp, 0)?, lexicographic_point(&lp, 1)?) else {
        return Ok(Vec::new());
    };
    let mut boundary = vec![px];
    refine(&lp, px, py, &mut boundary, 0)?;
    boundary.push(py);
    let mut polygon = vec![[0.0, 0.0], [px[0], 0.0]];
    polygon.extend(boundary);
    polygon.push([0.0, py[1]]);
    Ok(dedup(polygon))
}

/// Inserts boundary points strictly between `p` (larger x) and `q` (larger y).
fn refine(
    lp: &LinearProgram,
    p: [f64; 2],
    q: [f64; 2],
    out: &mut Vec<[f64; 2]>,
    depth: usize,
) -> Result<(), RegionError> {
    if depth > 40 {
        return Ok(());
    }
    let dir = [q[1] - p[1], p[0] - q[0]];
    if dir[0] <= 1e-14 || dir[1] <= 1e-14 {
        return Ok(());
    }
    let Some(r) = support_point(lp, dir)? else {
        return Ok(());
    };
    let gain = dir[0] * (r[0] - p[0]) + dir[1] * (r[1] - p[1]);
    let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
    if gain / norm <= 1e-10 {
        return Ok(());
    }
    refine(lp, p, r, out, depth + 1)?;
    out.push(r);
    refine(lp, r, q, out, depth + 1)
}

/// Slice of the fixed-proportion region for per-source proportions `beta`,
/// traced on `columns` vertical lines by bisection. Unresolved verdicts count
/// as outside.
pub fn tuncel_slice(
    model: &JointModel,
    beta: &[f64],
    fixed: &[(usize, f64)],
    options: &TuncelOptions,
    columns: usize,
) -> Result<Vec<[f64; 2]>, RegionError> {
    let h = model.hypotheses();
    let (fx, fy) = free_pair(h, fixed)?;
    let inside = |x: f64, y: f64| -> Result<bool, RegionError> {
        let mut e = vec![0.0; h];
        e[fx] = x;
        e[fy] = y;
        for (t, v) in fixed {
            e[*t] = *v;
        }
        Ok(
            tuncel_membership(&ExponentTuple::individual(&e), model, beta, options)?
                == TuncelVerdict::In,
        )
    };
    if !inside(0.0, 0.0)? {
        return Ok(Vec::new());
    }
    // Exponents of the comparison region never exceed Σ_j β_j max KL.
    let q: Vec<Vec<Vec<f64>>> = (0..h).map(|t| model.source_marginals(t)).collect();
    let mut upper: f64 = 0.0;
    for m in 0..h {
        for t in 0..h {
            if m != t {
                let rate: f64 = (0..model.sources())
                    .map(|j| beta[j] * crate::divergence::kl(&q[m][j], &q[t][j]).unwrap_or(0.0))
                    .sum();
                upper = upper.max(rate);
            }
        }
    }
    let upper = upper + 1.0;
    let frontier = |fix_x: Option<f64>| -> Result<f64, RegionError> {
        let (mut lo, mut hi) = (0.0, upper);
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            let ok = match fix_x {
                Some(x) => inside(x, mid)?,
                None => inside(mid, 0.0)?,
            };
            if ok {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-10 * upper {
                break;
            }
        }
        Ok(lo)
    };
    let x_max = frontier(None)?;
    let columns = columns.max(2);
    let mut polygon = vec![[0.0, 0.0], [x_max, 0.0]];
    for k in (0..columns).rev() {
        let x = x_max * k as f64 / (columns - 1) as f64;
        polygon.push([x, frontier(Some(x))?]);
    }
    Ok(dedup(polygon))
}
