//! Pointwise inversion of monotone triangular maps.
//!
//! Component `k` is solved for its last input with the earlier inputs fixed,
//! one coordinate at a time, followed by a few full Newton steps on the
//! triangular system.

use rayon::prelude::*;

use crate::error::{Result, TrimapError};
use crate::map::TriangularMap;
use crate::quadrature::{Provenance, SampleSet};

/// Largest bracket half-width reached by doubling, in units of the
/// coordinate's input scale.
pub const MAX_BRACKET_EXPANSION: f64 = (1u64 << 40) as f64;
/// Full-dimensional Newton steps after the recursive solve.
pub const CLEANUP_STEPS: usize = 5;
const MAX_ROOT_ITERATIONS: usize = 300;

/// `y` with `map(y) = r` up to `tol` in the max norm.
pub fn invert_at(map: &TriangularMap, r: &[f64], tol: f64) -> Result<Vec<f64>> {
    map.check_point(r)?;
    invert_block(map, &[], r, tol)
}

/// Solves components `m+1 ..= m+targets.len()` for their inputs with the
/// first `m = prefix.len()` inputs fixed to `prefix`. Returns the solved
/// inputs only.
pub fn invert_block(map: &TriangularMap, prefix: &[f64], targets: &[f64], tol: f64) -> Result<Vec<f64>> {
    let m = prefix.len();
    let end = m + targets.len();
    if end > map.dim() || targets.is_empty() {
        return Err(TrimapError::DimensionMismatch {
            expected: map.dim() - m,
            found: targets.len(),
        });
    }
    if let Some(i) = targets.iter().chain(prefix).position(|v| !v.is_finite()) {
        return Err(TrimapError::NonFinite { index: i });
    }
    if !(tol > 0.0) {
        return Err(TrimapError::InvalidArgument("tolerance must be positive".into()));
    }
    let mut y = vec![0.0; map.dim()];
    y[..m].copy_from_slice(prefix);
    for k in m + 1..=end {
        y[k - 1] = solve_coordinate(map, &mut y, k, targets[k - m - 1], tol)?;
    }

    // Newton cleanup on the block.
    let mut res = block_residual(map, &y, m, targets);
    let mut res_norm = max_norm(&res);
    for _ in 0..CLEANUP_STEPS {
        if res_norm == 0.0 {
            break;
        }
        let jac = map.jacobian(&y)?;
        let mut delta = vec![0.0; targets.len()];
        for (i, k) in (m + 1..=end).enumerate() {
            let row = &jac[k - 1];
            let mut s = res[i];
            for (j, d) in delta.iter().enumerate().take(i) {
                s -= row[m + j] * d;
            }
            let diag = row[k - 1];
            if !(diag > 0.0) {
                return Err(TrimapError::NonMonotoneAtPoint {
                    component: k,
                    point: y[..k].to_vec(),
                    partial: diag,
                });
            }
            delta[i] = s / diag;
        }
        let mut trial = y.clone();
        for (i, d) in delta.iter().enumerate() {
            trial[m + i] -= d;
        }
        let trial_res = block_residual(map, &trial, m, targets);
        let trial_norm = max_norm(&trial_res);
        if !(trial_norm < res_norm) {
            break;
        }
        y = trial;
        res = trial_res;
        res_norm = trial_norm;
    }
    let scale = 1.0 + targets.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if res_norm > tol && res_norm > 1e3 * f64::EPSILON * scale {
        return Err(TrimapError::NonConvergence(format!(
            "inversion residual {res_norm:.3e} exceeds tolerance {tol:.3e}"
        )));
    }
    Ok(y[m..end].to_vec())
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn block_residual(map: &TriangularMap, y: &[f64], m: usize, targets: &[f64]) -> Vec<f64> {
    let z = map.standardize(y);
    targets
        .iter()
        .enumerate()
        .map(|(i, t)| map.component(m + i + 1).value(&z) - t)
        .collect()
}

/// Root of `w -> T^k(y_<k, w) - target` in physical coordinates.
fn solve_coordinate(map: &TriangularMap, y: &mut [f64], k: usize, target: f64, tol: f64) -> Result<f64> {
    let comp = map.component(k);
    let (shift, scale) = match map.premap() {
        Some(p) => (p.shift()[k - 1], p.scale()[k - 1]),
        None => (0.0, 1.0),
    };
    let mut z = map.standardize(y);
    // Work in the standardized coordinate u = z_k.
    let mut f = |u: f64| -> (f64, f64) {
        z[k - 1] = u;
        (comp.value(&z) - target, comp.partial(&z))
    };
    let to_physical = |u: f64| shift + scale * u;
    let nonmono = |u: f64, d: f64, y: &[f64]| {
        let mut point = y[..k].to_vec();
        point[k - 1] = to_physical(u);
        TrimapError::NonMonotoneAtPoint {
            component: k,
            point,
            partial: d / scale,
        }
    };

    let (f0, _) = f(0.0);
    if !f0.is_finite() {
        return Err(TrimapError::NonFinite { index: k - 1 });
    }
    if f0 == 0.0 {
        return Ok(to_physical(0.0));
    }
    // Bracket by doubling away from the origin.
    let dir = if f0 < 0.0 { 1.0 } else { -1.0 };
    let mut near = 0.0;
    let mut fnear = f0;
    let mut step = 1.0;
    let far;
    let ffar;
    loop {
        let u = near + dir * step;
        let (fu, _) = f(u);
        if fu.is_nan() {
            return Err(TrimapError::NonFinite { index: k - 1 });
        }
        if fu * fnear <= 0.0 {
            far = u;
            ffar = fu;
            break;
        }
        near = u;
        fnear = fu;
        step *= 2.0;
        if step > MAX_BRACKET_EXPANSION {
            return Err(TrimapError::BracketFailure { component: k, target });
        }
    }
    let (mut lo, mut hi) = if fnear < 0.0 { (near, far) } else { (far, near) };
    let (flo, fhi) = if fnear < 0.0 { (fnear, ffar) } else { (ffar, fnear) };
    if fhi == 0.0 {
        return Ok(to_physical(hi));
    }
    if flo == 0.0 {
        return Ok(to_physical(lo));
    }

    // Safeguarded Newton: fall back to bisection when a step leaves the
    // bracket or fails to halve the residual.
    let mut u = 0.5 * (lo + hi);
    let (mut fu, mut du) = f(u);
    let mut prev_abs = f64::INFINITY;
    let inner_tol = 0.1 * tol;
    for _ in 0..MAX_ROOT_ITERATIONS {
        if fu.abs() <= inner_tol {
            break;
        }
        if fu < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + u.abs()) {
            break;
        }
        let newton = if du > 0.0 { u - fu / du } else { f64::NAN };
        let next = if newton > lo && newton < hi && fu.abs() < 0.5 * prev_abs {
            newton
        } else {
            0.5 * (lo + hi)
        };
        prev_abs = fu.abs();
        u = next;
        (fu, du) = f(u);
    }
    if !(du > 0.0) {
        return Err(nonmono(u, du, y));
    }
    Ok(to_physical(u))
}

/// Result of inverting a batch of points.
#[derive(Debug, Clone)]
pub struct InversionBatch {
    /// Successfully inverted points, in input order.
    pub samples: SampleSet,
    /// Input row of each successful point.
    pub indices: Vec<usize>,
    /// Max-norm residual of each successful point.
    pub residuals: Vec<f64>,
    /// Rows that failed, with the reason.
    pub failures: Vec<(usize, TrimapError)>,
}

/// Inverts `map` at every row of `points` in parallel. Failures are collected
/// rather than aborting the batch. An empty result set is an error.
pub fn push_inverse(map: &TriangularMap, points: &SampleSet, tol: f64) -> Result<InversionBatch> {
    if points.dim() != map.dim() {
        return Err(TrimapError::DimensionMismatch {
            expected: map.dim(),
            found: points.dim(),
        });
    }
    let results: Vec<Result<(Vec<f64>, f64)>> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let r = points.row(i);
            let y = invert_at(map, r, tol)?;
            let t = map.evaluate(&y)?;
            let res = t.iter().zip(r).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
            Ok((y, res))
        })
        .collect();
    let mut flat = Vec::with_capacity(points.len() * points.dim());
    let mut indices = Vec::new();
    let mut residuals = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((y, res)) => {
                flat.extend(y);
                indices.push(i);
                residuals.push(res);
            }
            Err(e) => failures.push((i, e)),
        }
    }
    if indices.is_empty() {
        return Err(failures.swap_remove(0).1);
    }
    if !failures.is_empty() {
        log::warn!("{} of {} points failed to invert", failures.len(), points.len());
    }
    let mut samples = SampleSet::new(map.dim(), flat, Provenance::Pushforward)?;
    if let Some(seed) = points.seed() {
        samples = samples.with_seed(seed);
    }
    Ok(InversionBatch {
        samples,
        indices,
        residuals,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{IndexSetKind, MultiIndexSet};
    use crate::map::{AffinePremap, Direction, MapComponent, MapTemplate, Parameterization};

    fn linear_2d() -> TriangularMap {
        let s1 = MultiIndexSet::new(IndexSetKind::TotalOrder, 1, 1, 2).unwrap();
        let s2 = MultiIndexSet::new(IndexSetKind::TotalOrder, 2, 1, 2).unwrap();
        let c1 = MapComponent::new(1, Parameterization::Polynomial(s1), vec![0.0, 2.0]).unwrap();
        let c2 = MapComponent::new(2, Parameterization::Polynomial(s2), vec![0.0, 3.0, 1.0]).unwrap();
        TriangularMap::new(Direction::Inverse, vec![c1, c2], None).unwrap()
    }

    #[test]
    fn solves_linear_example() {
        let y = invert_at(&linear_2d(), &[4.0, 7.0], 1e-12).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-12 && (y[1] - 5.0 / 3.0).abs() < 1e-12);
        let id = TriangularMap::identity(3, Direction::Direct, &MapTemplate::total_order(2)).unwrap();
        let r = [0.3, -2.0, 11.0];
        let y = invert_at(&id, &r, 1e-12).unwrap();
        assert!(y.iter().zip(r).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn standardization_map_inverts_to_mean() {
        let mut s = TriangularMap::identity(1, Direction::Inverse, &MapTemplate::total_order(1)).unwrap();
        s.set_premap(Some(AffinePremap::new(vec![1.0], vec![2.0]).unwrap())).unwrap();
        assert!((invert_at(&s, &[0.0], 1e-12).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_monotone_bracket_failure() {
        // T(x) = 1 has no root for target 5.
        let s = MultiIndexSet::new(IndexSetKind::TotalOrder, 1, 1, 1).unwrap();
        let c = MapComponent::new(1, Parameterization::Polynomial(s), vec![1.0, 0.0]).unwrap();
        let map = TriangularMap::new(Direction::Direct, vec![c], None).unwrap();
        assert!(matches!(
            invert_at(&map, &[5.0], 1e-10),
            Err(TrimapError::BracketFailure { component: 1, .. })
        ));
    }

    #[test]
    fn batch_collects_failures() {
        let map = linear_2d();
        let pts = SampleSet::from_rows(&[vec![4.0, 7.0], vec![0.0, 0.0]], Provenance::Reference).unwrap();
        let b = push_inverse(&map, &pts, 1e-12).unwrap();
        assert_eq!(b.indices, vec![0, 1]);
        assert!(b.failures.is_empty());
        assert_eq!(b.samples.provenance(), Provenance::Pushforward);
    }
}
