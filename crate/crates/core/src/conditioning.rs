//! Conditional sampling from a joint triangular map whose leading
//! coordinates are the conditioning variables.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Result, TrimapError};
use crate::map::{Direction, TriangularMap};
use crate::quadrature::{point_rng, Provenance, SampleSet};
use crate::solver::invert_block;

/// Tolerance for the root solves done while sampling from an inverse parent.
pub const SAMPLING_TOL: f64 = 1e-10;

/// Sampler for `pi(theta | y = y_star)` built from a joint map on
/// `(y, theta)`.
#[derive(Debug, Clone)]
pub struct ConditionalMap<'a> {
    parent: &'a TriangularMap,
    split: usize,
    y_star: Vec<f64>,
    x_star: Vec<f64>,
}

/// Freezes the first `n_y` coordinates of `map` at `y_star`.
///
/// For a direct parent `x_star` solves `T^Y(x_star) = y_star`. For an
/// inverse parent `x_star = S^Y(y_star)` and sampling inverts the remaining
/// components pointwise.
pub fn condition<'a>(map: &'a TriangularMap, n_y: usize, y_star: &[f64], tol: f64) -> Result<ConditionalMap<'a>> {
    if n_y == 0 || n_y >= map.dim() {
        return Err(TrimapError::InvalidArgument(format!(
            "split index {n_y} must lie in 1..{}",
            map.dim()
        )));
    }
    if y_star.len() != n_y {
        return Err(TrimapError::DimensionMismatch {
            expected: n_y,
            found: y_star.len(),
        });
    }
    let x_star = match map.direction() {
        Direction::Direct => invert_block(map, &[], y_star, tol)?,
        Direction::Inverse => {
            let mut full = y_star.to_vec();
            full.resize(map.dim(), 0.0);
            map.evaluate(&full)?[..n_y].to_vec()
        }
    };
    Ok(ConditionalMap {
        parent: map,
        split: n_y,
        y_star: y_star.to_vec(),
        x_star,
    })
}

impl<'a> ConditionalMap<'a> {
    pub fn parent(&self) -> &TriangularMap {
        self.parent
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn y_star(&self) -> &[f64] {
        &self.y_star
    }

    /// Reference-side values of the conditioning block.
    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    /// Dimension of the conditioned block.
    pub fn dim(&self) -> usize {
        self.parent.dim() - self.split
    }

    /// Maps a reference draw `w` of the remaining coordinates to a
    /// conditional sample.
    pub fn map_point(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.dim() {
            return Err(TrimapError::DimensionMismatch {
                expected: self.dim(),
                found: w.len(),
            });
        }
        match self.parent.direction() {
            Direction::Direct => {
                let mut x = self.x_star.clone();
                x.extend_from_slice(w);
                Ok(self.parent.evaluate(&x)?[self.split..].to_vec())
            }
            Direction::Inverse => invert_block(self.parent, &self.y_star, w, SAMPLING_TOL),
        }
    }

    /// `m` conditional samples; draw `i` uses the counter-based stream
    /// `(seed, i)`.
    pub fn sample(&self, m: usize, seed: u64) -> Result<SampleSet> {
        if m == 0 {
            return Err(TrimapError::InvalidArgument("sample count must be positive".into()));
        }
        let d = self.dim();
        let rows: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut rng = point_rng(seed, i as u64);
                let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                self.map_point(&w)
            })
            .collect::<Result<_>>()?;
        Ok(SampleSet::from_rows(&rows, Provenance::Pushforward)?.with_seed(seed))
    }
}

/// [`ConditionalMap::sample`] as a free function.
pub fn sample_conditional(cmap: &ConditionalMap<'_>, m: usize, seed: u64) -> Result<SampleSet> {
    cmap.sample(m, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapTemplate;
    use crate::stats::moments;

    fn gaussian_kr(rho: f64, direction: Direction) -> TriangularMap {
        let mut m = TriangularMap::identity(2, direction, &MapTemplate::total_order(1)).unwrap();
        // component 2 coefficients: [1, x2, x1]
        m.set_params(&[0.0, 1.0, 0.0, (1.0 - rho * rho).sqrt(), rho]).unwrap();
        m
    }

    #[test]
    fn gaussian_conditional_moments() {
        let map = gaussian_kr(0.5, Direction::Direct);
        let c = condition(&map, 1, &[1.0], 1e-12).unwrap();
        let s = c.sample(20_000, 3).unwrap();
        let m = moments(&s.column(0));
        assert!((m.mean - 0.5).abs() < 4.0 * (0.75f64 / 20_000.0).sqrt());
        assert!((m.variance - 0.75).abs() < 4.0 * (2.0 * 0.75f64 * 0.75 / 20_000.0).sqrt());
    }

    #[test]
    fn inverse_parent_matches_direct_parent() {
        // The inverse of the KR map above, S = T^{-1}, conditioned at the
        // same y must give the same conditional.
        let rho: f64 = 0.5;
        let s_c = (1.0 - rho * rho).sqrt();
        let mut s = TriangularMap::identity(2, Direction::Inverse, &MapTemplate::total_order(1)).unwrap();
        s.set_params(&[0.0, 1.0, 0.0, 1.0 / s_c, -rho / s_c]).unwrap();
        let t = gaussian_kr(rho, Direction::Direct);
        let a = condition(&t, 1, &[1.0], 1e-12).unwrap().sample(50, 9).unwrap();
        let b = condition(&s, 1, &[1.0], 1e-12).unwrap().sample(50, 9).unwrap();
        for (u, v) in a.as_flat().iter().zip(b.as_flat()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_conditional_is_reference_and_reproducible() {
        let map = TriangularMap::identity(3, Direction::Direct, &MapTemplate::total_order(2)).unwrap();
        let c = condition(&map, 1, &[2.5], 1e-12).unwrap();
        assert!((c.x_star()[0] - 2.5).abs() < 1e-12);
        let a = c.sample(1, 11).unwrap();
        let b = c.sample(1, 11).unwrap();
        assert_eq!(a, b);
        let c2 = condition(&map, 1, &[-1.0], 1e-12).unwrap();
        assert_eq!(c2.sample(1, 11).unwrap(), a);
    }
}
