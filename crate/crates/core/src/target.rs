//! Unnormalized target log-densities.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TrimapError};

/// An unnormalized target density `pi_bar` on `R^n`.
///
/// `log_density` returns `f64::NEG_INFINITY` outside the support and must
/// never return NaN. `gradient` is optional; without it callers fall back to
/// one-sided finite differences.
pub trait TargetDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, y: &[f64]) -> f64;

    fn gradient(&self, _y: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

impl<T: TargetDensity + ?Sized> TargetDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        (**self).log_density(y)
    }

    fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        (**self).gradient(y)
    }
}

impl<T: TargetDensity + ?Sized> TargetDensity for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        (**self).log_density(y)
    }

    fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        (**self).gradient(y)
    }
}

static FD_WARNED: AtomicBool = AtomicBool::new(false);

/// Checked log-density evaluation. NaN and `+inf` become `CallbackFailure`.
pub fn checked_log_density<T: TargetDensity + ?Sized>(target: &T, y: &[f64]) -> Result<f64> {
    let lp = target.log_density(y);
    if lp.is_nan() || lp == f64::INFINITY {
        return Err(TrimapError::CallbackFailure(format!(
            "log-density returned {lp} at {y:?}"
        )));
    }
    Ok(lp)
}

/// Log-density and its gradient. Falls back to forward differences with step
/// `1e-5 (1 + |y_j|)` when the target has no analytic gradient. Returns
/// `(-inf, zeros)` outside the support.
pub fn log_density_and_gradient<T: TargetDensity + ?Sized>(target: &T, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let lp = checked_log_density(target, y)?;
    if lp == f64::NEG_INFINITY {
        return Ok((lp, vec![0.0; y.len()]));
    }
    let grad = match target.gradient(y) {
        Some(g) => g,
        None => {
            if !FD_WARNED.swap(true, Ordering::Relaxed) {
                log::warn!("target has no analytic gradient; using finite differences");
            }
            let mut yp = y.to_vec();
            (0..y.len())
                .map(|j| {
                    let h = 1e-5 * (1.0 + y[j].abs());
                    yp[j] = y[j] + h;
                    let fp = checked_log_density(target, &yp)?;
                    yp[j] = y[j];
                    Ok((fp - lp) / h)
                })
                .collect::<Result<Vec<f64>>>()?
        }
    };
    if grad.len() != y.len() {
        return Err(TrimapError::CallbackFailure(format!(
            "gradient has {} entries for a {}-dimensional point",
            grad.len(),
            y.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(TrimapError::CallbackFailure(format!("non-finite gradient at {y:?}")));
    }
    Ok((lp, grad))
}

/// Log-density of the standard normal reference `eta` on `R^n`.
pub fn reference_log_density(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    -0.5 * x.iter().map(|v| v * v).sum::<f64>() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Multivariate Gaussian `N(mean, cov)`, optionally with its normalizing
/// constant and an extra additive log-offset.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: Vec<f64>,
    chol: DMatrix<f64>,
    log_offset: f64,
}

impl GaussianTarget {
    /// Unnormalized: `-0.5 (y - m)^T C^{-1} (y - m)`.
    pub fn new(mean: Vec<f64>, cov: &[Vec<f64>]) -> Result<Self> {
        let n = mean.len();
        if cov.len() != n || cov.iter().any(|r| r.len() != n) {
            return Err(TrimapError::DimensionMismatch {
                expected: n,
                found: cov.len(),
            });
        }
        let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
        let chol = m
            .cholesky()
            .ok_or_else(|| TrimapError::InvalidArgument("covariance is not positive definite".into()))?
            .l();
        Ok(GaussianTarget {
            mean,
            chol,
            log_offset: 0.0,
        })
    }

    /// Standard normal on `R^n`.
    pub fn standard(n: usize) -> Self {
        let cov: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::new(vec![0.0; n], &cov).expect("identity covariance")
    }

    /// Adds the Gaussian normalizing constant so the density integrates to one.
    pub fn normalized(mut self) -> Self {
        let n = self.mean.len() as f64;
        let log_det: f64 = (0..self.mean.len()).map(|i| self.chol[(i, i)].ln()).sum();
        self.log_offset -= 0.5 * n * (2.0 * std::f64::consts::PI).ln() + log_det;
        self
    }

    /// Multiplies the density by `exp(offset)`.
    pub fn with_log_offset(mut self, offset: f64) -> Self {
        self.log_offset += offset;
        self
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Lower Cholesky factor of the covariance; this is the linear
    /// Knothe-Rosenblatt map from the standard normal.
    pub fn cholesky_factor(&self) -> Vec<Vec<f64>> {
        let n = self.mean.len();
        (0..n).map(|i| (0..n).map(|j| self.chol[(i, j)]).collect()).collect()
    }

    fn whitened(&self, y: &[f64]) -> DVector<f64> {
        let r = DVector::from_iterator(y.len(), y.iter().zip(&self.mean).map(|(a, b)| a - b));
        self.chol.solve_lower_triangular(&r).expect("non-singular factor")
    }
}

impl TargetDensity for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        -0.5 * self.whitened(y).norm_squared() + self.log_offset
    }

    fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        let w = self.whitened(y);
        let g = self.chol.transpose().solve_upper_triangular(&w).expect("non-singular factor");
        Some(g.iter().map(|v| -v).collect())
    }
}

/// Two-dimensional banana: `y_1 ~ N(0, 1)`, `y_2 | y_1 ~ N(c y_1^2, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct BananaTarget {
    pub curvature: f64,
}

impl Default for BananaTarget {
    fn default() -> Self {
        BananaTarget { curvature: 1.0 }
    }
}

impl TargetDensity for BananaTarget {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        let r = y[1] - self.curvature * y[0] * y[0];
        -0.5 * y[0] * y[0] - 0.5 * r * r
    }

    fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        let r = y[1] - self.curvature * y[0] * y[0];
        Some(vec![-y[0] + 2.0 * self.curvature * y[0] * r, -r])
    }
}

/// Target `c * pi_bar` for a positive constant `c = exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct ScaledTarget<T> {
    pub inner: T,
    pub log_scale: f64,
}

impl<T: TargetDensity> TargetDensity for ScaledTarget<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        self.inner.log_density(y) + self.log_scale
    }

    fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        self.inner.gradient(y)
    }
}

/// Target defined by closures.
pub struct FnTarget<F, G = fn(&[f64]) -> Vec<f64>> {
    dim: usize,
    log_density: F,
    gradient: Option<G>,
}

impl<F> FnTarget<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, log_density: F) -> Self {
        FnTarget {
            dim,
            log_density,
            gradient: None,
        }
    }
}

impl<F, G> FnTarget<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn with_gradient(dim: usize, log_density: F, gradient: G) -> Self {
        FnTarget {
            dim,
            log_density,
            gradient: Some(gradient),
        }
    }
}

impl<F, G> TargetDensity for FnTarget<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        (self.log_density)(y)
    }

    fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(y))
    }
}
