//! Map-quality diagnostics: variance-based KL estimates, normalizing
//! constants, bias bounds and pullback densities.

use rayon::prelude::*;

use crate::error::{Result, TrimapError};
use crate::map::TriangularMap;
use crate::quadrature::{QuadratureRule, SampleSet};
use crate::stats::weighted_mean_variance;
use crate::target::{checked_log_density, reference_log_density, TargetDensity};

/// `log pi_bar(T(x)) + log det grad T(x)`, the unnormalized log-density of the
/// pullback of the target through a direct map.
pub fn pullback_logdensity<T: TargetDensity + ?Sized>(map: &TriangularMap, target: &T, x: &[f64]) -> Result<f64> {
    let y = map.evaluate(x)?;
    let log_det = map.log_det_jacobian(x)?;
    Ok(checked_log_density(target, &y)? + log_det)
}

/// `log eta(x) - log pi_bar(T(x)) - log det grad T(x)` at every node.
pub fn direct_log_ratios<T: TargetDensity + ?Sized>(
    map: &TriangularMap,
    target: &T,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    check_dims(map, target.dim(), rule.dim())?;
    (0..rule.len())
        .into_par_iter()
        .map(|i| {
            let x = rule.node(i);
            let y = map.evaluate(x)?;
            let lp = checked_log_density(target, &y)?;
            if lp == f64::NEG_INFINITY {
                return Err(TrimapError::TargetOutOfSupport(y));
            }
            Ok(reference_log_density(x) - lp - map.log_det_jacobian(x)?)
        })
        .collect()
}

fn check_dims(map: &TriangularMap, target_dim: usize, points_dim: usize) -> Result<()> {
    if target_dim != map.dim() {
        return Err(TrimapError::DimensionMismatch {
            expected: map.dim(),
            found: target_dim,
        });
    }
    if points_dim != map.dim() {
        return Err(TrimapError::DimensionMismatch {
            expected: map.dim(),
            found: points_dim,
        });
    }
    Ok(())
}

/// Half the weighted variance of the direct log-ratio over the rule.
/// Unchanged by adding a constant to the target log-density.
pub fn kl_variance_direct<T: TargetDensity + ?Sized>(
    map: &TriangularMap,
    target: &T,
    rule: &QuadratureRule,
) -> Result<f64> {
    let r = direct_log_ratios(map, target, rule)?;
    Ok(0.5 * weighted_mean_variance(&r, rule.weights()).1)
}

/// Estimate of `log beta`, where `pi_bar = beta * pi` for the normalized
/// target `pi`. Exact (up to quadrature) when the map is exact.
pub fn log_normalizing_constant<T: TargetDensity + ?Sized>(
    map: &TriangularMap,
    target: &T,
    rule: &QuadratureRule,
) -> Result<f64> {
    let r = direct_log_ratios(map, target, rule)?;
    Ok(-weighted_mean_variance(&r, rule.weights()).0)
}

/// `log pi_bar(y) - log eta(S(y)) - log det grad S(y)` for every sample.
pub fn inverse_log_ratios<T: TargetDensity + ?Sized>(
    map: &TriangularMap,
    samples: &SampleSet,
    target: &T,
) -> Result<Vec<f64>> {
    check_dims(map, target.dim(), samples.dim())?;
    (0..samples.len())
        .into_par_iter()
        .map(|i| {
            let y = samples.row(i);
            let x = map.evaluate(y)?;
            let lp = checked_log_density(target, y)?;
            if lp == f64::NEG_INFINITY {
                return Err(TrimapError::TargetOutOfSupport(y.to_vec()));
            }
            Ok(lp - reference_log_density(&x) - map.log_det_jacobian(y)?)
        })
        .collect()
}

/// Half the sample variance (`1/M`) of the inverse log-ratio over target
/// samples. A single sample gives 0 with a warning.
pub fn kl_variance_inverse<T: TargetDensity + ?Sized>(
    map: &TriangularMap,
    samples: &SampleSet,
    target: &T,
) -> Result<f64> {
    let r = inverse_log_ratios(map, samples, target)?;
    if r.len() == 1 {
        log::warn!("KL variance from a single sample is identically zero");
        return Ok(0.0);
    }
    let w = vec![1.0 / r.len() as f64; r.len()];
    Ok(0.5 * weighted_mean_variance(&r, &w).1)
}

/// Bias bound `C sqrt(KL)` for expectations of a test function `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasBound {
    pub bound: f64,
    pub constant: f64,
    pub kl_estimate: f64,
    /// `E_pi ||g||^2` was not supplied and was replaced by the approximate
    /// target's value.
    pub surrogate_constant: bool,
}

/// Bounds `|E_pi[g] - E_pi_tilde[g]|` for the map's pushforward `pi_tilde`.
///
/// `target_second_moment` is `E_pi ||g||^2` when known; otherwise the
/// pushforward estimate stands in and the result is flagged.
pub fn bias_bound<T, G>(
    map: &TriangularMap,
    target: &T,
    g: G,
    rule: &QuadratureRule,
    target_second_moment: Option<f64>,
) -> Result<BiasBound>
where
    T: TargetDensity + ?Sized,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let kl = kl_variance_direct(map, target, rule)?;
    let approx: Vec<f64> = (0..rule.len())
        .into_par_iter()
        .map(|i| {
            let y = map.evaluate(rule.node(i))?;
            Ok(g(&y).iter().map(|v| v * v).sum::<f64>())
        })
        .collect::<Result<_>>()?;
    let approx_moment: f64 = approx.iter().zip(rule.weights()).map(|(a, w)| a * w).sum();
    let surrogate = target_second_moment.is_none();
    if surrogate {
        log::warn!("target second moment unavailable; bias constant uses the approximation's moment");
    }
    let exact_moment = target_second_moment.unwrap_or(approx_moment);
    let constant = (2.0 * (exact_moment + approx_moment)).sqrt();
    Ok(BiasBound {
        bound: constant * kl.sqrt(),
        constant,
        kl_estimate: kl,
        surrogate_constant: surrogate,
    })
}
