//! Adaptive random-walk Metropolis and map-preconditioned sampling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diagnostics::pullback_logdensity;
use crate::error::{Result, TrimapError};
use crate::map::{Direction, TriangularMap};
use crate::quadrature::{Provenance, SampleSet};
use crate::solver::invert_at;
use crate::target::TargetDensity;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Adapt the proposal covariance from the chain history.
    pub adapt: bool,
    /// Steps between covariance updates.
    pub adapt_interval: usize,
    /// First step at which adaptation may start.
    pub adapt_start: usize,
    /// Regularization added to the empirical covariance.
    pub epsilon: f64,
    /// Initial (or fixed, when not adapting) proposal covariance, row-major.
    /// Defaults to `(0.1^2) I`.
    pub initial_covariance: Option<Vec<f64>>,
}

impl AdaptiveConfig {
    pub fn new(steps: usize, burn_in: usize, seed: u64) -> Self {
        AdaptiveConfig {
            steps,
            burn_in,
            seed,
            adapt: true,
            adapt_interval: 100,
            adapt_start: 1000,
            epsilon: 1e-8,
            initial_covariance: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    /// Post burn-in states.
    pub chain: SampleSet,
    pub acceptance_rate: f64,
    /// Effective sample size per coordinate.
    pub ess: Vec<f64>,
    /// Final proposal covariance, row-major.
    pub proposal_covariance: Vec<f64>,
}

/// Haario-style adaptive Metropolis on an unnormalized log-density.
///
/// The proposal covariance is `2.38^2 / n (C + epsilon I)` with `C` the
/// covariance of all states so far, refreshed every `adapt_interval` steps.
/// `-inf` log-densities are rejected moves; NaN is an error.
pub fn adaptive_metropolis<F>(log_density: F, x0: &[f64], config: &AdaptiveConfig) -> Result<ChainResult>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    if n == 0 || config.steps <= config.burn_in {
        return Err(TrimapError::InvalidArgument("need n >= 1 and steps > burn-in".into()));
    }
    let mut current = x0.to_vec();
    let mut lp = log_density(&current)?;
    if !lp.is_finite() {
        return Err(TrimapError::InvalidArgument("log-density is not finite at the start point".into()));
    }
    let sd = 2.38 * 2.38 / n as f64;
    let init = match &config.initial_covariance {
        Some(c) if c.len() == n * n => DMatrix::from_row_slice(n, n, c),
        Some(c) => {
            return Err(TrimapError::DimensionMismatch {
                expected: n * n,
                found: c.len(),
            })
        }
        None => DMatrix::identity(n, n) * 0.01,
    };
    let mut cov = init;
    let mut chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| TrimapError::InvalidArgument("proposal covariance is not positive definite".into()))?
        .l();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Running mean and co-moment of all visited states.
    let mut mean = DVector::from_column_slice(&current);
    let mut comoment = DMatrix::<f64>::zeros(n, n);
    let mut count = 1.0;

    let kept = config.steps - config.burn_in;
    let mut chain = Vec::with_capacity(kept * n);
    let mut accepted = 0usize;
    let mut proposal = vec![0.0; n];
    for step in 1..=config.steps {
        let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let delta = &chol * noise;
        for (p, (c, d)) in proposal.iter_mut().zip(current.iter().zip(delta.iter())) {
            *p = c + d;
        }
        let lp_new = log_density(&proposal)?;
        if lp_new.is_nan() {
            return Err(TrimapError::CallbackFailure(format!("log-density is NaN at {proposal:?}")));
        }
        let u: f64 = rng.random();
        if lp_new > f64::NEG_INFINITY && u.ln() < lp_new - lp {
            current.copy_from_slice(&proposal);
            lp = lp_new;
            if step > config.burn_in {
                accepted += 1;
            }
        }
        // Welford update.
        count += 1.0;
        let x = DVector::from_column_slice(&current);
        let d_old = &x - &mean;
        mean += &d_old / count;
        let d_new = &x - &mean;
        comoment += &d_old * d_new.transpose();

        if config.adapt && step >= config.adapt_start && step % config.adapt_interval == 0 {
            let mut c = &comoment / (count - 1.0);
            for i in 0..n {
                c[(i, i)] += config.epsilon;
            }
            c *= sd;
            if let Some(ch) = c.clone().cholesky() {
                cov = c;
                chol = ch.l();
            }
        }
        if step > config.burn_in {
            chain.extend_from_slice(&current);
        }
    }
    let acceptance_rate = accepted as f64 / kept as f64;
    if acceptance_rate < 0.01 {
        log::warn!("chain is nearly stuck: acceptance rate {acceptance_rate:.4}");
    }
    let samples = SampleSet::new(n, chain, Provenance::Target)?.with_seed(config.seed);
    let ess = (0..n).map(|j| effective_sample_size(&samples.column(j))).collect();
    Ok(ChainResult {
        chain: samples,
        acceptance_rate,
        ess,
        proposal_covariance: cov.as_slice().to_vec(),
    })
}

/// [`adaptive_metropolis`] on a [`TargetDensity`].
pub fn sample_target<T: TargetDensity + ?Sized>(target: &T, x0: &[f64], config: &AdaptiveConfig) -> Result<ChainResult> {
    adaptive_metropolis(|y| Ok(target.log_density(y)), x0, config)
}

/// Effective sample size by Geyer's initial monotone sequence estimator.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 { c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 };
    let gamma0 = autocov(0);
    if !(gamma0 > 0.0) {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = autocov(2 * m) + autocov(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let tau = (-gamma0 + 2.0 * sum) / gamma0;
    (n as f64 / tau.max(1e-12)).min(n as f64 * 10.0)
}

/// Result of sampling the pullback of a target through a map.
#[derive(Debug, Clone)]
pub struct PreconditionedResult {
    /// Chain on the reference side.
    pub reference_chain: ChainResult,
    /// Chain pushed through the map: samples from the exact target.
    pub samples: SampleSet,
}

/// Runs adaptive Metropolis on the pullback of `target` through `map`
/// (started at the origin) and pushes the chain through the map.
///
/// Direct maps are evaluated; inverse maps are inverted pointwise, so each
/// step costs one triangular solve. Points where the map is not monotone
/// have zero pullback density.
pub fn preconditioned_sample<T: TargetDensity + ?Sized>(
    map: &TriangularMap,
    target: &T,
    config: &AdaptiveConfig,
) -> Result<PreconditionedResult> {
    if map.dim() != target.dim() {
        return Err(TrimapError::DimensionMismatch {
            expected: map.dim(),
            found: target.dim(),
        });
    }
    let n = map.dim();
    let log_density = |x: &[f64]| -> Result<f64> { reference_side_logdensity(map, target, x) };
    let chain = adaptive_metropolis(log_density, &vec![0.0; n], config)?;
    let mut pushed = Vec::with_capacity(chain.chain.len() * n);
    for x in chain.chain.rows() {
        pushed.extend(to_target_side(map, x)?);
    }
    let mut samples = SampleSet::new(n, pushed, Provenance::Pushforward)?.with_seed(config.seed);
    samples.set_provenance(Provenance::Target);
    Ok(PreconditionedResult {
        reference_chain: chain,
        samples,
    })
}

const PRECONDITION_TOL: f64 = 1e-11;

fn to_target_side(map: &TriangularMap, x: &[f64]) -> Result<Vec<f64>> {
    match map.direction() {
        Direction::Direct => map.evaluate(x),
        Direction::Inverse => invert_at(map, x, PRECONDITION_TOL),
    }
}

fn reference_side_logdensity<T: TargetDensity + ?Sized>(map: &TriangularMap, target: &T, x: &[f64]) -> Result<f64> {
    let result = match map.direction() {
        Direction::Direct => pullback_logdensity(map, target, x),
        Direction::Inverse => invert_at(map, x, PRECONDITION_TOL).and_then(|y| {
            let lp = crate::target::checked_log_density(target, &y)?;
            Ok(lp - map.log_det_jacobian(&y)?)
        }),
    };
    match result {
        Err(TrimapError::NonMonotoneAtPoint { .. } | TrimapError::BracketFailure { .. }) => Ok(f64::NEG_INFINITY),
        other => other,
    }
}
