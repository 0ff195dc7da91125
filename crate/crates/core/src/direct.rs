//! Direct transport: fit `T` with `T_# eta ~ pi` from unnormalized
//! target log-density evaluations by sample-average approximation.

use crate::diagnostics::{kl_variance_direct, log_normalizing_constant};
use crate::error::{Result, TrimapError};
use crate::map::{ComponentKind, Direction, MapTemplate, TriangularMap};
use crate::optim::{lbfgs, OptimResult, OptimizerOptions};
use crate::parallel::chunked_sum;
use crate::quadrature::{gauss_hermite_1d, sample_reference, tensorize, QuadratureRule};
use crate::report::OptimizationReport;
use crate::target::{log_density_and_gradient, TargetDensity};

/// Lower bound on diagonal partials at the nodes in pointwise mode.
pub const POINTWISE_EPSILON: f64 = 1e-6;

/// Smallest gradient tolerance used when the target gradient comes from
/// forward differences, whose truncation error sits near this level.
pub const FD_GRADIENT_TOL: f64 = 1e-5;

/// How expectations against the reference are discretized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integration {
    /// Tensor Gauss-Hermite rule of this order per dimension.
    GaussHermite { order: usize },
    MonteCarlo { size: usize, seed: u64 },
}

impl Integration {
    pub fn rule(&self, n: usize) -> Result<QuadratureRule> {
        match self {
            Integration::GaussHermite { order } => tensorize(&gauss_hermite_1d(*order)?, n),
            Integration::MonteCarlo { size, seed } => {
                Ok(QuadratureRule::from_samples(&sample_reference(*size, n, *seed)?))
            }
        }
    }
}

/// How monotonicity is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// Monotone by construction; no constraint needed.
    MonotoneParam,
    /// `d_k T^k > epsilon` at every node, enforced by rejecting infeasible
    /// steps in the line search.
    PointwiseAtNodes,
}

impl ConstraintMode {
    /// The natural mode for a template.
    pub fn for_template(template: &MapTemplate) -> Self {
        match template.kind {
            ComponentKind::Monotone => ConstraintMode::MonotoneParam,
            _ => ConstraintMode::PointwiseAtNodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initialization {
    Identity,
    /// Full coefficient vector in component order.
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectBuildConfig {
    pub integration: Integration,
    pub template: MapTemplate,
    pub constraint: ConstraintMode,
    pub optimizer: OptimizerOptions,
    pub init: Initialization,
}

impl DirectBuildConfig {
    pub fn new(template: MapTemplate, integration: Integration) -> Self {
        DirectBuildConfig {
            integration,
            constraint: ConstraintMode::for_template(&template),
            template,
            optimizer: OptimizerOptions::default(),
            init: Initialization::Identity,
        }
    }

    fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        if !(o.gradient_tol > 0.0) || o.max_iterations == 0 || o.memory == 0 {
            return Err(TrimapError::InvalidArgument("optimizer tolerances must be positive".into()));
        }
        if self.constraint == ConstraintMode::MonotoneParam && self.template.kind != ComponentKind::Monotone {
            return Err(TrimapError::InvalidArgument(
                "monotone-parameterization mode needs a monotone template".into(),
            ));
        }
        if matches!(self.template.kind, ComponentKind::Rbf(_)) {
            return Err(TrimapError::InvalidArgument(
                "RBF templates are only available for sample-based builds".into(),
            ));
        }
        Ok(())
    }
}

/// `sum_i w_i [ -log pi_bar(T x_i) - sum_k log d_k T^k(x_i) ]` and its
/// coefficient gradient. Non-monotone nodes are errors.
pub fn direct_objective<T: TargetDensity + ?Sized>(
    map: &TriangularMap,
    target: &T,
    rule: &QuadratureRule,
) -> Result<(f64, Vec<f64>)> {
    objective_with_mode(map, target, rule, None, 0.0)
}

/// As [`direct_objective`], but nodes where a diagonal partial does not
/// exceed `epsilon` (or where the target has no support) give `+inf`.
pub fn direct_objective_pointwise<T: TargetDensity + ?Sized>(
    map: &TriangularMap,
    target: &T,
    rule: &QuadratureRule,
    epsilon: f64,
) -> Result<(f64, Vec<f64>)> {
    objective_with_mode(map, target, rule, Some(epsilon), 0.0)
}

fn objective_with_mode<T: TargetDensity + ?Sized>(
    map: &TriangularMap,
    target: &T,
    rule: &QuadratureRule,
    epsilon: Option<f64>,
    barrier: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = map.dim();
    // Uniform per-node weight of the optional `-log(partial - epsilon)` term.
    let barrier_weight = barrier / rule.len() as f64;
    let floor = epsilon.unwrap_or(0.0);
    if target.dim() != n || rule.dim() != n {
        return Err(TrimapError::DimensionMismatch {
            expected: n,
            found: if target.dim() != n { target.dim() } else { rule.dim() },
        });
    }
    let offsets = map.param_offsets();
    let np = map.num_params();
    let scales: Vec<f64> = (1..=n).map(|k| map.input_scale(k)).collect();
    let acc = chunked_sum(rule.len(), 1 + np, |range, acc| {
        let mut y = vec![0.0; n];
        let mut evals = Vec::with_capacity(n);
        for i in range {
            let x = rule.node(i);
            let w = rule.weight(i);
            let z = map.standardize(x);
            evals.clear();
            let mut log_det = 0.0;
            for (k, c) in map.components().iter().enumerate() {
                let ev = c.evaluate_with_gradients(&z);
                let partial = ev.partial / scales[k];
                match epsilon {
                    Some(eps) if !(partial > eps) => {
                        acc[0] = f64::INFINITY;
                        return Ok(());
                    }
                    None if !(partial > 0.0) => {
                        return Err(TrimapError::NonMonotoneAtPoint {
                            component: k + 1,
                            point: x.to_vec(),
                            partial,
                        })
                    }
                    _ => {}
                }
                log_det += partial.ln();
                if barrier > 0.0 {
                    let slack = partial - floor;
                    acc[0] -= barrier_weight * slack.ln();
                    let g = &mut acc[1 + offsets[k]..1 + offsets[k + 1]];
                    for (gj, dp) in g.iter_mut().zip(&ev.d_partial) {
                        *gj -= barrier_weight * dp / scales[k] / slack;
                    }
                }
                y[k] = ev.value;
                evals.push(ev);
            }
            let (lp, grad_lp) = log_density_and_gradient(target, &y)?;
            if lp == f64::NEG_INFINITY {
                if epsilon.is_some() {
                    acc[0] = f64::INFINITY;
                    return Ok(());
                }
                return Err(TrimapError::TargetOutOfSupport(y.clone()));
            }
            acc[0] += w * (-lp - log_det);
            for (k, ev) in evals.iter().enumerate() {
                let g = &mut acc[1 + offsets[k]..1 + offsets[k + 1]];
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj -= w * (grad_lp[k] * ev.d_value[j] + ev.d_partial[j] / ev.partial);
                }
            }
        }
        Ok(())
    })?;
    Ok((acc[0], acc[1..].to_vec()))
}

/// Builds a direct map for `target` with all components optimized jointly.
///
/// Returns the best iterate even when the optimizer stops early; check
/// `report.converged`.
pub fn build_direct<T: TargetDensity + ?Sized>(
    target: &T,
    config: &DirectBuildConfig,
) -> Result<(TriangularMap, OptimizationReport)> {
    let rule = config.integration.rule(target.dim())?;
    build_direct_on_rule(target, config, &rule)
}

/// [`build_direct`] with an explicit integration rule.
pub fn build_direct_on_rule<T: TargetDensity + ?Sized>(
    target: &T,
    config: &DirectBuildConfig,
    rule: &QuadratureRule,
) -> Result<(TriangularMap, OptimizationReport)> {
    config.validate()?;
    let n = target.dim();
    let mut map = TriangularMap::identity(n, Direction::Direct, &config.template)?;
    if let Initialization::Given(c) = &config.init {
        map.set_params(c)?;
    }
    let epsilon = match config.constraint {
        ConstraintMode::PointwiseAtNodes => Some(POINTWISE_EPSILON),
        ConstraintMode::MonotoneParam => None,
    };
    let mut options = config.optimizer;
    if target.gradient(rule.node(0)).is_none() && options.gradient_tol < FD_GRADIENT_TOL {
        log::warn!(
            "finite-difference target gradient: gradient tolerance raised from {:.1e} to {FD_GRADIENT_TOL:.1e}",
            options.gradient_tol
        );
        options.gradient_tol = FD_GRADIENT_TOL;
    }
    let x0 = map.params();
    let mut work = map.clone();
    let (start, _) = objective_with_mode(&map, target, rule, epsilon, 0.0)?;
    if !start.is_finite() {
        return Err(TrimapError::InvalidArgument(
            "initial map is infeasible at the integration nodes".into(),
        ));
    }
    let mut result = lbfgs(
        |c| {
            work.set_params(c)?;
            objective_with_mode(&work, target, rule, epsilon, 0.0)
        },
        &x0,
        &options,
    )?;
    if !result.converged && epsilon.is_some() {
        // The iterate is stuck against the rejection wall. Approach the
        // constrained optimum from the interior instead.
        let interior = barrier_continuation(target, rule, &work, &x0, &options)?;
        log::info!(
            "direct build: barrier continuation reached {:.12} (plain run {:.12})",
            interior.value,
            result.value
        );
        if interior.value <= result.value {
            result = interior;
        }
    }
    map.set_params(&result.x)?;
    if !result.converged {
        log::warn!(
            "direct build stopped after {} iterations with gradient norm {:.3e}",
            result.iterations,
            result.gradient_norm
        );
    }
    let violations = map.monotonicity_violations((0..rule.len()).map(|i| rule.node(i)));
    let (kl, log_beta) = if violations == 0 {
        (
            Some(kl_variance_direct(&map, target, rule)?),
            Some(log_normalizing_constant(&map, target, rule)?),
        )
    } else {
        (None, None)
    };
    let report = OptimizationReport {
        objective: result.value,
        gradient_norm: result.gradient_norm,
        iterations: result.iterations,
        converged: result.converged,
        unconverged_components: if result.converged { vec![] } else { (1..=n).collect() },
        trace: result.trace,
        kl_variance: kl,
        log_normalizing_constant: log_beta,
        violations,
        nodes: rule.len(),
    };
    Ok((map, report))
}

const BARRIER_START: f64 = 1.0;
const BARRIER_END: f64 = 1e-6;

/// Minimizes the pointwise objective plus `mu * mean(-log(partial - eps))`
/// for decreasing `mu`, each stage warm-started from the last, then polishes
/// on the plain objective.
fn barrier_continuation<T: TargetDensity + ?Sized>(
    target: &T,
    rule: &QuadratureRule,
    template_map: &TriangularMap,
    x0: &[f64],
    opts: &OptimizerOptions,
) -> Result<OptimResult> {
    let mut work = template_map.clone();
    let mut x = x0.to_vec();
    let mut mu = BARRIER_START;
    loop {
        let stage = lbfgs(
            |c| {
                work.set_params(c)?;
                objective_with_mode(&work, target, rule, Some(POINTWISE_EPSILON), mu)
            },
            &x,
            opts,
        )?;
        log::debug!(
            "barrier stage mu={mu:e}: {} iterations, gradient norm {:.3e}",
            stage.iterations,
            stage.gradient_norm
        );
        x = stage.x;
        if mu <= BARRIER_END * 1.0001 {
            break;
        }
        mu *= 0.1;
    }
    // Polish on the plain objective from the interior solution.
    lbfgs(
        |c| {
            work.set_params(c)?;
            objective_with_mode(&work, target, rule, Some(POINTWISE_EPSILON), 0.0)
        },
        &x,
        opts,
    )
}

/// `log beta` for `pi_bar = beta * pi`; see
/// [`crate::diagnostics::log_normalizing_constant`].
pub fn estimate_log_normalizing_constant<T: TargetDensity + ?Sized>(
    map: &TriangularMap,
    target: &T,
    rule: &QuadratureRule,
) -> Result<f64> {
    log_normalizing_constant(map, target, rule)
}
