//! Inverse transport: fit `S` with `S_# pi ~ eta` from target samples.
//!
//! The objective splits into one convex problem per component, so components
//! are fitted independently and in parallel. Also hosts least-squares
//! regression of a direct map from sample pairs and a Gaussianity check for
//! pushed-forward samples.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::direct::POINTWISE_EPSILON;
use crate::error::{Result, TrimapError};
use crate::map::{AffinePremap, ComponentKind, Direction, MapComponent, MapTemplate, TriangularMap};
use crate::optim::{lbfgs, newton, solve_spd, OptimResult, OptimizerOptions};
use crate::parallel::chunked_sum;
use crate::quadrature::SampleSet;
use crate::report::OptimizationReport;
use crate::stats::{correlation, ks_distance_normal, moments};

/// Above this many coefficients a linear component is fitted with L-BFGS
/// instead of Newton, to avoid forming the dense Hessian.
pub const NEWTON_MAX_COEFFICIENTS: usize = 600;

#[derive(Debug, Clone, PartialEq)]
pub struct InverseBuildConfig {
    pub template: MapTemplate,
    pub optimizer: OptimizerOptions,
    /// Standardize the samples per coordinate and store the affine piece as
    /// the map's pre-map.
    pub standardize: bool,
}

impl InverseBuildConfig {
    pub fn new(template: MapTemplate) -> Self {
        InverseBuildConfig {
            template,
            optimizer: OptimizerOptions::default(),
            standardize: true,
        }
    }
}

/// Per-coordinate mean and population standard deviation.
pub fn standardizing_premap(samples: &SampleSet) -> Result<AffinePremap> {
    let n = samples.dim();
    let m = samples.len() as f64;
    let mut shift = vec![0.0; n];
    let mut scale = vec![0.0; n];
    for j in 0..n {
        let col = samples.column(j);
        let mean = col.iter().sum::<f64>() / m;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        if !(var > 0.0) {
            return Err(TrimapError::InvalidArgument(format!(
                "sample column {} has zero variance",
                j + 1
            )));
        }
        shift[j] = mean;
        scale[j] = var.sqrt();
    }
    AffinePremap::new(shift, scale)
}

/// Samples in the coordinates seen by the components, plus weights summing
/// to one.
struct Prepared {
    dim: usize,
    z: Vec<f64>,
    weights: Vec<f64>,
}

impl Prepared {
    fn new(samples: &SampleSet, premap: Option<&AffinePremap>) -> Self {
        let z: Vec<f64> = match premap {
            Some(p) => samples.rows().flat_map(|r| p.apply(r)).collect(),
            None => samples.as_flat().to_vec(),
        };
        let weights = match samples.weights() {
            Some(w) => {
                let s: f64 = w.iter().sum();
                w.iter().map(|v| v / s).collect()
            }
            None => vec![1.0 / samples.len() as f64; samples.len()],
        };
        Prepared {
            dim: samples.dim(),
            z,
            weights,
        }
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.dim..(i + 1) * self.dim]
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Sum over points of `w [ 0.5 (c(z) - t)^2 - mu log(d_k c(z) / scale) ]`,
/// where `t` is zero for the inverse objective and the regression target
/// otherwise. Returns value, gradient and optionally the Hessian (linear
/// components only). `epsilon` turns small partials into `+inf`.
struct ComponentProblem<'a> {
    data: &'a Prepared,
    targets: Option<&'a [f64]>,
    barrier: f64,
    log_scale: f64,
    epsilon: Option<f64>,
}

impl ComponentProblem<'_> {
    fn evaluate(&self, comp: &MapComponent, hessian: bool) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)> {
        let p = comp.num_coefficients();
        let k = comp.k();
        let scale = self.log_scale.exp();
        let width = 1 + p + if hessian { p * (p + 1) / 2 } else { 0 };
        let acc = chunked_sum(self.data.len(), width, |range, acc| {
            for i in range {
                let z = self.data.row(i);
                let w = self.data.weights[i];
                let ev = comp.evaluate_with_gradients(z);
                let resid = ev.value - self.targets.map_or(0.0, |t| t[i]);
                let mut value = 0.5 * resid * resid;
                let mut inv_partial = 0.0;
                if self.barrier > 0.0 {
                    let partial = ev.partial / scale;
                    match self.epsilon {
                        Some(eps) if !(partial > eps) => {
                            acc[0] = f64::INFINITY;
                            return Ok(());
                        }
                        None if !(partial > 0.0) => {
                            return Err(TrimapError::NonMonotoneAtPoint {
                                component: k,
                                point: z[..k].to_vec(),
                                partial,
                            })
                        }
                        _ => {}
                    }
                    value -= self.barrier * partial.ln();
                    inv_partial = 1.0 / ev.partial;
                }
                acc[0] += w * value;
                let (grad, rest) = acc[1..].split_at_mut(p);
                for j in 0..p {
                    grad[j] += w * (resid * ev.d_value[j] - self.barrier * ev.d_partial[j] * inv_partial);
                }
                if hessian {
                    let bw = w * self.barrier * inv_partial * inv_partial;
                    let mut pos = 0;
                    for a in 0..p {
                        let (va, pa) = (w * ev.d_value[a], bw * ev.d_partial[a]);
                        for b in a..p {
                            rest[pos] += va * ev.d_value[b] + pa * ev.d_partial[b];
                            pos += 1;
                        }
                    }
                }
            }
            Ok(())
        })?;
        let hess = hessian.then(|| {
            let packed = &acc[1 + p..];
            let mut h = vec![0.0; p * p];
            let mut pos = 0;
            for a in 0..p {
                for b in a..p {
                    h[a * p + b] = packed[pos];
                    h[b * p + a] = packed[pos];
                    pos += 1;
                }
            }
            h
        });
        Ok((acc[0], acc[1..1 + p].to_vec(), hess))
    }

    fn minimize(&self, start: &MapComponent, opts: &OptimizerOptions) -> Result<(MapComponent, OptimResult)> {
        let mut work = start.clone();
        let linear = start.parameterization().is_linear_in_coefficients();
        let result = if linear && start.num_coefficients() <= NEWTON_MAX_COEFFICIENTS {
            newton(
                |c, h| {
                    work.set_coefficients(c)?;
                    self.evaluate(&work, h)
                },
                start.coefficients(),
                opts,
            )?
        } else {
            lbfgs(
                |c| {
                    work.set_coefficients(c)?;
                    let (v, g, _) = self.evaluate(&work, false)?;
                    Ok((v, g))
                },
                start.coefficients(),
                opts,
            )?
        };
        Ok((start.with_coefficients(&result.x)?, result))
    }
}

/// `(1/M) sum_i 0.5 S^k(y_i)^2 - log d_k S^k(y_i)` for component `k` of
/// `map` and its coefficient gradient. Uses the map's pre-map and the
/// sample weights when present.
pub fn inverse_component_objective(map: &TriangularMap, k: usize, samples: &SampleSet) -> Result<(f64, Vec<f64>)> {
    check_samples(map.dim(), samples)?;
    if k == 0 || k > map.dim() {
        return Err(TrimapError::InvalidArgument(format!("component {k} outside 1..={}", map.dim())));
    }
    let data = Prepared::new(samples, map.premap());
    let problem = ComponentProblem {
        data: &data,
        targets: None,
        barrier: 1.0,
        log_scale: map.input_scale(k).ln(),
        epsilon: None,
    };
    let (v, g, _) = problem.evaluate(map.component(k), false)?;
    Ok((v, g))
}

fn check_samples(n: usize, samples: &SampleSet) -> Result<()> {
    if samples.dim() != n {
        return Err(TrimapError::DimensionMismatch {
            expected: n,
            found: samples.dim(),
        });
    }
    Ok(())
}

/// Outcome of fitting one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFit {
    pub component: MapComponent,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub violations: usize,
}

fn fit_inverse_component(
    k: usize,
    data: &Prepared,
    premap: Option<&AffinePremap>,
    config: &InverseBuildConfig,
) -> Result<ComponentFit> {
    let n = data.dim;
    let training = matches!(config.template.kind, ComponentKind::Rbf(_)).then(|| data.rows());
    let param = config.template.parameterization(k, n, training.as_deref())?;
    let start = MapComponent::identity(k, param)?;
    let p = start.num_coefficients();
    if data.len() < p {
        log::warn!("component {k}: {} samples for {p} coefficients; the fit is rank deficient", data.len());
    }
    let monotone = start.parameterization().is_monotone_by_construction();
    let problem = ComponentProblem {
        data,
        targets: None,
        barrier: 1.0,
        log_scale: premap.map_or(0.0, |p| p.scale()[k - 1].ln()),
        epsilon: (!monotone).then_some(POINTWISE_EPSILON),
    };
    let (component, result) = problem.minimize(&start, &config.optimizer)?;
    if !result.converged {
        log::warn!(
            "component {k} stopped after {} iterations, gradient norm {:.3e}",
            result.iterations,
            result.gradient_norm
        );
    }
    let violations = (0..data.len()).filter(|&i| !(component.partial(data.row(i)) > 0.0)).count();
    Ok(ComponentFit {
        component,
        objective: result.value,
        gradient_norm: result.gradient_norm,
        iterations: result.iterations,
        converged: result.converged,
        violations,
    })
}

fn prepare(samples: &SampleSet, config: &InverseBuildConfig) -> Result<(Option<AffinePremap>, Prepared)> {
    if samples.is_empty() {
        return Err(TrimapError::InvalidArgument("no samples".into()));
    }
    let premap = if config.standardize {
        Some(standardizing_premap(samples)?)
    } else {
        None
    };
    let data = Prepared::new(samples, premap.as_ref());
    Ok((premap, data))
}

/// Fits component `k` alone. Gives exactly the component that
/// [`build_inverse`] produces for the same samples and configuration.
pub fn build_inverse_component(samples: &SampleSet, k: usize, config: &InverseBuildConfig) -> Result<ComponentFit> {
    if k == 0 || k > samples.dim() {
        return Err(TrimapError::InvalidArgument(format!(
            "component {k} outside 1..={}",
            samples.dim()
        )));
    }
    let (premap, data) = prepare(samples, config)?;
    fit_inverse_component(k, &data, premap.as_ref(), config)
}

/// Fits all components of an inverse map in parallel. Components that fail
/// to converge are flagged in the report; the others are unaffected.
pub fn build_inverse(samples: &SampleSet, config: &InverseBuildConfig) -> Result<(TriangularMap, OptimizationReport)> {
    let (premap, data) = prepare(samples, config)?;
    let fits: Vec<ComponentFit> = (1..=samples.dim())
        .into_par_iter()
        .map(|k| fit_inverse_component(k, &data, premap.as_ref(), config))
        .collect::<Result<_>>()?;
    let report = combine_reports(&fits, samples.len());
    let map = TriangularMap::new(
        Direction::Inverse,
        fits.into_iter().map(|f| f.component).collect(),
        premap,
    )?;
    Ok((map, report))
}

fn combine_reports(fits: &[ComponentFit], nodes: usize) -> OptimizationReport {
    let unconverged: Vec<usize> = fits.iter().filter(|f| !f.converged).map(|f| f.component.k()).collect();
    OptimizationReport {
        objective: fits.iter().map(|f| f.objective).sum(),
        gradient_norm: fits.iter().map(|f| f.gradient_norm * f.gradient_norm).sum::<f64>().sqrt(),
        iterations: fits.iter().map(|f| f.iterations).max().unwrap_or(0),
        converged: unconverged.is_empty(),
        unconverged_components: unconverged,
        trace: Vec::new(),
        kl_variance: None,
        log_normalizing_constant: None,
        violations: fits.iter().map(|f| f.violations).sum(),
        nodes,
    }
}

/// `(1/M) sum_i 0.5 (T^k(x_i) - y_i)^2` for one component evaluated directly
/// on `inputs` (no pre-map), with its coefficient gradient.
pub fn regression_objective(component: &MapComponent, inputs: &SampleSet, targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if targets.len() != inputs.len() {
        return Err(TrimapError::DimensionMismatch {
            expected: inputs.len(),
            found: targets.len(),
        });
    }
    let data = Prepared::new(inputs, None);
    let problem = ComponentProblem {
        data: &data,
        targets: Some(targets),
        barrier: 0.0,
        log_scale: 0.0,
        epsilon: None,
    };
    let (v, g, _) = problem.evaluate(component, false)?;
    Ok((v, g))
}

/// Fits a direct map `T` with `T(x_i) ~ y_i` component by component by least
/// squares. `inputs` are reference-side points (typically `S(y_i)`).
///
/// Linear templates are solved from the normal equations, with a ridge on
/// near-singular systems. When that solution is not increasing at every
/// input a small log barrier on the diagonal partials is added and the
/// problem re-solved from the identity.
pub fn regress_direct_from_pairs(
    inputs: &SampleSet,
    outputs: &SampleSet,
    template: &MapTemplate,
    opts: &OptimizerOptions,
) -> Result<(TriangularMap, OptimizationReport)> {
    check_samples(inputs.dim(), outputs)?;
    if inputs.len() != outputs.len() {
        return Err(TrimapError::DimensionMismatch {
            expected: inputs.len(),
            found: outputs.len(),
        });
    }
    let n = inputs.dim();
    let data = Prepared::new(inputs, None);
    let fits: Vec<ComponentFit> = (1..=n)
        .into_par_iter()
        .map(|k| {
            let targets = outputs.column(k - 1);
            regress_component(k, &data, &targets, template, opts)
        })
        .collect::<Result<_>>()?;
    let report = combine_reports(&fits, inputs.len());
    let map = TriangularMap::new(Direction::Direct, fits.into_iter().map(|f| f.component).collect(), None)?;
    Ok((map, report))
}

fn regress_component(
    k: usize,
    data: &Prepared,
    targets: &[f64],
    template: &MapTemplate,
    opts: &OptimizerOptions,
) -> Result<ComponentFit> {
    let training = matches!(template.kind, ComponentKind::Rbf(_)).then(|| data.rows());
    let param = template.parameterization(k, data.dim, training.as_deref())?;
    let start = MapComponent::identity(k, param)?;
    let increasing = |c: &MapComponent| (0..data.len()).all(|i| c.partial(data.row(i)) > POINTWISE_EPSILON);
    let plain = ComponentProblem {
        data,
        targets: Some(targets),
        barrier: 0.0,
        log_scale: 0.0,
        epsilon: None,
    };

    let fitted = if start.parameterization().is_linear_in_coefficients() {
        let ls = least_squares(&start, data, targets)?;
        if increasing(&ls) {
            ls
        } else {
            log::warn!("component {k}: least-squares fit is not increasing at the inputs; adding a barrier");
            let var = moments(targets).variance.max(f64::MIN_POSITIVE);
            // Barrier continuation down to the final weight.
            let mut current = feasible_blend(&start, &ls, data)?;
            let mut mu = BARRIER_START * var;
            loop {
                let barrier = ComponentProblem {
                    barrier: mu,
                    epsilon: Some(0.0),
                    ..plain
                };
                let (c, r) = barrier.minimize(&current, opts)?;
                if !r.converged {
                    log::debug!("component {k}: barrier stage mu={mu:e} stopped after {} iterations", r.iterations);
                }
                current = c;
                if mu <= BARRIER_END * var * 1.0001 {
                    break;
                }
                mu = (mu * 0.1).max(BARRIER_END * var);
            }
            current
        }
    } else {
        plain.minimize(&start, opts)?.0
    };
    let (value, grad, _) = plain.evaluate(&fitted, false)?;
    let gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let violations = (0..data.len()).filter(|&i| !(fitted.partial(data.row(i)) > 0.0)).count();
    Ok(ComponentFit {
        component: fitted,
        objective: value,
        gradient_norm,
        iterations: 0,
        converged: true,
        violations,
    })
}

const BARRIER_START: f64 = 1e-3;
const BARRIER_END: f64 = 1e-8;

/// Point on the segment from the increasing `start` towards `target` that
/// keeps every partial above the pointwise threshold. Partials are linear in
/// the coefficients, so the admissible fraction is found in closed form.
fn feasible_blend(start: &MapComponent, target: &MapComponent, data: &Prepared) -> Result<MapComponent> {
    let mut t: f64 = 1.0;
    for i in 0..data.len() {
        let z = data.row(i);
        let (p0, p1) = (start.partial(z), target.partial(z));
        if p1 < p0 {
            t = t.min((p0 - 2.0 * POINTWISE_EPSILON) / (p0 - p1));
        }
    }
    let t = 0.99 * t.clamp(0.0, 1.0);
    let blended: Vec<f64> = start
        .coefficients()
        .iter()
        .zip(target.coefficients())
        .map(|(a, b)| a + t * (b - a))
        .collect();
    start.with_coefficients(&blended)
}

/// Normal equations with one step of iterative refinement.
fn least_squares(start: &MapComponent, data: &Prepared, targets: &[f64]) -> Result<MapComponent> {
    let p = start.num_coefficients();
    let gram_rhs = |comp: &MapComponent| {
        chunked_sum(data.len(), p * p + p, |range, acc| {
            for i in range {
                let ev = comp.evaluate_with_gradients(data.row(i));
                let r = targets[i] - ev.value;
                let (gram, rhs) = acc.split_at_mut(p * p);
                for a in 0..p {
                    rhs[a] += ev.d_value[a] * r;
                    for b in 0..p {
                        gram[a * p + b] += ev.d_value[a] * ev.d_value[b];
                    }
                }
            }
            Ok(())
        })
    };
    let zero = start.with_coefficients(&vec![0.0; p])?;
    let acc = gram_rhs(&zero)?;
    let gram = DMatrix::from_row_slice(p, p, &acc[..p * p]);
    let trace: f64 = (0..p).map(|i| gram[(i, i)]).sum();
    let gram = match gram.clone().cholesky() {
        Some(ch) if min_pivot_ratio(&ch.l()) > 1e-7 => gram,
        _ => {
            log::warn!("component {}: near-singular design; adding a ridge", start.k());
            let mut g = gram;
            for i in 0..p {
                g[(i, i)] += 1e-10 * trace / p as f64;
            }
            g
        }
    };
    let solve = |rhs: &[f64]| {
        solve_spd(&gram, &DVector::from_column_slice(rhs))
            .ok_or_else(|| TrimapError::NonConvergence("least-squares system is singular".into()))
    };
    let c = solve(&acc[p * p..])?;
    let first = start.with_coefficients(c.as_slice())?;
    let refine = gram_rhs(&first)?;
    let dc = solve(&refine[p * p..])?;
    let refined: Vec<f64> = c.iter().zip(dc.iter()).map(|(a, b)| a + b).collect();
    start.with_coefficients(&refined)
}

fn min_pivot_ratio(l: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let max = d.iter().cloned().fold(0.0, f64::max);
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    min / max
}

/// Per-coordinate and pairwise statistics of a sample that should be
/// standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianityReport {
    pub samples: usize,
    pub threshold: f64,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub skewness: Vec<f64>,
    /// Excess kurtosis.
    pub excess_kurtosis: Vec<f64>,
    pub mean_z: Vec<f64>,
    pub variance_z: Vec<f64>,
    pub skewness_z: Vec<f64>,
    pub kurtosis_z: Vec<f64>,
    /// `(i, j, r, z)` for every pair `i < j` (0-based), `z` from the Fisher
    /// transform.
    pub correlations: Vec<(usize, usize, f64, f64)>,
    /// `sup |F_M - Phi|` per coordinate.
    pub ks_distance: Vec<f64>,
    pub passed: bool,
}

/// `sqrt(M) * KS` above this rejects at roughly the 0.1% level.
pub const KS_CRITICAL: f64 = 1.95;

/// Tests pushed-forward samples for standard normality. Passes when every
/// z-score is within `threshold` and every scaled KS distance is below
/// [`KS_CRITICAL`].
pub fn gaussianity_check(samples: &SampleSet, threshold: f64) -> GaussianityReport {
    let m = samples.len();
    if m < 100 {
        log::warn!("Gaussianity check on only {m} samples");
    }
    let mf = m as f64;
    let cols: Vec<Vec<f64>> = (0..samples.dim()).map(|j| samples.column(j)).collect();
    let mom: Vec<_> = cols.iter().map(|c| moments(c)).collect();
    let means: Vec<f64> = mom.iter().map(|s| s.mean).collect();
    let variances: Vec<f64> = mom.iter().map(|s| s.variance).collect();
    let skewness: Vec<f64> = mom.iter().map(|s| s.skewness).collect();
    let excess_kurtosis: Vec<f64> = mom.iter().map(|s| s.kurtosis - 3.0).collect();
    let mean_z: Vec<f64> = means.iter().map(|v| v * mf.sqrt()).collect();
    let variance_z: Vec<f64> = variances.iter().map(|v| (v - 1.0) / (2.0 / mf).sqrt()).collect();
    let skewness_z: Vec<f64> = skewness.iter().map(|v| v / (6.0 / mf).sqrt()).collect();
    let kurtosis_z: Vec<f64> = excess_kurtosis.iter().map(|v| v / (24.0 / mf).sqrt()).collect();
    let mut correlations = Vec::new();
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let r = correlation(&cols[i], &cols[j]);
            let z = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh() * (mf - 3.0).max(1.0).sqrt();
            correlations.push((i, j, r, z));
        }
    }
    let ks_distance: Vec<f64> = cols.iter().map(|c| ks_distance_normal(c)).collect();
    let all_z = mean_z
        .iter()
        .chain(&variance_z)
        .chain(&skewness_z)
        .chain(&kurtosis_z)
        .chain(correlations.iter().map(|c| &c.3));
    let passed = all_z.clone().all(|z| z.abs() <= threshold) && ks_distance.iter().all(|d| mf.sqrt() * d <= KS_CRITICAL);
    GaussianityReport {
        samples: m,
        threshold,
        means,
        variances,
        skewness,
        excess_kurtosis,
        mean_z,
        variance_z,
        skewness_z,
        kurtosis_z,
        correlations,
        ks_distance,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{sample_reference, Provenance};

    fn rows1(v: &[f64]) -> SampleSet {
        SampleSet::new(1, v.to_vec(), Provenance::Target).unwrap()
    }

    #[test]
    fn two_point_objective_closed_form() {
        let samples = rows1(&[-1.0, 1.0]);
        let mut map = TriangularMap::identity(1, Direction::Inverse, &MapTemplate::total_order(1)).unwrap();
        for (a, b) in [(0.0, 1.0), (0.3, 2.0), (-1.0, 0.5)] {
            map.set_params(&[a, b]).unwrap();
            let (v, g) = inverse_component_objective(&map, 1, &samples).unwrap();
            assert!((v - (0.5 * (a * a + b * b) - f64::ln(b))).abs() < 1e-14);
            assert!((g[0] - a).abs() < 1e-14 && (g[1] - (b - 1.0 / b)).abs() < 1e-14);
        }
        map.set_params(&[0.0, -1.0]).unwrap();
        assert!(inverse_component_objective(&map, 1, &samples).is_err());
    }

    #[test]
    fn standardization_law() {
        let base = sample_reference(2000, 1, 5).unwrap();
        let y: Vec<f64> = base.as_flat().iter().map(|v| 3.0 + 0.5 * v).collect();
        let samples = rows1(&y);
        let config = InverseBuildConfig {
            standardize: false,
            ..InverseBuildConfig::new(MapTemplate::total_order(1))
        };
        let (map, report) = build_inverse(&samples, &config).unwrap();
        assert!(report.converged);
        let m = moments(&y);
        for t in [-1.0, 2.0, 4.5] {
            let want = (t - m.mean) / m.variance.sqrt();
            assert!((map.evaluate(&[t]).unwrap()[0] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn regression_recovers_polynomials_exactly() {
        let x = sample_reference(500, 2, 8).unwrap();
        let y: Vec<Vec<f64>> = x
            .rows()
            .map(|r| vec![1.0 + 2.0 * r[0], r[0] * r[0] + 0.5 * r[1] + 0.1 * r[1] * r[1] * r[1]])
            .collect();
        let out = SampleSet::from_rows(&y, Provenance::Target).unwrap();
        let (t, _) = regress_direct_from_pairs(&x, &out, &MapTemplate::total_order(3), &OptimizerOptions::default()).unwrap();
        let mut ms = 0.0;
        for (xi, yi) in x.rows().zip(&y) {
            let ti = t.evaluate(xi).unwrap();
            ms += (ti[0] - yi[0]).powi(2) + (ti[1] - yi[1]).powi(2);
        }
        assert!(ms / 500.0 < 1e-20, "{ms}");
    }

    #[test]
    fn gaussianity_detects_shift_and_correlation() {
        let x = sample_reference(10_000, 2, 1).unwrap();
        assert!(gaussianity_check(&x, 4.0).passed);
        let shifted: Vec<Vec<f64>> = x.rows().map(|r| vec![r[0] + 1.0, r[1]]).collect();
        let r = gaussianity_check(&SampleSet::from_rows(&shifted, Provenance::Pushforward).unwrap(), 4.0);
        assert!(!r.passed && (r.mean_z[0] - 100.0).abs() < 5.0);
        let rho: f64 = 0.5;
        let corr: Vec<Vec<f64>> = x
            .rows()
            .map(|r| vec![r[0], rho * r[0] + (1.0 - rho * rho).sqrt() * r[1]])
            .collect();
        let r = gaussianity_check(&SampleSet::from_rows(&corr, Provenance::Pushforward).unwrap(), 4.0);
        assert!(!r.passed && (r.correlations[0].3 - 0.5493 * 99.985).abs() < 5.0);
    }
}
