//! Biochemical oxygen demand benchmark.
//!
//! Observations `A (1 - exp(-B t)) + noise` at `t = 1..5` with Gaussian
//! noise of variance `1e-3`. `A` and `B` are uniform on boxes and
//! reparameterized through the standard normal CDF, so the parameters
//! `theta` have a standard normal prior. Joint samples and the joint density
//! put the five data coordinates first, then `theta_1, theta_2`.

use std::f64::consts::{PI, SQRT_2};
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::conditioning::condition;
use crate::direct::{build_direct, DirectBuildConfig, Integration};
use crate::error::Result;
use crate::inverse::{build_inverse, regress_direct_from_pairs, InverseBuildConfig};
use crate::map::{MapTemplate, TriangularMap};
use crate::optim::OptimizerOptions;
use crate::quadrature::{point_rng, Provenance, SampleSet};
use crate::report::OptimizationReport;
use crate::stats::{moments, Moments};
use crate::target::TargetDensity;

pub const TIMES: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];
pub const NOISE_VARIANCE: f64 = 1e-3;
pub const OBSERVED_DATA: [f64; 5] = [0.18, 0.32, 0.42, 0.49, 0.54];
/// Column labels of joint samples.
pub const JOINT_COLUMNS: [&str; 7] = ["d1", "d2", "d3", "d4", "d5", "theta1", "theta2"];

const A_LOW: f64 = 0.4;
const A_HALF_WIDTH: f64 = 0.4;
const B_LOW: f64 = 0.01;
const B_HALF_WIDTH: f64 = 0.15;

/// `(A, B)` from `theta`; strictly increasing in each coordinate and always
/// inside `[0.4, 1.2] x [0.01, 0.31]`.
pub fn prior_transform(theta: &[f64]) -> (f64, f64) {
    (
        A_LOW + A_HALF_WIDTH * (1.0 + libm::erf(theta[0] / SQRT_2)),
        B_LOW + B_HALF_WIDTH * (1.0 + libm::erf(theta[1] / SQRT_2)),
    )
}

fn prior_transform_derivative(theta: &[f64]) -> (f64, f64) {
    let c = (2.0 / PI).sqrt();
    (
        A_HALF_WIDTH * c * (-0.5 * theta[0] * theta[0]).exp(),
        B_HALF_WIDTH * c * (-0.5 * theta[1] * theta[1]).exp(),
    )
}

/// Noise-free observation at time `t`.
pub fn forward(theta: &[f64], t: f64) -> f64 {
    let (a, b) = prior_transform(theta);
    a * (1.0 - (-b * t).exp())
}

/// `M` draws from the joint distribution of data and parameters.
pub fn joint_sample(m: usize, seed: u64) -> Result<SampleSet> {
    let sd = NOISE_VARIANCE.sqrt();
    let flat: Vec<f64> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = point_rng(seed, i as u64);
            let theta: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
            let mut row = [0.0; 7];
            for (j, t) in TIMES.iter().enumerate() {
                let e: f64 = StandardNormal.sample(&mut rng);
                row[j] = forward(&theta, *t) + sd * e;
            }
            row[5] = theta[0];
            row[6] = theta[1];
            row
        })
        .collect();
    Ok(SampleSet::new(7, flat, Provenance::Target)?.with_seed(seed))
}

/// Log-likelihood part shared by the posterior and joint densities and its
/// gradient with respect to `theta`.
fn misfit(theta: &[f64], data: &[f64]) -> (f64, [f64; 2]) {
    let (a, b) = prior_transform(theta);
    let (da, db) = prior_transform_derivative(theta);
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    for (t, d) in TIMES.iter().zip(data) {
        let e = (-b * t).exp();
        let r = d - a * (1.0 - e);
        value -= r * r / (2.0 * NOISE_VARIANCE);
        grad[0] += r / NOISE_VARIANCE * (1.0 - e) * da;
        grad[1] += r / NOISE_VARIANCE * a * t * e * db;
    }
    (value, grad)
}

/// Unnormalized posterior of `theta` given fixed data.
#[derive(Debug, Clone)]
pub struct BodPosterior {
    pub data: [f64; 5],
}

impl Default for BodPosterior {
    fn default() -> Self {
        BodPosterior { data: OBSERVED_DATA }
    }
}

impl TargetDensity for BodPosterior {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        misfit(theta, &self.data).0 - 0.5 * (theta[0] * theta[0] + theta[1] * theta[1])
    }

    fn gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let (_, g) = misfit(theta, &self.data);
        Some(vec![g[0] - theta[0], g[1] - theta[1]])
    }
}

/// Unnormalized joint density of `(d_1..d_5, theta_1, theta_2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BodJoint;

impl TargetDensity for BodJoint {
    fn dim(&self) -> usize {
        7
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        let theta = &y[5..7];
        misfit(theta, &y[..5]).0 - 0.5 * (theta[0] * theta[0] + theta[1] * theta[1])
    }

    fn gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        let theta = &y[5..7];
        let (a, b) = prior_transform(theta);
        let mut g = vec![0.0; 7];
        for (j, t) in TIMES.iter().enumerate() {
            g[j] = -(y[j] - a * (1.0 - (-b * t).exp())) / NOISE_VARIANCE;
        }
        let (_, gt) = misfit(theta, &y[..5]);
        g[5] = gt[0] - theta[0];
        g[6] = gt[1] - theta[1];
        Some(g)
    }
}

/// Moments of `theta_1` and `theta_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub theta1: Moments,
    pub theta2: Moments,
}

impl MomentRow {
    pub fn from_samples(theta: &SampleSet) -> Self {
        MomentRow {
            theta1: moments(&theta.column(0)),
            theta2: moments(&theta.column(1)),
        }
    }

    /// `mean1 mean2 var1 var2 skew1 skew2 kurt1 kurt2`.
    pub fn as_array(&self) -> [f64; 8] {
        let (a, b) = (&self.theta1, &self.theta2);
        [
            a.mean, b.mean, a.variance, b.variance, a.skewness, b.skewness, a.kurtosis, b.kurtosis,
        ]
    }
}

/// Header matching [`MomentRow::as_array`].
pub const MOMENT_COLUMNS: [&str; 8] = [
    "mean_theta1",
    "mean_theta2",
    "var_theta1",
    "var_theta2",
    "skew_theta1",
    "skew_theta2",
    "kurt_theta1",
    "kurt_theta2",
];

/// Conditional samples used for each moment row.
pub const MOMENT_SAMPLES: usize = 30_000;

/// How the conditional is formed from the fitted inverse map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionVia {
    /// Invert the parameter block of the inverse map pointwise.
    InverseMap,
    /// Regress a direct map from `(S(y_i), y_i)` pairs and condition it.
    RegressedDirect,
}

#[derive(Debug, Clone)]
pub struct InverseExperiment {
    pub inverse_map: TriangularMap,
    pub inverse_report: OptimizationReport,
    pub direct_map: Option<TriangularMap>,
    pub conditional: SampleSet,
    pub moments: MomentRow,
    pub build_seconds: f64,
    pub regression_seconds: f64,
    pub online_seconds: f64,
}

/// Fits an inverse map of total degree `p` to `m` joint samples, conditions
/// on the observed data and returns moments of `theta` from
/// [`MOMENT_SAMPLES`] conditional draws.
pub fn run_inverse_experiment(m: usize, p: usize, seed: u64, via: ConditionVia) -> Result<InverseExperiment> {
    let samples = joint_sample(m, seed)?;
    let template = MapTemplate::total_order(p);
    let start = Instant::now();
    let (inverse_map, inverse_report) = build_inverse(&samples, &InverseBuildConfig::new(template))?;
    let build_seconds = start.elapsed().as_secs_f64();
    log::info!("inverse map p={p}, M={m}: {build_seconds:.2} s");

    let start = Instant::now();
    let direct_map = match via {
        ConditionVia::InverseMap => None,
        ConditionVia::RegressedDirect => {
            let mut reference = Vec::with_capacity(samples.len() * 7);
            for y in samples.rows() {
                reference.extend(inverse_map.evaluate(y)?);
            }
            let reference = SampleSet::new(7, reference, Provenance::Pushforward)?;
            let (t, _) = regress_direct_from_pairs(&reference, &samples, &template, &OptimizerOptions::default())?;
            Some(t)
        }
    };
    let regression_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let parent = direct_map.as_ref().unwrap_or(&inverse_map);
    let cond = condition(parent, 5, &OBSERVED_DATA, 1e-12)?;
    let conditional = cond.sample(MOMENT_SAMPLES, seed.wrapping_add(1))?;
    let online_seconds = start.elapsed().as_secs_f64();
    log::info!("conditional sampling: {online_seconds:.2} s");
    Ok(InverseExperiment {
        moments: MomentRow::from_samples(&conditional),
        inverse_map,
        inverse_report,
        direct_map,
        conditional,
        build_seconds,
        regression_seconds,
        online_seconds,
    })
}

#[derive(Debug, Clone)]
pub struct DirectExperiment {
    pub map: TriangularMap,
    pub report: OptimizationReport,
    pub pushforward: SampleSet,
    pub moments: MomentRow,
    pub build_seconds: f64,
}

/// Fits a direct map of total degree `p` to the posterior on a tensor
/// Gauss-Hermite rule of `order` points per dimension.
pub fn run_direct_experiment(p: usize, order: usize, seed: u64) -> Result<DirectExperiment> {
    let target = BodPosterior::default();
    let mut config = DirectBuildConfig::new(MapTemplate::total_order(p), Integration::GaussHermite { order });
    config.optimizer.max_iterations = 2000;
    let start = Instant::now();
    let (map, report) = build_direct(&target, &config)?;
    let build_seconds = start.elapsed().as_secs_f64();
    log::info!("direct map p={p}: {build_seconds:.2} s");
    let x = crate::quadrature::sample_reference(MOMENT_SAMPLES, 2, seed)?;
    let mut pushed = Vec::with_capacity(x.len() * 2);
    for r in x.rows() {
        pushed.extend(map.evaluate(r)?);
    }
    let pushforward = SampleSet::new(2, pushed, Provenance::Pushforward)?.with_seed(seed);
    Ok(DirectExperiment {
        moments: MomentRow::from_samples(&pushforward),
        map,
        report,
        pushforward,
        build_seconds,
    })
}
