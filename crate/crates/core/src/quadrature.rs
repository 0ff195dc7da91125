//! Standard-Gaussian reference measure: quadrature rules and reproducible
//! pseudo-random sampling.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Result, TrimapError};

/// Largest admissible tensor grid.
pub const MAX_GRID_NODES: usize = 10_000_000;

/// Nodes and probability weights for integrating against `N(0, I_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds a rule from row-major nodes. Weights are used as given.
    pub fn new(dim: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || nodes.len() != dim * weights.len() || weights.is_empty() {
            return Err(TrimapError::InvalidArgument(format!(
                "quadrature rule with {} weights and {} node values in dimension {dim}",
                weights.len(),
                nodes.len()
            )));
        }
        if let Some(i) = nodes.iter().position(|x| !x.is_finite()) {
            return Err(TrimapError::NonFinite { index: i % dim });
        }
        Ok(QuadratureRule {
            dim,
            nodes,
            weights,
        })
    }

    /// Equal-weight rule over the points of a sample set (Monte Carlo).
    pub fn from_samples(samples: &SampleSet) -> Self {
        let m = samples.len();
        QuadratureRule {
            dim: samples.dim(),
            nodes: samples.as_flat().to_vec(),
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes_flat(&self) -> &[f64] {
        &self.nodes
    }

    /// `sum_i w_i f(x_i)`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(|i| self.weight(i) * f(self.node(i))).sum()
    }
}

/// One-dimensional Gauss-Hermite rule for the standard normal density.
///
/// Nodes come from the eigenvalues of the Jacobi matrix of the probabilists'
/// Hermite recurrence, polished by Newton steps on `He_order`; weights use
/// the closed form `1 / (order * h_{order-1}(x)^2)` with the orthonormal `h_m`.
pub fn gauss_hermite_1d(order: usize) -> Result<QuadratureRule> {
    if !(1..=64).contains(&order) {
        return Err(TrimapError::InvalidArgument(format!(
            "Gauss-Hermite order {order} outside 1..=64"
        )));
    }
    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    let mut weights = Vec::with_capacity(order);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (h, hm1) = orthonormal_hermite_pair(order, *x);
            let dh = (order as f64).sqrt() * hm1;
            if dh != 0.0 {
                *x -= h / dh;
            }
        }
        let (_, hm1) = orthonormal_hermite_pair(order, *x);
        weights.push(1.0 / (order as f64 * hm1 * hm1));
    }
    // Exact symmetry about the origin.
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    QuadratureRule::new(1, nodes, weights)
}

/// `(h_n(x), h_{n-1}(x))` with `h_m = He_m / sqrt(m!)`.
fn orthonormal_hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for m in 0..n {
        let next = (x * cur - (m as f64).sqrt() * prev) / ((m + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(TrimapError::InvalidArgument(
            "Gauss-Legendre order must be at least 1".into(),
        ));
    }
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Full tensor product of a one-dimensional rule.
pub fn tensorize(rule: &QuadratureRule, n: usize) -> Result<QuadratureRule> {
    if rule.dim() != 1 {
        return Err(TrimapError::InvalidArgument(
            "tensorize expects a one-dimensional rule".into(),
        ));
    }
    if n == 0 {
        return Err(TrimapError::InvalidArgument("dimension must be positive".into()));
    }
    let m = rule.len();
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(m).filter(|t| *t <= MAX_GRID_NODES));
    let total = total.ok_or_else(|| {
        TrimapError::InvalidArgument(format!(
            "tensor grid {m}^{n} exceeds the {MAX_GRID_NODES}-node limit"
        ))
    })?;
    let mut nodes = Vec::with_capacity(total * n);
    let mut weights = Vec::with_capacity(total);
    let mut digits = vec![0usize; n];
    for _ in 0..total {
        let mut w = 1.0;
        for &d in &digits {
            nodes.push(rule.node(d)[0]);
            w *= rule.weight(d);
        }
        weights.push(w);
        // Last coordinate varies fastest.
        for pos in (0..n).rev() {
            digits[pos] += 1;
            if digits[pos] < m {
                break;
            }
            digits[pos] = 0;
        }
    }
    QuadratureRule::new(n, nodes, weights)
}

/// Where the points of a [`SampleSet`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Reference,
    Target,
    Pushforward,
    Pullback,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Reference => "reference",
            Provenance::Target => "target",
            Provenance::Pushforward => "pushforward",
            Provenance::Pullback => "pullback",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(Provenance::Reference),
            "target" => Ok(Provenance::Target),
            "pushforward" => Ok(Provenance::Pushforward),
            "pullback" => Ok(Provenance::Pullback),
            other => Err(TrimapError::InvalidArgument(format!("unknown provenance `{other}`"))),
        }
    }
}

/// An `M x n` matrix of points (row-major) with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    points: Vec<f64>,
    provenance: Provenance,
    seed: Option<u64>,
    weights: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn new(dim: usize, points: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(TrimapError::InvalidArgument(format!(
                "sample set needs at least one {dim}-dimensional point, got {} values",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite()) {
            return Err(TrimapError::NonFinite { index: i % dim });
        }
        Ok(SampleSet {
            dim,
            points,
            provenance,
            seed: None,
            weights: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], provenance: Provenance) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(TrimapError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(dim, rows.concat(), provenance)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(TrimapError::DimensionMismatch {
                expected: self.len(),
                found: weights.len(),
            });
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn set_provenance(&mut self, provenance: Provenance) {
        self.provenance = provenance;
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// New sample set holding the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<SampleSet> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.dim) {
            return Err(TrimapError::InvalidArgument(format!(
                "column {bad} out of range for dimension {}",
                self.dim
            )));
        }
        let points = self
            .rows()
            .flat_map(|r| columns.iter().map(move |&c| r[c]))
            .collect();
        let mut out = SampleSet::new(columns.len(), points, self.provenance)?;
        out.seed = self.seed;
        out.weights = self.weights.clone();
        Ok(out)
    }

    /// First `m` points.
    pub fn truncate(&self, m: usize) -> Result<SampleSet> {
        let m = m.min(self.len());
        let mut out = SampleSet::new(self.dim, self.points[..m * self.dim].to_vec(), self.provenance)?;
        out.seed = self.seed;
        Ok(out)
    }
}

/// Counter-based generator for point `index` of the stream identified by `seed`.
pub fn point_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `m` i.i.d. draws from `N(0, I_n)`. Point `i` depends only on `(seed, i)`.
pub fn sample_reference(m: usize, n: usize, seed: u64) -> Result<SampleSet> {
    if m == 0 || n == 0 {
        return Err(TrimapError::InvalidArgument(
            "sample size and dimension must be positive".into(),
        ));
    }
    let mut points = vec![0.0; m * n];
    points.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut rng = point_rng(seed, i as u64);
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    });
    Ok(SampleSet::new(n, points, Provenance::Reference)?.with_seed(seed))
}
