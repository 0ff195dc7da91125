//! Univariate and tensorized basis functions.
//!
//! Polynomials are probabilists' Hermite polynomials `He_m`, orthogonal under
//! the standard normal density with `E[He_m^2] = m!`. Coefficients throughout
//! the crate are stored against the unnormalized `He_m`.

use crate::error::{Result, TrimapError};

/// `He_m(x)` via the three-term recurrence `He_{m+1} = x He_m - m He_{m-1}`.
pub fn hermite(degree: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for m in 0..degree {
        let next = x * cur - m as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `He'_m(x) = m He_{m-1}(x)`.
pub fn hermite_derivative(degree: usize, x: f64) -> f64 {
    if degree == 0 {
        0.0
    } else {
        degree as f64 * hermite(degree - 1, x)
    }
}

/// Squared norm `E[He_m(X)^2] = m!` for `X ~ N(0, 1)`.
pub fn hermite_norm_squared(degree: usize) -> f64 {
    (1..=degree).map(|m| m as f64).product()
}

/// Fills `values[m] = He_m(x)` and `derivs[m] = He'_m(x)` for `m = 0..values.len()`.
pub fn hermite_all(x: f64, values: &mut [f64], derivs: &mut [f64]) {
    let len = values.len();
    if len == 0 {
        return;
    }
    values[0] = 1.0;
    derivs[0] = 0.0;
    if len > 1 {
        values[1] = x;
        derivs[1] = 1.0;
    }
    for m in 1..len.saturating_sub(1) {
        values[m + 1] = x * values[m] - m as f64 * values[m - 1];
        derivs[m + 1] = (m + 1) as f64 * values[m];
    }
}

/// Hermite values and derivatives for every coordinate of one point, up to a
/// fixed maximum degree. Row `i` holds coordinate `i`.
#[derive(Debug, Clone)]
pub struct HermiteTable {
    stride: usize,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl HermiteTable {
    pub fn new(x: &[f64], max_degree: usize) -> Self {
        let stride = max_degree + 1;
        let mut table = HermiteTable {
            stride,
            values: vec![0.0; stride * x.len()],
            derivs: vec![0.0; stride * x.len()],
        };
        for (i, &xi) in x.iter().enumerate() {
            table.set_coordinate(i, xi);
        }
        table
    }

    /// Recomputes row `i` for a new coordinate value.
    pub fn set_coordinate(&mut self, i: usize, x: f64) {
        let range = i * self.stride..(i + 1) * self.stride;
        hermite_all(x, &mut self.values[range.clone()], &mut self.derivs[range]);
    }

    #[inline]
    pub fn value(&self, i: usize, degree: usize) -> f64 {
        self.values[i * self.stride + degree]
    }

    #[inline]
    pub fn deriv(&self, i: usize, degree: usize) -> f64 {
        self.derivs[i * self.stride + degree]
    }
}

/// Multi-index `(j_1, ..., j_n)` selecting the tensor-product polynomial
/// `psi_j(x) = prod_i He_{j_i}(x_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zeros(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// Unit index `e_k` (0-based coordinate `k`).
    pub fn unit(n: usize, k: usize) -> Self {
        let mut v = vec![0; n];
        v[k] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    /// Index of the last nonzero entry plus one; the polynomial reads only
    /// that many leading coordinates.
    pub fn active_len(&self) -> usize {
        self.0.iter().rposition(|&j| j > 0).map_or(0, |p| p + 1)
    }
}

/// `psi_j(x)`.
pub fn multivariate_eval(index: &MultiIndex, x: &[f64]) -> Result<f64> {
    if index.dim() != x.len() {
        return Err(TrimapError::DimensionMismatch {
            expected: index.dim(),
            found: x.len(),
        });
    }
    Ok(index
        .0
        .iter()
        .zip(x)
        .map(|(&j, &xi)| hermite(j, xi))
        .product())
}

/// `d psi_j / d x_coord` (0-based `coord`).
pub fn multivariate_partial(index: &MultiIndex, x: &[f64], coord: usize) -> Result<f64> {
    if index.dim() != x.len() {
        return Err(TrimapError::DimensionMismatch {
            expected: index.dim(),
            found: x.len(),
        });
    }
    if coord >= x.len() {
        return Err(TrimapError::InvalidArgument(format!(
            "coordinate {coord} out of range for dimension {}",
            x.len()
        )));
    }
    Ok(index
        .0
        .iter()
        .zip(x)
        .enumerate()
        .map(|(i, (&j, &xi))| {
            if i == coord {
                hermite_derivative(j, xi)
            } else {
                hermite(j, xi)
            }
        })
        .product())
}

/// Restriction defining a multi-index set on top of the total-degree bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexSetKind {
    /// `|j|_1 <= p`.
    TotalOrder,
    /// Total order without mixed terms (`j_i j_l = 0` for `i != l`).
    NoMixed,
    /// Only the last active coordinate may be nonzero.
    Diagonal,
}

impl IndexSetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            IndexSetKind::TotalOrder => "total",
            IndexSetKind::NoMixed => "nomixed",
            IndexSetKind::Diagonal => "diagonal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "total" | "totalorder" | "total-order" => Ok(IndexSetKind::TotalOrder),
            "nomixed" | "no-mixed" => Ok(IndexSetKind::NoMixed),
            "diagonal" => Ok(IndexSetKind::Diagonal),
            other => Err(TrimapError::InvalidArgument(format!(
                "unknown multi-index set kind `{other}`"
            ))),
        }
    }
}

/// Lower-triangular multi-index set for component `k` (1-based) of an
/// `n`-dimensional map, in graded lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiIndexSet {
    kind: IndexSetKind,
    component: usize,
    max_degree: usize,
    dim: usize,
    indices: Vec<MultiIndex>,
}

impl MultiIndexSet {
    /// Builds the set for component `k` in `1..=n` with maximum degree `p >= 1`.
    pub fn new(kind: IndexSetKind, k: usize, p: usize, n: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(TrimapError::InvalidArgument(format!(
                "component index {k} must lie in 1..={n}"
            )));
        }
        if p < 1 {
            return Err(TrimapError::InvalidArgument(
                "maximum degree must be at least 1".into(),
            ));
        }
        Ok(Self::build(kind, k, p, n))
    }

    /// Like [`MultiIndexSet::new`] but also accepts `k = 0` or `p = 0`,
    /// which yield the constant-only set. Used for the pieces of monotone
    /// components.
    pub(crate) fn build(kind: IndexSetKind, k: usize, p: usize, n: usize) -> Self {
        let mut indices = Vec::new();
        let mut current = vec![0usize; n];
        enumerate(&mut current, 0, k, p, &mut indices);
        indices.retain(|idx| admissible(kind, k, idx));
        indices.sort_by(|a, b| a.total_degree().cmp(&b.total_degree()).then(a.cmp(b)));
        MultiIndexSet {
            kind,
            component: k,
            max_degree: p,
            dim: n,
            indices,
        }
    }

    /// Rebuilds a set from explicit rows, e.g. read back from a file.
    pub fn from_indices(
        kind: IndexSetKind,
        component: usize,
        max_degree: usize,
        dim: usize,
        indices: Vec<MultiIndex>,
    ) -> Result<Self> {
        for idx in &indices {
            if idx.dim() != dim {
                return Err(TrimapError::DimensionMismatch {
                    expected: dim,
                    found: idx.dim(),
                });
            }
            if idx.active_len() > component {
                return Err(TrimapError::InvalidArgument(format!(
                    "multi-index {:?} violates lower-triangular structure of component {component}",
                    idx.0
                )));
            }
        }
        Ok(MultiIndexSet {
            kind,
            component,
            max_degree,
            dim,
            indices,
        })
    }

    pub fn kind(&self) -> IndexSetKind {
        self.kind
    }

    pub fn component(&self) -> usize {
        self.component
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn contains(&self, idx: &MultiIndex) -> bool {
        self.indices.contains(idx)
    }

    /// Position of a multi-index inside the set.
    pub fn position(&self, idx: &MultiIndex) -> Option<usize> {
        self.indices.iter().position(|i| i == idx)
    }

    /// Largest single-coordinate degree in the set.
    pub fn highest_entry(&self) -> usize {
        self.indices
            .iter()
            .flat_map(|i| i.0.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

fn enumerate(current: &mut [usize], pos: usize, k: usize, budget: usize, out: &mut Vec<MultiIndex>) {
    if pos == k {
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for d in 0..=budget {
        current[pos] = d;
        enumerate(current, pos + 1, k, budget - d, out);
    }
    current[pos] = 0;
}

fn admissible(kind: IndexSetKind, k: usize, idx: &MultiIndex) -> bool {
    match kind {
        IndexSetKind::TotalOrder => true,
        IndexSetKind::NoMixed => idx.0.iter().filter(|&&j| j > 0).count() <= 1,
        IndexSetKind::Diagonal => idx.0.iter().enumerate().all(|(i, &j)| j == 0 || i + 1 == k),
    }
}

/// Isotropic Gaussian radial basis function `exp(-|x - c|^2 / (2 s^2))` on
/// the first `center.len()` coordinates of `x`.
pub fn gaussian_rbf(x: &[f64], center: &[f64], scale: f64) -> f64 {
    let r2: f64 = center.iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum();
    (-0.5 * r2 / (scale * scale)).exp()
}

/// Partial derivative of [`gaussian_rbf`] with respect to coordinate `coord`.
pub fn gaussian_rbf_partial(x: &[f64], center: &[f64], scale: f64, coord: usize) -> f64 {
    if coord >= center.len() {
        return 0.0;
    }
    -(x[coord] - center[coord]) / (scale * scale) * gaussian_rbf(x, center, scale)
}
