//! Monotone lower-triangular maps.
//!
//! Component `k` (1-based) of a map reads only the first `k` inputs. Inputs
//! first pass through an optional diagonal affine pre-map
//! `z_i = (x_i - shift_i) / scale_i`, after which each component is evaluated
//! on `z`.

use crate::basis::{gaussian_rbf, gaussian_rbf_partial, hermite_all, HermiteTable, IndexSetKind, MultiIndexSet};
use crate::error::{Result, TrimapError};
use crate::quadrature::gauss_legendre;

/// Default Gauss-Legendre order for the inner integral of monotone components.
pub const DEFAULT_QUAD_ORDER: usize = 32;

/// Which way a map transports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Reference to target (`T`).
    Direct,
    /// Target to reference (`S`).
    Inverse,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Direct => "direct",
            Direction::Inverse => "inverse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Direction::Direct),
            "inverse" => Ok(Direction::Inverse),
            other => Err(TrimapError::InvalidArgument(format!("unknown direction `{other}`"))),
        }
    }
}

/// How one component is parameterized.
#[derive(Debug, Clone, PartialEq)]
pub enum Parameterization {
    /// `T^k(x) = sum_j c_j psi_j(x)`.
    Polynomial(MultiIndexSet),
    /// `T^k(x) = a_0 + sum_{j<=k} a_j x_j + sum_l b_l phi_l(x)`, with isotropic
    /// Gaussian kernels `phi_l` centered in `R^k`.
    LinearPlusRbf { centers: Vec<Vec<f64>>, scales: Vec<f64> },
    /// `T^k(x) = a(x_{<k}) + int_0^{x_k} exp(b(x_{<k}, w)) dw`.
    IntegratedExponential(MonotoneParts),
}

/// Expansions and inner quadrature of an integrated-exponential component.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneParts {
    pub a_set: MultiIndexSet,
    pub b_set: MultiIndexSet,
    quad_order: usize,
    // Gauss-Legendre nodes and weights mapped to [0, 1].
    unit_nodes: Vec<f64>,
    unit_weights: Vec<f64>,
}

impl MonotoneParts {
    pub fn new(a_set: MultiIndexSet, b_set: MultiIndexSet, quad_order: usize) -> Result<Self> {
        if quad_order == 0 {
            return Err(TrimapError::InvalidArgument(
                "quadrature order must be at least 1".into(),
            ));
        }
        let (x, w) = gauss_legendre(quad_order)?;
        Ok(MonotoneParts {
            a_set,
            b_set,
            quad_order,
            unit_nodes: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
            unit_weights: w.iter().map(|w| 0.5 * w).collect(),
        })
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }
}

impl Parameterization {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Parameterization::Polynomial(_) => "polynomial",
            Parameterization::LinearPlusRbf { .. } => "rbf",
            Parameterization::IntegratedExponential(_) => "monotone",
        }
    }

    /// Whether the component is increasing in its last input for every
    /// coefficient vector.
    pub fn is_monotone_by_construction(&self) -> bool {
        matches!(self, Parameterization::IntegratedExponential(_))
    }

    /// Whether the component is linear in its coefficients.
    pub fn is_linear_in_coefficients(&self) -> bool {
        !self.is_monotone_by_construction()
    }
}

/// Value, last-input partial and their coefficient gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentEval {
    pub value: f64,
    pub partial: f64,
    pub d_value: Vec<f64>,
    pub d_partial: Vec<f64>,
}

/// One output dimension of a triangular map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapComponent {
    k: usize,
    param: Parameterization,
    coeffs: Vec<f64>,
}

impl MapComponent {
    /// Component `k` (1-based, reads `k` inputs).
    pub fn new(k: usize, param: Parameterization, coeffs: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(TrimapError::InvalidArgument("component index is 1-based".into()));
        }
        match &param {
            Parameterization::Polynomial(set) => {
                if set.indices().iter().any(|i| i.active_len() > k) {
                    return Err(TrimapError::InvalidArgument(format!(
                        "multi-index set reads beyond input {k}"
                    )));
                }
            }
            Parameterization::LinearPlusRbf { centers, scales } => {
                if centers.len() != scales.len() {
                    return Err(TrimapError::InvalidArgument(
                        "one scale per RBF center is required".into(),
                    ));
                }
                if centers.iter().any(|c| c.len() != k) {
                    return Err(TrimapError::InvalidArgument(format!(
                        "RBF centers of component {k} must lie in R^{k}"
                    )));
                }
                if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return Err(TrimapError::InvalidArgument("RBF scales must be positive".into()));
                }
            }
            Parameterization::IntegratedExponential(parts) => {
                if parts.a_set.indices().iter().any(|i| i.active_len() > k - 1) {
                    return Err(TrimapError::InvalidArgument(format!(
                        "a-expansion of component {k} may only read the first {} inputs",
                        k - 1
                    )));
                }
                if parts.b_set.indices().iter().any(|i| i.active_len() > k) {
                    return Err(TrimapError::InvalidArgument(format!(
                        "b-expansion reads beyond input {k}"
                    )));
                }
            }
        }
        let expected = dof(k, &param);
        if coeffs.len() != expected {
            return Err(TrimapError::DimensionMismatch {
                expected,
                found: coeffs.len(),
            });
        }
        Ok(MapComponent { k, param, coeffs })
    }

    /// Component equal to `x_k` (after the pre-map).
    pub fn identity(k: usize, param: Parameterization) -> Result<Self> {
        let n = dof(k, &param);
        let mut coeffs = vec![0.0; n];
        match &param {
            Parameterization::Polynomial(set) => {
                let e_k = crate::basis::MultiIndex::unit(set.dim(), k - 1);
                let pos = set.position(&e_k).ok_or_else(|| {
                    TrimapError::InvalidArgument("multi-index set lacks the unit index e_k".into())
                })?;
                coeffs[pos] = 1.0;
            }
            Parameterization::LinearPlusRbf { .. } => coeffs[k] = 1.0,
            Parameterization::IntegratedExponential(_) => {}
        }
        MapComponent::new(k, param, coeffs)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn parameterization(&self) -> &Parameterization {
        &self.param
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn num_coefficients(&self) -> usize {
        self.coeffs.len()
    }

    pub fn set_coefficients(&mut self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.coeffs.len() {
            return Err(TrimapError::DimensionMismatch {
                expected: self.coeffs.len(),
                found: coeffs.len(),
            });
        }
        self.coeffs.copy_from_slice(coeffs);
        Ok(())
    }

    pub fn with_coefficients(&self, coeffs: &[f64]) -> Result<Self> {
        let mut c = self.clone();
        c.set_coefficients(coeffs)?;
        Ok(c)
    }

    /// `T^k(z)`.
    pub fn value(&self, z: &[f64]) -> f64 {
        match &self.param {
            Parameterization::Polynomial(set) => {
                let table = HermiteTable::new(&z[..self.k], set.highest_entry());
                set.indices()
                    .iter()
                    .zip(&self.coeffs)
                    .map(|(idx, c)| c * psi(&table, &idx.0[..self.k]))
                    .sum()
            }
            Parameterization::LinearPlusRbf { centers, scales } => {
                let k = self.k;
                let lin: f64 = self.coeffs[1..=k].iter().zip(z).map(|(a, x)| a * x).sum();
                let rbf: f64 = self.coeffs[k + 1..]
                    .iter()
                    .zip(centers.iter().zip(scales))
                    .map(|(b, (c, s))| b * gaussian_rbf(z, c, *s))
                    .sum();
                self.coeffs[0] + lin + rbf
            }
            Parameterization::IntegratedExponential(parts) => {
                let ctx = MonotoneContext::new(self.k, parts, &self.coeffs, z);
                ctx.a_value + ctx.integral(parts, |_, _| {})
            }
        }
    }

    /// `d T^k / d z_k`.
    pub fn partial(&self, z: &[f64]) -> f64 {
        match &self.param {
            Parameterization::Polynomial(set) => {
                let table = HermiteTable::new(&z[..self.k], set.highest_entry());
                set.indices()
                    .iter()
                    .zip(&self.coeffs)
                    .map(|(idx, c)| c * psi_partial(&table, &idx.0[..self.k], self.k - 1))
                    .sum()
            }
            Parameterization::LinearPlusRbf { centers, scales } => {
                let k = self.k;
                let rbf: f64 = self.coeffs[k + 1..]
                    .iter()
                    .zip(centers.iter().zip(scales))
                    .map(|(b, (c, s))| b * gaussian_rbf_partial(z, c, *s, k - 1))
                    .sum();
                self.coeffs[k] + rbf
            }
            Parameterization::IntegratedExponential(parts) => {
                let ctx = MonotoneContext::new(self.k, parts, &self.coeffs, z);
                ctx.b_at(parts, z[self.k - 1]).0.exp()
            }
        }
    }

    /// Value, partial and both coefficient gradients in one pass.
    pub fn evaluate_with_gradients(&self, z: &[f64]) -> ComponentEval {
        let k = self.k;
        let n = self.coeffs.len();
        let mut d_value = vec![0.0; n];
        let mut d_partial = vec![0.0; n];
        match &self.param {
            Parameterization::Polynomial(set) => {
                let table = HermiteTable::new(&z[..k], set.highest_entry());
                let (mut value, mut partial) = (0.0, 0.0);
                for (i, (idx, c)) in set.indices().iter().zip(&self.coeffs).enumerate() {
                    let head: f64 = (0..k - 1).map(|l| table.value(l, idx.0[l])).product();
                    let jk = idx.0[k - 1];
                    let v = head * table.value(k - 1, jk);
                    let p = head * table.deriv(k - 1, jk);
                    d_value[i] = v;
                    d_partial[i] = p;
                    value += c * v;
                    partial += c * p;
                }
                ComponentEval {
                    value,
                    partial,
                    d_value,
                    d_partial,
                }
            }
            Parameterization::LinearPlusRbf { centers, scales } => {
                d_value[0] = 1.0;
                d_value[1..=k].copy_from_slice(&z[..k]);
                d_partial[k] = 1.0;
                for (l, (c, s)) in centers.iter().zip(scales).enumerate() {
                    d_value[k + 1 + l] = gaussian_rbf(z, c, *s);
                    d_partial[k + 1 + l] = gaussian_rbf_partial(z, c, *s, k - 1);
                }
                let value = dot(&self.coeffs, &d_value);
                let partial = dot(&self.coeffs, &d_partial);
                ComponentEval {
                    value,
                    partial,
                    d_value,
                    d_partial,
                }
            }
            Parameterization::IntegratedExponential(parts) => {
                let ctx = MonotoneContext::new(self.k, parts, &self.coeffs, z);
                let na = parts.a_set.len();
                d_value[..na].copy_from_slice(&ctx.a_basis);
                let integral = ctx.integral(parts, |scale, hk| {
                    for (j, idx) in parts.b_set.indices().iter().enumerate() {
                        d_value[na + j] += scale * ctx.b_prefix[j] * hk[idx.0[k - 1]];
                    }
                });
                let (b, hk) = ctx.b_at(parts, z[k - 1]);
                let partial = b.exp();
                for (j, idx) in parts.b_set.indices().iter().enumerate() {
                    d_partial[na + j] = partial * ctx.b_prefix[j] * hk[idx.0[k - 1]];
                }
                ComponentEval {
                    value: ctx.a_value + integral,
                    partial,
                    d_value,
                    d_partial,
                }
            }
        }
    }

    /// `d T^k / d z_j` for `j = 0..k` (0-based), the last entry being the
    /// diagonal partial.
    pub fn input_gradient(&self, z: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut grad = vec![0.0; k];
        match &self.param {
            Parameterization::Polynomial(set) => {
                let table = HermiteTable::new(&z[..k], set.highest_entry());
                for (idx, c) in set.indices().iter().zip(&self.coeffs) {
                    for (j, g) in grad.iter_mut().enumerate() {
                        *g += c * psi_partial(&table, &idx.0[..k], j);
                    }
                }
            }
            Parameterization::LinearPlusRbf { centers, scales } => {
                grad.copy_from_slice(&self.coeffs[1..=k]);
                for (b, (c, s)) in self.coeffs[k + 1..].iter().zip(centers.iter().zip(scales)) {
                    for (j, g) in grad.iter_mut().enumerate() {
                        *g += b * gaussian_rbf_partial(z, c, *s, j);
                    }
                }
            }
            Parameterization::IntegratedExponential(parts) => {
                let na = parts.a_set.len();
                let a_coeffs = &self.coeffs[..na];
                let b_coeffs = &self.coeffs[na..];
                let table = HermiteTable::new(&z[..k], parts.a_set.highest_entry().max(parts.b_set.highest_entry()));
                for (idx, c) in parts.a_set.indices().iter().zip(a_coeffs) {
                    for (j, g) in grad.iter_mut().enumerate().take(k - 1) {
                        *g += c * psi_partial(&table, &idx.0[..k - 1], j);
                    }
                }
                if k > 1 {
                    // d/dz_j of the integral: int exp(b) d_j b dw.
                    let ctx = MonotoneContext::new(k, parts, &self.coeffs, z);
                    let nb = parts.b_set.len();
                    let mut dprefix = vec![0.0; nb * (k - 1)];
                    for (bj, idx) in parts.b_set.indices().iter().enumerate() {
                        for j in 0..k - 1 {
                            dprefix[bj * (k - 1) + j] = psi_partial(&table, &idx.0[..k - 1], j);
                        }
                    }
                    let mut acc = vec![0.0; k - 1];
                    ctx.integral(parts, |scale, hk| {
                        for (bj, (idx, c)) in parts.b_set.indices().iter().zip(b_coeffs).enumerate() {
                            let h = hk[idx.0[k - 1]];
                            for (j, a) in acc.iter_mut().enumerate() {
                                *a += scale * c * dprefix[bj * (k - 1) + j] * h;
                            }
                        }
                    });
                    for (g, a) in grad.iter_mut().zip(acc) {
                        *g += a;
                    }
                }
                grad[k - 1] = self.partial(z);
            }
        }
        grad
    }
}

fn dof(k: usize, param: &Parameterization) -> usize {
    match param {
        Parameterization::Polynomial(set) => set.len(),
        Parameterization::LinearPlusRbf { centers, .. } => 1 + k + centers.len(),
        Parameterization::IntegratedExponential(parts) => parts.a_set.len() + parts.b_set.len(),
    }
}

#[inline]
fn psi(table: &HermiteTable, idx: &[usize]) -> f64 {
    idx.iter().enumerate().map(|(i, &j)| table.value(i, j)).product()
}

#[inline]
fn psi_partial(table: &HermiteTable, idx: &[usize], coord: usize) -> f64 {
    idx.iter()
        .enumerate()
        .map(|(i, &j)| if i == coord { table.deriv(i, j) } else { table.value(i, j) })
        .product()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-point quantities shared by the evaluations of a monotone component.
struct MonotoneContext<'a> {
    k: usize,
    z_k: f64,
    a_value: f64,
    a_basis: Vec<f64>,
    // prod_{i<k-1} He_{j_i}(z_i) for each b multi-index.
    b_prefix: Vec<f64>,
    b_coeffs: &'a [f64],
    b_degree: usize,
}

impl<'a> MonotoneContext<'a> {
    fn new(k: usize, parts: &MonotoneParts, coeffs: &'a [f64], z: &[f64]) -> Self {
        let na = parts.a_set.len();
        let degree = parts.a_set.highest_entry().max(parts.b_set.highest_entry());
        let table = HermiteTable::new(&z[..k - 1], degree);
        let a_basis: Vec<f64> = parts
            .a_set
            .indices()
            .iter()
            .map(|idx| psi(&table, &idx.0[..k - 1]))
            .collect();
        let a_value = dot(&coeffs[..na], &a_basis);
        let b_prefix = parts
            .b_set
            .indices()
            .iter()
            .map(|idx| psi(&table, &idx.0[..k - 1]))
            .collect();
        let b_degree = parts.b_set.indices().iter().map(|i| i.0[k - 1]).max().unwrap_or(0);
        MonotoneContext {
            k,
            z_k: z[k - 1],
            a_value,
            a_basis,
            b_prefix,
            b_coeffs: &coeffs[na..],
            b_degree,
        }
    }

    /// `b(z_{<k}, w)` and the Hermite values `He_m(w)`.
    fn b_at(&self, parts: &MonotoneParts, w: f64) -> (f64, Vec<f64>) {
        let mut hk = vec![0.0; self.b_degree + 1];
        let mut dk = vec![0.0; self.b_degree + 1];
        hermite_all(w, &mut hk, &mut dk);
        let b = parts
            .b_set
            .indices()
            .iter()
            .zip(self.b_coeffs)
            .zip(&self.b_prefix)
            .map(|((idx, c), pre)| c * pre * hk[idx.0[self.k - 1]])
            .sum();
        (b, hk)
    }

    /// `int_0^{z_k} exp(b(w)) dw`, calling `visit(z_k * W_s * exp(b(w_s)), He(w_s))`
    /// at every quadrature node.
    fn integral<F: FnMut(f64, &[f64])>(&self, parts: &MonotoneParts, mut visit: F) -> f64 {
        let mut total = 0.0;
        for (t, w) in parts.unit_nodes.iter().zip(&parts.unit_weights) {
            let (b, hk) = self.b_at(parts, t * self.z_k);
            let scale = self.z_k * w * b.exp();
            total += scale;
            visit(scale, &hk);
        }
        total
    }
}

/// Diagonal affine map `z = (x - shift) / scale` applied before the components.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePremap {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl AffinePremap {
    pub fn new(shift: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if shift.len() != scale.len() {
            return Err(TrimapError::DimensionMismatch {
                expected: shift.len(),
                found: scale.len(),
            });
        }
        if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || shift.iter().any(|s| !s.is_finite()) {
            return Err(TrimapError::InvalidArgument(
                "pre-map needs finite shifts and positive scales".into(),
            ));
        }
        Ok(AffinePremap { shift, scale })
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn unapply(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(z, (m, s))| m + s * z)
            .collect()
    }
}

/// Requested coefficient gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    /// `d T^k / d gamma`.
    Value,
    /// `d log(d_k T^k) / d gamma`.
    LogDiagPartial,
}

/// Lower-triangular map on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularMap {
    dim: usize,
    direction: Direction,
    premap: Option<AffinePremap>,
    components: Vec<MapComponent>,
}

impl TriangularMap {
    pub fn new(direction: Direction, components: Vec<MapComponent>, premap: Option<AffinePremap>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(TrimapError::InvalidArgument("a map needs at least one component".into()));
        }
        for (i, c) in components.iter().enumerate() {
            if c.k() != i + 1 {
                return Err(TrimapError::InvalidArgument(format!(
                    "component at position {} has index {}",
                    i + 1,
                    c.k()
                )));
            }
        }
        let check_set = |s: &MultiIndexSet| -> Result<()> {
            if s.dim() != dim {
                return Err(TrimapError::DimensionMismatch {
                    expected: dim,
                    found: s.dim(),
                });
            }
            Ok(())
        };
        for c in &components {
            match c.parameterization() {
                Parameterization::Polynomial(s) => check_set(s)?,
                Parameterization::IntegratedExponential(p) => {
                    check_set(&p.a_set)?;
                    check_set(&p.b_set)?;
                }
                Parameterization::LinearPlusRbf { .. } => {}
            }
        }
        if let Some(p) = &premap {
            if p.shift.len() != dim {
                return Err(TrimapError::DimensionMismatch {
                    expected: dim,
                    found: p.shift.len(),
                });
            }
        }
        Ok(TriangularMap {
            dim,
            direction,
            premap,
            components,
        })
    }

    /// Identity map built from a template.
    pub fn identity(n: usize, direction: Direction, template: &MapTemplate) -> Result<Self> {
        let components = (1..=n)
            .map(|k| MapComponent::identity(k, template.parameterization(k, n, None)?))
            .collect::<Result<Vec<_>>>()?;
        TriangularMap::new(direction, components, None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn premap(&self) -> Option<&AffinePremap> {
        self.premap.as_ref()
    }

    pub fn set_premap(&mut self, premap: Option<AffinePremap>) -> Result<()> {
        if let Some(p) = &premap {
            if p.shift.len() != self.dim {
                return Err(TrimapError::DimensionMismatch {
                    expected: self.dim,
                    found: p.shift.len(),
                });
            }
        }
        self.premap = premap;
        Ok(())
    }

    pub fn components(&self) -> &[MapComponent] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &MapComponent {
        &self.components[k - 1]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut MapComponent {
        &mut self.components[k - 1]
    }

    pub fn is_monotone_by_construction(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.parameterization().is_monotone_by_construction())
    }

    /// Total number of coefficients over all components.
    pub fn num_params(&self) -> usize {
        self.components.iter().map(|c| c.num_coefficients()).sum()
    }

    /// All coefficients, component by component.
    pub fn params(&self) -> Vec<f64> {
        self.components
            .iter()
            .flat_map(|c| c.coefficients().iter().copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(TrimapError::DimensionMismatch {
                expected: self.num_params(),
                found: params.len(),
            });
        }
        let mut offset = 0;
        for c in &mut self.components {
            let n = c.num_coefficients();
            c.set_coefficients(&params[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }

    /// Offsets of each component's block inside [`TriangularMap::params`].
    pub fn param_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.dim + 1);
        let mut acc = 0;
        offsets.push(0);
        for c in &self.components {
            acc += c.num_coefficients();
            offsets.push(acc);
        }
        offsets
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(TrimapError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(TrimapError::NonFinite { index: i });
        }
        Ok(())
    }

    /// Input after the pre-map.
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        match &self.premap {
            Some(p) => p.apply(x),
            None => x.to_vec(),
        }
    }

    pub(crate) fn input_scale(&self, k: usize) -> f64 {
        self.premap.as_ref().map_or(1.0, |p| p.scale[k - 1])
    }

    /// `T(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let z = self.standardize(x);
        Ok(self.components.iter().map(|c| c.value(&z)).collect())
    }

    /// `(d_k T^k(x))_k`.
    pub fn diag_jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let z = self.standardize(x);
        Ok(self
            .components
            .iter()
            .map(|c| c.partial(&z) / self.input_scale(c.k()))
            .collect())
    }

    /// `sum_k log d_k T^k(x)`; fails if any diagonal partial is not positive.
    pub fn log_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        let diag = self.diag_jacobian(x)?;
        let mut total = 0.0;
        for (k, d) in diag.iter().enumerate() {
            if !(*d > 0.0) {
                return Err(TrimapError::NonMonotoneAtPoint {
                    component: k + 1,
                    point: x.to_vec(),
                    partial: *d,
                });
            }
            total += d.ln();
        }
        Ok(total)
    }

    /// Full lower-triangular Jacobian; row `k` has `k + 1` entries (0-based).
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_point(x)?;
        let z = self.standardize(x);
        Ok(self
            .components
            .iter()
            .map(|c| {
                let mut g = c.input_gradient(&z);
                for (j, v) in g.iter_mut().enumerate() {
                    *v /= self.input_scale(j + 1);
                }
                g
            })
            .collect())
    }

    /// Per-component coefficient gradients at `x`.
    pub fn coefficient_gradient(&self, x: &[f64], which: GradientKind) -> Result<Vec<Vec<f64>>> {
        self.check_point(x)?;
        let z = self.standardize(x);
        self.components
            .iter()
            .map(|c| {
                let ev = c.evaluate_with_gradients(&z);
                match which {
                    GradientKind::Value => Ok(ev.d_value),
                    GradientKind::LogDiagPartial => {
                        if !(ev.partial > 0.0) {
                            return Err(TrimapError::NonMonotoneAtPoint {
                                component: c.k(),
                                point: x.to_vec(),
                                partial: ev.partial / self.input_scale(c.k()),
                            });
                        }
                        Ok(ev.d_partial.iter().map(|d| d / ev.partial).collect())
                    }
                }
            })
            .collect()
    }

    /// Map formed by the first `m` components.
    pub fn head(&self, m: usize) -> Result<TriangularMap> {
        if m == 0 || m > self.dim {
            return Err(TrimapError::InvalidArgument(format!(
                "head size {m} outside 1..={}",
                self.dim
            )));
        }
        let components = self.components[..m]
            .iter()
            .map(|c| {
                let param = match c.parameterization() {
                    Parameterization::Polynomial(s) => Parameterization::Polynomial(truncate_set(s, m)?),
                    Parameterization::IntegratedExponential(p) => Parameterization::IntegratedExponential(
                        MonotoneParts::new(truncate_set(&p.a_set, m)?, truncate_set(&p.b_set, m)?, p.quad_order)?,
                    ),
                    other => other.clone(),
                };
                MapComponent::new(c.k(), param, c.coefficients().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        let premap = match &self.premap {
            Some(p) => Some(AffinePremap::new(p.shift[..m].to_vec(), p.scale[..m].to_vec())?),
            None => None,
        };
        TriangularMap::new(self.direction, components, premap)
    }

    /// Number of `(point, component)` pairs where `d_k T^k <= 0`.
    pub fn monotonicity_violations<'a, I>(&self, points: I) -> usize
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        points
            .into_iter()
            .map(|x| {
                let z = self.standardize(x);
                self.components.iter().filter(|c| !(c.partial(&z) > 0.0)).count()
            })
            .sum()
    }
}

fn truncate_set(s: &MultiIndexSet, m: usize) -> Result<MultiIndexSet> {
    let indices = s
        .indices()
        .iter()
        .map(|i| crate::basis::MultiIndex(i.0[..m].to_vec()))
        .collect();
    MultiIndexSet::from_indices(s.kind(), s.component(), s.max_degree(), m, indices)
}

/// Per-component parameterization family used to build maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentKind {
    /// Hermite expansion over the given multi-index set family.
    Polynomial(IndexSetKind),
    /// Integrated-exponential monotone components: `a` of total degree `p`,
    /// `b` of total degree `p - 1`.
    Monotone,
    /// Linear terms plus this many Gaussian RBFs per component.
    Rbf(usize),
}

impl ComponentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "monotone" => Ok(ComponentKind::Monotone),
            "rbf" => Ok(ComponentKind::Rbf(8)),
            other => IndexSetKind::parse(other).map(ComponentKind::Polynomial),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ComponentKind::Polynomial(k) => k.as_str(),
            ComponentKind::Monotone => "monotone",
            ComponentKind::Rbf(_) => "rbf",
        }
    }
}

/// Recipe for the components of a map of given degree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapTemplate {
    pub kind: ComponentKind,
    pub degree: usize,
    pub quad_order: usize,
}

impl MapTemplate {
    pub fn polynomial(kind: IndexSetKind, degree: usize) -> Self {
        MapTemplate {
            kind: ComponentKind::Polynomial(kind),
            degree,
            quad_order: DEFAULT_QUAD_ORDER,
        }
    }

    pub fn total_order(degree: usize) -> Self {
        Self::polynomial(IndexSetKind::TotalOrder, degree)
    }

    pub fn monotone(degree: usize) -> Self {
        MapTemplate {
            kind: ComponentKind::Monotone,
            degree,
            quad_order: DEFAULT_QUAD_ORDER,
        }
    }

    pub fn rbf(count: usize) -> Self {
        MapTemplate {
            kind: ComponentKind::Rbf(count),
            degree: 1,
            quad_order: DEFAULT_QUAD_ORDER,
        }
    }

    /// Parameterization of component `k` of an `n`-dimensional map. RBF
    /// templates need training points (already pre-mapped) to place centers.
    pub fn parameterization(&self, k: usize, n: usize, training: Option<&[Vec<f64>]>) -> Result<Parameterization> {
        if self.degree == 0 {
            return Err(TrimapError::InvalidArgument("map degree must be at least 1".into()));
        }
        match self.kind {
            ComponentKind::Polynomial(kind) => Ok(Parameterization::Polynomial(MultiIndexSet::new(
                kind,
                k,
                self.degree,
                n,
            )?)),
            ComponentKind::Monotone => {
                let a = MultiIndexSet::build(IndexSetKind::TotalOrder, k - 1, self.degree, n);
                let b = MultiIndexSet::build(IndexSetKind::TotalOrder, k, self.degree - 1, n);
                Ok(Parameterization::IntegratedExponential(MonotoneParts::new(
                    a,
                    b,
                    self.quad_order,
                )?))
            }
            ComponentKind::Rbf(count) => {
                let points = training.ok_or_else(|| {
                    TrimapError::InvalidArgument("RBF templates need training points for their centers".into())
                })?;
                let projected: Vec<Vec<f64>> = points.iter().map(|p| p[..k].to_vec()).collect();
                let (centers, scale) = rbf_centers(&projected, count);
                let scales = vec![scale; centers.len()];
                Ok(Parameterization::LinearPlusRbf { centers, scales })
            }
        }
    }
}

/// Lloyd's k-means with deterministic farthest-point seeding; the common
/// kernel scale is the median pairwise distance between centers.
pub fn rbf_centers(points: &[Vec<f64>], count: usize) -> (Vec<Vec<f64>>, f64) {
    let count = count.min(points.len()).max(1);
    let dist2 = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let mut centers = vec![points[0].clone()];
    while centers.len() < count {
        let far = points
            .iter()
            .max_by(|a, b| {
                let da = centers.iter().map(|c| dist2(a, c)).fold(f64::INFINITY, f64::min);
                let db = centers.iter().map(|c| dist2(b, c)).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .expect("non-empty point set");
        centers.push(far.clone());
    }
    let dim = points[0].len();
    for _ in 0..50 {
        let mut sums = vec![vec![0.0; dim]; count];
        let mut counts = vec![0usize; count];
        for p in points {
            let best = (0..count)
                .min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b])))
                .unwrap();
            counts[best] += 1;
            for (s, x) in sums[best].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut moved = false;
        for c in 0..count {
            if counts[c] > 0 {
                let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                if new != centers[c] {
                    moved = true;
                }
                centers[c] = new;
            }
        }
        if !moved {
            break;
        }
    }
    let mut dists: Vec<f64> = Vec::new();
    for i in 0..count {
        for j in i + 1..count {
            dists.push(dist2(&centers[i], &centers[j]).sqrt());
        }
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    let scale = if dists.is_empty() {
        1.0
    } else {
        dists[dists.len() / 2].max(1e-3)
    };
    (centers, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::MultiIndex;

    fn linear_map(rows: &[&[f64]]) -> TriangularMap {
        // rows[k] = coefficients on (x_1..x_{k+1}) with zero constant.
        let n = rows.len();
        let comps = (1..=n)
            .map(|k| {
                let set = MultiIndexSet::new(IndexSetKind::TotalOrder, k, 1, n).unwrap();
                let mut c = vec![0.0; set.len()];
                for (j, v) in rows[k - 1].iter().enumerate() {
                    c[set.position(&MultiIndex::unit(n, j)).unwrap()] = *v;
                }
                MapComponent::new(k, Parameterization::Polynomial(set), c).unwrap()
            })
            .collect();
        TriangularMap::new(Direction::Direct, comps, None).unwrap()
    }

    #[test]
    fn identity_and_linear_examples() {
        let id = TriangularMap::identity(2, Direction::Direct, &MapTemplate::total_order(1)).unwrap();
        assert_eq!(id.evaluate(&[0.3, -1.2]).unwrap(), vec![0.3, -1.2]);
        assert_eq!(id.log_det_jacobian(&[0.3, -1.2]).unwrap(), 0.0);

        let t = linear_map(&[&[2.0], &[1.0, 3.0]]);
        let y = t.evaluate(&[2.0, 5.0 / 3.0]).unwrap();
        assert!((y[0] - 4.0).abs() < 1e-15 && (y[1] - 7.0).abs() < 1e-14);
        assert!((t.log_det_jacobian(&[0.1, 9.0]).unwrap() - 6f64.ln()).abs() < 1e-14);
        assert!(t.evaluate(&[1.0]).is_err());
        assert!(t.evaluate(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn monotone_identity_examples() {
        let m = TriangularMap::identity(1, Direction::Direct, &MapTemplate::monotone(2)).unwrap();
        assert!((m.evaluate(&[1.5]).unwrap()[0] - 1.5).abs() < 1e-14);
        assert!((m.evaluate(&[-2.5]).unwrap()[0] + 2.5).abs() < 1e-14);
        assert_eq!(m.log_det_jacobian(&[0.7]).unwrap(), 0.0);
    }

    #[test]
    fn non_monotone_is_an_error() {
        let t = linear_map(&[&[-1.0]]);
        match t.log_det_jacobian(&[0.0]) {
            Err(TrimapError::NonMonotoneAtPoint { component, .. }) => assert_eq!(component, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(t.coefficient_gradient(&[0.0], GradientKind::LogDiagPartial).is_err());
    }

    #[test]
    fn polynomial_value_gradient_example() {
        let set = MultiIndexSet::new(IndexSetKind::TotalOrder, 1, 2, 1).unwrap();
        let comp = MapComponent::new(1, Parameterization::Polynomial(set), vec![0.1, 0.2, 0.3]).unwrap();
        let map = TriangularMap::new(Direction::Direct, vec![comp], None).unwrap();
        let g = map.coefficient_gradient(&[2.0], GradientKind::Value).unwrap();
        assert_eq!(g[0], vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn premap_changes_scale_of_partials() {
        let mut id = TriangularMap::identity(2, Direction::Inverse, &MapTemplate::total_order(2)).unwrap();
        id.set_premap(Some(AffinePremap::new(vec![1.0, -1.0], vec![2.0, 4.0]).unwrap()))
            .unwrap();
        assert_eq!(id.evaluate(&[3.0, 3.0]).unwrap(), vec![1.0, 1.0]);
        assert!((id.log_det_jacobian(&[0.0, 0.0]).unwrap() + 8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn head_keeps_leading_components() {
        let t = linear_map(&[&[2.0], &[1.0, 3.0], &[0.5, 0.5, 1.0]]);
        let h = t.head(2).unwrap();
        assert_eq!(h.dim(), 2);
        assert_eq!(h.evaluate(&[1.0, 1.0]).unwrap(), t.evaluate(&[1.0, 1.0, 5.0]).unwrap()[..2].to_vec());
    }

    #[test]
    fn rbf_identity_and_centers() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.7).sin() * 2.0, (i as f64).cos()]).collect();
        let tmpl = MapTemplate::rbf(4);
        let comps = (1..=2)
            .map(|k| MapComponent::identity(k, tmpl.parameterization(k, 2, Some(&pts)).unwrap()).unwrap())
            .collect();
        let map = TriangularMap::new(Direction::Direct, comps, None).unwrap();
        assert_eq!(map.evaluate(&[0.4, 1.1]).unwrap(), vec![0.4, 1.1]);
        assert!(tmpl.parameterization(1, 2, None).is_err());
    }
}
