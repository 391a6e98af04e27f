//! Finite-dimensional inner-product spaces with explicit gram forms.
//!
//! Primal elements and dual functionals share one coordinate system: a
//! functional `phi` acts on `x` as `phi^T x`, and the gram matrix converts
//! between the two (`lower` maps primal to dual, `riesz` the other way).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Deserialize;

use crate::error::{check_len, FcError, Result};

/// Default relative tolerance for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

struct SpaceData {
    name: String,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    l: DMatrix<f64>,
    diagonal: bool,
}

/// A coordinate space metrized by a symmetric positive definite gram matrix.
///
/// Cloning is cheap; the Cholesky factor is computed once and shared.
#[derive(Clone)]
pub struct SpaceDescriptor {
    inner: Arc<SpaceData>,
}

impl fmt::Debug for SpaceDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpaceDescriptor")
            .field("name", &self.inner.name)
            .field("dim", &self.dim())
            .field("diagonal", &self.inner.diagonal)
            .finish()
    }
}

impl SpaceDescriptor {
    pub fn new(name: impl Into<String>, gram: DMatrix<f64>) -> Result<Self> {
        let name = name.into();
        let n = gram.nrows();
        if n == 0 || gram.ncols() != n {
            return Err(FcError::Config(format!(
                "gram of space '{name}' must be square and nonempty, got {}x{}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(FcError::Config(format!("gram of space '{name}' has non-finite entries")));
        }
        let scale = gram.amax().max(f64::MIN_POSITIVE);
        let asym = (&gram - gram.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(FcError::Config(format!(
                "gram of space '{name}' is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let sym = (&gram + gram.transpose()) * 0.5;
        let chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| FcError::Config(format!("gram of space '{name}' is not positive definite")))?;
        if chol.l_dirty().diagonal().iter().any(|d| *d <= 0.0 || !d.is_finite()) {
            return Err(FcError::Config(format!("gram of space '{name}' is not positive definite")));
        }
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || sym[(i, j)] == 0.0));
        let l = chol.l();
        Ok(Self {
            inner: Arc::new(SpaceData {
                name,
                gram: sym,
                chol,
                l,
                diagonal,
            }),
        })
    }

    /// Euclidean coordinates.
    pub fn identity(name: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new(name, DMatrix::identity(dim, dim))
    }

    /// Gram `weight * I`, e.g. a uniform quadrature mass.
    pub fn scaled(name: impl Into<String>, dim: usize, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(FcError::Config(format!("gram weight must be positive, got {weight}")));
        }
        Self::new(name, DMatrix::identity(dim, dim) * weight)
    }

    /// Diagonal gram from positive weights.
    pub fn diagonal(name: impl Into<String>, weights: &[f64]) -> Result<Self> {
        Self::new(name, DMatrix::from_diagonal(&DVector::from_column_slice(weights)))
    }

    /// 1-D Dirichlet stiffness form `tridiag(-1, 2, -1) / h`.
    pub fn stiffness1d(name: impl Into<String>, dim: usize, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(FcError::Config(format!("mesh width must be positive, got {h}")));
        }
        Self::new(name, stiffness_matrix(dim, h))
    }

    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(FcError::Config("explicit gram rows must form a square matrix".into()));
        }
        Self::new(name, DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_spec(name: impl Into<String>, dim: usize, spec: &GramSpec) -> Result<Self> {
        match spec {
            GramSpec::Identity => Self::identity(name, dim),
            GramSpec::Stiffness1d(h) => Self::stiffness1d(name, dim, *h),
            GramSpec::Rows(rows) => {
                check_len(dim, rows.len()).map_err(|_| {
                    FcError::Config(format!("explicit gram has {} rows, dim is {dim}", rows.len()))
                })?;
                Self::from_rows(name, rows)
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn dim(&self) -> usize {
        self.inner.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.inner.gram
    }

    pub fn is_diagonal(&self) -> bool {
        self.inner.diagonal
    }

    /// Lower Cholesky factor `L` with `gram = L L^T`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.inner.l
    }

    /// Same descriptor object, or identical dimension and gram.
    pub fn same_as(&self, other: &SpaceDescriptor) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.dim() == other.dim() && self.inner.gram == other.inner.gram)
    }

    pub fn check(&self, x: &DVector<f64>) -> Result<()> {
        check_len(self.dim(), x.len())
    }

    pub fn zeros(&self) -> DVector<f64> {
        DVector::zeros(self.dim())
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        if self.inner.diagonal {
            let g = &self.inner.gram;
            (0..self.dim()).map(|i| g[(i, i)] * x[i] * y[i]).sum()
        } else {
            x.dot(&(&self.inner.gram * y))
        }
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    /// Primal coordinates to dual: `G x`.
    pub fn lower(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.inner.gram * x
    }

    /// Dual coordinates to the representing primal element: `G^{-1} phi`.
    pub fn riesz(&self, phi: &DVector<f64>) -> DVector<f64> {
        self.inner.chol.solve(phi)
    }

    /// `G^{-1} M` column by column.
    pub fn solve_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.chol.solve(m)
    }

    /// Norm of a functional in dual coordinates, `sqrt(phi^T G^{-1} phi)`.
    pub fn dual_norm(&self, phi: &DVector<f64>) -> f64 {
        phi.dot(&self.riesz(phi)).max(0.0).sqrt()
    }

    /// `L^T x`, an isometry onto Euclidean coordinates.
    pub fn to_euclidean(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.l.tr_mul(x)
    }

    /// Inverse of [`Self::to_euclidean`]: solves `L^T x = y`.
    pub fn from_euclidean(&self, y: &DVector<f64>) -> DVector<f64> {
        self.inner
            .l
            .tr_solve_lower_triangular(y)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn element(&self, coords: DVector<f64>) -> Result<Element> {
        Element::new(self.clone(), coords)
    }
}

pub(crate) fn stiffness_matrix(dim: usize, h: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            2.0 / h
        } else if i.abs_diff(j) == 1 {
            -1.0 / h
        } else {
            0.0
        }
    })
}

/// How a gram matrix is given in configuration files.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawGram")]
pub enum GramSpec {
    Identity,
    Stiffness1d(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawGram {
    Name(String),
    Rows(Vec<Vec<f64>>),
}

impl TryFrom<RawGram> for GramSpec {
    type Error = FcError;

    fn try_from(raw: RawGram) -> Result<Self> {
        match raw {
            RawGram::Name(s) => s.parse(),
            RawGram::Rows(r) => Ok(GramSpec::Rows(r)),
        }
    }
}

impl FromStr for GramSpec {
    type Err = FcError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "identity" {
            return Ok(GramSpec::Identity);
        }
        if let Some(arg) = s.strip_prefix("stiffness1d(").and_then(|r| r.strip_suffix(')')) {
            let h: f64 = arg
                .trim()
                .parse()
                .map_err(|_| FcError::Config(format!("bad mesh width in '{s}'")))?;
            return Ok(GramSpec::Stiffness1d(h));
        }
        Err(FcError::Config(format!(
            "unknown gram '{s}' (expected identity, stiffness1d(h) or a row list)"
        )))
    }
}

/// A point of a space, or a functional on it in dual coordinates.
#[derive(Debug, Clone)]
pub struct Element {
    space: SpaceDescriptor,
    coords: DVector<f64>,
}

impl Element {
    pub fn new(space: SpaceDescriptor, coords: DVector<f64>) -> Result<Self> {
        space.check(&coords)?;
        Ok(Self { space, coords })
    }

    pub fn from_slice(space: SpaceDescriptor, coords: &[f64]) -> Result<Self> {
        Self::new(space, DVector::from_column_slice(coords))
    }

    pub fn zeros(space: SpaceDescriptor) -> Self {
        let coords = space.zeros();
        Self { space, coords }
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }
}

/// `|x|` in the gram metric of `space`.
pub fn norm(space: &SpaceDescriptor, x: &Element) -> Result<f64> {
    if !space.same_as(x.space()) {
        return Err(FcError::DimensionMismatch {
            expected: space.dim(),
            found: x.space().dim(),
        });
    }
    Ok(space.norm(x.coords()))
}

/// Dual norm of a functional given in dual coordinates.
pub fn dual_norm(space: &SpaceDescriptor, phi: &Element) -> Result<f64> {
    space.check(phi.coords())?;
    Ok(space.dual_norm(phi.coords()))
}

/// A bounded operator between two gram-metrized spaces.
#[derive(Debug, Clone)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    domain: SpaceDescriptor,
    codomain: SpaceDescriptor,
    compact: bool,
}

/// One singular triplet: `F v = sigma u` with `|u| = |v| = 1` in the gram metrics.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    pub sigma: f64,
    /// Unit vector of the codomain.
    pub left: DVector<f64>,
    /// Unit vector of the domain.
    pub right: DVector<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>, domain: SpaceDescriptor, codomain: SpaceDescriptor) -> Result<Self> {
        check_len(codomain.dim(), matrix.nrows())?;
        check_len(domain.dim(), matrix.ncols())?;
        Ok(Self {
            matrix,
            domain,
            codomain,
            compact: false,
        })
    }

    /// Map between Euclidean coordinate spaces.
    pub fn euclidean(matrix: DMatrix<f64>) -> Result<Self> {
        let domain = SpaceDescriptor::identity("domain", matrix.ncols())?;
        let codomain = SpaceDescriptor::identity("codomain", matrix.nrows())?;
        Self::new(matrix, domain, codomain)
    }

    pub fn with_compact(mut self, compact: bool) -> Self {
        self.compact = compact;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn domain(&self) -> &SpaceDescriptor {
        &self.domain
    }

    pub fn codomain(&self) -> &SpaceDescriptor {
        &self.codomain
    }

    pub fn is_compact(&self) -> bool {
        self.compact
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.domain.check(x)?;
        Ok(&self.matrix * x)
    }

    /// Hilbert adjoint `G_V^{-1} F^T G_X`, so that `(F* y, x)_V = (y, F x)_X`.
    pub fn adjoint(&self) -> LinearMap {
        let ft_gx = self.matrix.transpose() * self.codomain.gram();
        LinearMap {
            matrix: self.domain.solve_matrix(&ft_gx),
            domain: self.codomain.clone(),
            codomain: self.domain.clone(),
            compact: self.compact,
        }
    }

    /// Matrix of the map between Euclidean images of the two spaces,
    /// `L_X^T F L_V^{-T}`.
    pub fn euclidean_matrix(&self) -> DMatrix<f64> {
        let b = self
            .domain
            .factor()
            .solve_lower_triangular(&self.matrix.transpose())
            .expect("cholesky factor has a positive diagonal")
            .transpose();
        self.codomain.factor().tr_mul(&b)
    }

    /// Singular values in the gram geometry, sorted descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let m = self.euclidean_matrix();
        if m.nrows() == 0 || m.ncols() == 0 {
            return Vec::new();
        }
        let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Singular triplets in the gram geometry, sorted by descending sigma.
    pub fn singular_triplets(&self) -> Vec<SingularTriplet> {
        let m = self.euclidean_matrix();
        if m.nrows() == 0 || m.ncols() == 0 {
            return Vec::new();
        }
        let svd = m.svd(true, true);
        let u = svd.u.expect("left vectors requested");
        let vt = svd.v_t.expect("right vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        order
            .into_iter()
            .map(|k| SingularTriplet {
                sigma: svd.singular_values[k],
                left: self.codomain.from_euclidean(&u.column(k).into_owned()),
                right: self.domain.from_euclidean(&vt.row(k).transpose()),
            })
            .collect()
    }

    /// Count of singular values above `tol * sigma_max`.
    pub fn numerical_rank(&self, tol: f64) -> usize {
        rank_of(&self.singular_values(), tol)
    }
}

pub(crate) fn rank_of(sigmas: &[f64], tol: f64) -> usize {
    let smax = sigmas.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    sigmas.iter().filter(|s| **s > tol * smax).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_norm() {
        let s = SpaceDescriptor::identity("R2", 2).unwrap();
        let x = Element::from_slice(s.clone(), &[3.0, 4.0]).unwrap();
        assert_eq!(norm(&s, &x).unwrap(), 5.0);
        assert_eq!(norm(&s, &Element::zeros(s.clone())).unwrap(), 0.0);
    }

    #[test]
    fn stiffness_norm_matches_quadratic_form() {
        let h = 0.25;
        let s = SpaceDescriptor::stiffness1d("H1", 3, h).unwrap();
        let x = Element::from_slice(s.clone(), &[1.0, 0.0, 0.0]).unwrap();
        // x^T K x = K_11 = 2/h
        assert!((norm(&s, &x).unwrap() - (2.0f64 / h).sqrt()).abs() < 1e-15);
        let y = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let direct = (2.0 * 1.0 - 2.0 * (1.0 * -2.0) + 2.0 * 4.0 - 2.0 * (-2.0 * 0.5) + 2.0 * 0.25) / h;
        assert!((s.norm(&y).powi(2) - direct).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s2 = SpaceDescriptor::identity("a", 2).unwrap();
        let s3 = SpaceDescriptor::identity("b", 3).unwrap();
        let x = Element::zeros(s3);
        assert!(matches!(norm(&s2, &x), Err(FcError::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_bad_grams() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(SpaceDescriptor::new("x", asym), Err(FcError::Config(_))));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(SpaceDescriptor::new("x", indef), Err(FcError::Config(_))));
    }

    #[test]
    fn gram_spec_parsing() {
        assert_eq!("identity".parse::<GramSpec>().unwrap(), GramSpec::Identity);
        assert_eq!(
            "stiffness1d(0.25)".parse::<GramSpec>().unwrap(),
            GramSpec::Stiffness1d(0.25)
        );
        assert!("banana".parse::<GramSpec>().is_err());
    }

    #[test]
    fn adjoint_with_identity_grams_is_transpose() {
        let f = LinearMap::euclidean(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let a = f.adjoint();
        assert_eq!(a.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
    }

    #[test]
    fn singular_values_sorted() {
        let f = LinearMap::euclidean(DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 3.0])))
            .unwrap();
        assert_eq!(f.singular_values(), vec![3.0, 1.0]);
        let id = LinearMap::euclidean(DMatrix::identity(4, 4)).unwrap();
        assert!(id.singular_values().iter().all(|s| (s - 1.0).abs() < 1e-15));
    }
}
