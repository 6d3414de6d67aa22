//! Discrete collocation systems: operator matrices `A_ij = D[σ_j](x_i)`,
//! boundary matrices `C_kj = B[σ_j](x_k)`, right-hand sides, and residual /
//! Jacobian callbacks for nonlinear operators.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::features::{MultiIndex, RandomFeatureLayer};
use crate::field::ScalarField;

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Function(PointFn),
}

impl Coefficient {
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "{c}"),
            Coefficient::Function(_) => f.write_str("<fn>"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Term {
    pub alpha: MultiIndex,
    pub coeff: Coefficient,
}

/// `D[u](x) = Σ coeff(x) ∂^α u(x)`.
#[derive(Debug, Clone)]
pub struct LinearOperatorSpec {
    terms: Vec<Term>,
}

/// Boundary operators share the representation; Dirichlet is `u` itself.
pub type BoundaryOperatorSpec = LinearOperatorSpec;

impl LinearOperatorSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("operator needs at least one term".into()));
        }
        if let Some(t) = terms.iter().find(|t| t.alpha.order() > 2) {
            return Err(Error::UnsupportedOrder(t.alpha.order()));
        }
        Ok(Self { terms })
    }

    pub fn constant(terms: &[(MultiIndex, f64)]) -> Result<Self> {
        Self::new(terms.iter().map(|&(alpha, c)| Term { alpha, coeff: Coefficient::Constant(c) }).collect())
    }

    pub fn identity() -> Self {
        Self::constant(&[(MultiIndex::ZERO, 1.0)]).unwrap()
    }

    pub fn dirichlet() -> Self {
        Self::identity()
    }

    /// Laplacian over the first `dim` coordinates.
    pub fn laplacian(dim: usize) -> Self {
        let terms: Vec<_> = (0..dim).map(|k| (MultiIndex::dd(k, k), 1.0)).collect();
        Self::constant(&terms).unwrap()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn max_dim(&self) -> usize {
        self.terms.iter().map(|t| t.alpha.min_dim()).max().unwrap_or(0)
    }

    /// `D1 + D2`.
    pub fn sum(&self, other: &Self) -> Self {
        Self { terms: self.terms.iter().chain(&other.terms).cloned().collect() }
    }

    /// `D[u](x)` for a field with closed-form derivatives.
    pub fn apply(&self, u: &dyn ScalarField, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coeff.at(x) * u.derivative(x, t.alpha)).sum()
    }

    /// True if every term has order zero and a constant coefficient of one,
    /// i.e. plain Dirichlet conditions.
    pub fn is_dirichlet(&self) -> bool {
        self.terms.len() == 1
            && self.terms[0].alpha == MultiIndex::ZERO
            && matches!(self.terms[0].coeff, Coefficient::Constant(c) if c == 1.0)
    }
}

/// Feature derivative matrices at a fixed point set, computed at most once
/// per multi-index.
pub struct FeatureCache<'a> {
    layer: &'a RandomFeatureLayer,
    points: Array2<f64>,
    matrices: BTreeMap<MultiIndex, Array2<f64>>,
    evaluations: usize,
}

impl<'a> FeatureCache<'a> {
    pub fn new(layer: &'a RandomFeatureLayer, points: ArrayView2<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::InvalidArgument("collocation point set is empty".into()));
        }
        if points.ncols() != layer.dim() {
            return Err(Error::DimensionMismatch { expected: layer.dim(), got: points.ncols() });
        }
        Ok(Self { layer, points: points.to_owned(), matrices: BTreeMap::new(), evaluations: 0 })
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn layer(&self) -> &RandomFeatureLayer {
        self.layer
    }

    /// Number of `eval_derivative` calls made so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn get(&mut self, alpha: MultiIndex) -> Result<&Array2<f64>> {
        if !self.matrices.contains_key(&alpha) {
            let m = self.layer.eval_derivative(self.points.view(), alpha)?;
            self.evaluations += 1;
            self.matrices.insert(alpha, m);
        }
        Ok(&self.matrices[&alpha])
    }

    /// Operator matrix `Σ diag(coeff(x_i)) ∂^α H`.
    pub fn operator_matrix(&mut self, op: &LinearOperatorSpec) -> Result<Array2<f64>> {
        let mut a = Array2::zeros((self.points.nrows(), self.layer.neurons()));
        for term in op.terms() {
            match &term.coeff {
                Coefficient::Constant(c) => {
                    if *c != 0.0 {
                        a.scaled_add(*c, self.get(term.alpha)?);
                    }
                }
                Coefficient::Function(_) => {
                    let weights: Array1<f64> = self.points.rows().into_iter().map(|x| term.coeff.at(x.as_slice().unwrap())).collect();
                    let h = self.get(term.alpha)?;
                    a += &(h * &weights.insert_axis(Axis(1)));
                }
            }
        }
        Ok(a)
    }

    fn into_matrices(self) -> FeatureMatrices {
        FeatureMatrices { points: self.points, matrices: self.matrices }
    }
}

pub fn assemble_operator_matrix(
    layer: &RandomFeatureLayer,
    op: &LinearOperatorSpec,
    points: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    FeatureCache::new(layer, points)?.operator_matrix(op)
}

pub fn assemble_boundary_matrix(
    layer: &RandomFeatureLayer,
    bop: &BoundaryOperatorSpec,
    boundary_points: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    assemble_operator_matrix(layer, bop, boundary_points)
}

/// Pointwise evaluation; any non-finite value is reported with its point.
pub fn assemble_rhs(f: &dyn Fn(&[f64]) -> f64, points: ArrayView2<f64>) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(points.nrows());
    for (o, row) in out.iter_mut().zip(points.rows()) {
        let x = row.to_vec();
        let v = f(&x);
        if !v.is_finite() {
            return Err(Error::NonFiniteData { point: x, value: v });
        }
        *o = v;
    }
    Ok(out)
}

/// `(A, f, C, g)` for a linear problem.
#[derive(Debug, Clone)]
pub struct CollocationSystem {
    pub a: Array2<f64>,
    pub f: Array1<f64>,
    pub c: Array2<f64>,
    pub g: Array1<f64>,
}

impl CollocationSystem {
    pub fn assemble(
        layer: &RandomFeatureLayer,
        op: &LinearOperatorSpec,
        source: &dyn Fn(&[f64]) -> f64,
        bop: &BoundaryOperatorSpec,
        boundary_data: &dyn Fn(&[f64]) -> f64,
        interior: ArrayView2<f64>,
        boundary: ArrayView2<f64>,
    ) -> Result<Self> {
        let a = assemble_operator_matrix(layer, op, interior)?;
        let f = assemble_rhs(source, interior)?;
        let c = assemble_boundary_matrix(layer, bop, boundary)?;
        let g = assemble_rhs(boundary_data, boundary)?;
        Ok(Self { a, f, c, g })
    }
}

/// Cached feature matrices at the interior collocation points.
pub struct FeatureMatrices {
    points: Array2<f64>,
    matrices: BTreeMap<MultiIndex, Array2<f64>>,
}

impl FeatureMatrices {
    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    /// Panics if `alpha` was not requested by the form that built this cache.
    pub fn get(&self, alpha: MultiIndex) -> &Array2<f64> {
        self.matrices.get(&alpha).unwrap_or_else(|| panic!("feature matrix {alpha} was not cached"))
    }

    pub fn rows(&self) -> usize {
        self.points.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrices.values().next().map_or(0, |m| m.ncols())
    }
}

/// A differential operator that is nonlinear in `u`, with a hand-derived
/// Jacobian with respect to the output weights.
pub trait NonlinearForm: Send + Sync {
    fn name(&self) -> &str;

    /// Feature derivative matrices the form reads.
    fn alphas(&self) -> Vec<MultiIndex>;

    /// `D[ũ_β](x_i)` at every cached point.
    fn apply(&self, m: &FeatureMatrices, beta: &Array1<f64>) -> Array1<f64>;

    /// `∂ D[ũ_β](x_i) / ∂β_j`.
    fn jacobian(&self, m: &FeatureMatrices, beta: &Array1<f64>) -> Array2<f64>;

    /// `D[u](x)` for a field with closed-form derivatives.
    fn apply_field(&self, u: &dyn ScalarField, x: &[f64]) -> f64;
}

/// A linear operator seen as a (degenerate) nonlinear form.
pub struct LinearForm {
    op: LinearOperatorSpec,
}

impl LinearForm {
    pub fn new(op: LinearOperatorSpec) -> Self {
        Self { op }
    }

    fn matrix(&self, m: &FeatureMatrices) -> Array2<f64> {
        let mut a = Array2::zeros((m.rows(), m.cols()));
        for term in self.op.terms() {
            let weights: Array1<f64> =
                m.points().rows().into_iter().map(|x| term.coeff.at(x.as_slice().unwrap())).collect();
            a += &(m.get(term.alpha) * &weights.insert_axis(Axis(1)));
        }
        a
    }
}

impl NonlinearForm for LinearForm {
    fn name(&self) -> &str {
        "linear"
    }

    fn alphas(&self) -> Vec<MultiIndex> {
        self.op.terms().iter().map(|t| t.alpha).collect()
    }

    fn apply(&self, m: &FeatureMatrices, beta: &Array1<f64>) -> Array1<f64> {
        self.matrix(m).dot(beta)
    }

    fn jacobian(&self, m: &FeatureMatrices, _beta: &Array1<f64>) -> Array2<f64> {
        self.matrix(m)
    }

    fn apply_field(&self, u: &dyn ScalarField, x: &[f64]) -> f64 {
        self.op.apply(u, x)
    }
}

/// `u_t + u u_x - u_xx - u(1 - u)` on points `(x, t)`.
pub struct BurgersFisher;

const BF_X: MultiIndex = MultiIndex::d(0);
const BF_T: MultiIndex = MultiIndex::d(1);
const BF_XX: MultiIndex = MultiIndex::dd(0, 0);

impl NonlinearForm for BurgersFisher {
    fn name(&self) -> &str {
        "burgers-fisher"
    }

    fn alphas(&self) -> Vec<MultiIndex> {
        vec![MultiIndex::ZERO, BF_X, BF_T, BF_XX]
    }

    fn apply(&self, m: &FeatureMatrices, beta: &Array1<f64>) -> Array1<f64> {
        let u = m.get(MultiIndex::ZERO).dot(beta);
        let ux = m.get(BF_X).dot(beta);
        let ut = m.get(BF_T).dot(beta);
        let uxx = m.get(BF_XX).dot(beta);
        ut + &u * &ux - uxx - &u + &u * &u
    }

    fn jacobian(&self, m: &FeatureMatrices, beta: &Array1<f64>) -> Array2<f64> {
        let h = m.get(MultiIndex::ZERO);
        let hx = m.get(BF_X);
        let u = h.dot(beta).insert_axis(Axis(1));
        let ux = hx.dot(beta).insert_axis(Axis(1));
        // H_t + diag(u) H_x + diag(u_x) H - H_xx - H + 2 diag(u) H
        let mut j = m.get(BF_T) - m.get(BF_XX);
        j += &(hx * &u);
        j += &(h * &(&ux + &(2.0 * &u) - 1.0));
        j
    }

    fn apply_field(&self, u: &dyn ScalarField, x: &[f64]) -> f64 {
        let v = u.value(x);
        u.derivative(x, BF_T) + v * u.derivative(x, BF_X) - u.derivative(x, BF_XX) - v * (1.0 - v)
    }
}

/// `u_t - u Δu` on points `(x, y, t)`.
pub struct NonlinearDiffusion;

const ND_T: MultiIndex = MultiIndex::d(2);
const ND_XX: MultiIndex = MultiIndex::dd(0, 0);
const ND_YY: MultiIndex = MultiIndex::dd(1, 1);

impl NonlinearForm for NonlinearDiffusion {
    fn name(&self) -> &str {
        "nonlinear-diffusion"
    }

    fn alphas(&self) -> Vec<MultiIndex> {
        vec![MultiIndex::ZERO, ND_T, ND_XX, ND_YY]
    }

    fn apply(&self, m: &FeatureMatrices, beta: &Array1<f64>) -> Array1<f64> {
        let u = m.get(MultiIndex::ZERO).dot(beta);
        let lap = m.get(ND_XX).dot(beta) + m.get(ND_YY).dot(beta);
        m.get(ND_T).dot(beta) - &u * &lap
    }

    fn jacobian(&self, m: &FeatureMatrices, beta: &Array1<f64>) -> Array2<f64> {
        let h = m.get(MultiIndex::ZERO);
        let hlap = m.get(ND_XX) + m.get(ND_YY);
        let u = h.dot(beta).insert_axis(Axis(1));
        let lap = hlap.dot(beta).insert_axis(Axis(1));
        // H_t - diag(Δu) H - diag(u) ΔH
        m.get(ND_T) - &(h * &lap) - &(hlap * &u)
    }

    fn apply_field(&self, u: &dyn ScalarField, x: &[f64]) -> f64 {
        u.derivative(x, ND_T) - u.value(x) * (u.derivative(x, ND_XX) + u.derivative(x, ND_YY))
    }
}

/// Residual `R(β)` and Jacobian `∂R/∂β` of a least-squares problem.
pub trait Residual {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn residual(&self, beta: &Array1<f64>) -> Array1<f64>;
    fn jacobian(&self, beta: &Array1<f64>) -> Array2<f64>;
}

/// `R_i(β) = D[ũ_β](x_i) - f(x_i)` for a nonlinear form.
pub struct NonlinearResidualSpec {
    form: Arc<dyn NonlinearForm>,
    matrices: FeatureMatrices,
    f: Array1<f64>,
    evaluations: usize,
}

impl NonlinearResidualSpec {
    pub fn form(&self) -> &dyn NonlinearForm {
        self.form.as_ref()
    }

    pub fn source(&self) -> &Array1<f64> {
        &self.f
    }

    /// Feature matrix evaluations made while building the cache.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn matrices(&self) -> &FeatureMatrices {
        &self.matrices
    }
}

impl Residual for NonlinearResidualSpec {
    fn rows(&self) -> usize {
        self.matrices.rows()
    }

    fn cols(&self) -> usize {
        self.matrices.cols()
    }

    fn residual(&self, beta: &Array1<f64>) -> Array1<f64> {
        self.form.apply(&self.matrices, beta) - &self.f
    }

    fn jacobian(&self, beta: &Array1<f64>) -> Array2<f64> {
        self.form.jacobian(&self.matrices, beta)
    }
}

pub fn build_nonlinear_residual(
    layer: &RandomFeatureLayer,
    points: ArrayView2<f64>,
    form: Arc<dyn NonlinearForm>,
    f: &dyn Fn(&[f64]) -> f64,
) -> Result<NonlinearResidualSpec> {
    let mut cache = FeatureCache::new(layer, points)?;
    for alpha in form.alphas() {
        cache.get(alpha)?;
    }
    let f = assemble_rhs(f, points)?;
    let evaluations = cache.evaluations();
    Ok(NonlinearResidualSpec { form, matrices: cache.into_matrices(), f, evaluations })
}

/// Interior residual stacked with `sqrt(λ) (Cβ - g)`, for penalty training of
/// nonlinear problems.
pub struct PenaltyResidual<'a, R: Residual> {
    pub inner: &'a R,
    pub c: &'a Array2<f64>,
    pub g: &'a Array1<f64>,
    pub lambda: f64,
}

impl<R: Residual> Residual for PenaltyResidual<'_, R> {
    fn rows(&self) -> usize {
        self.inner.rows() + self.c.nrows()
    }

    fn cols(&self) -> usize {
        self.inner.cols()
    }

    fn residual(&self, beta: &Array1<f64>) -> Array1<f64> {
        let w = self.lambda.sqrt();
        let top = self.inner.residual(beta);
        let bottom = (self.c.dot(beta) - self.g) * w;
        ndarray::concatenate![Axis(0), top, bottom]
    }

    fn jacobian(&self, beta: &Array1<f64>) -> Array2<f64> {
        let w = self.lambda.sqrt();
        let top = self.inner.jacobian(beta);
        ndarray::concatenate![Axis(0), top, self.c * w]
    }
}
