//! Hard imposition of Dirichlet data on rectangles.
//!
//! The bilinear Coons patch `M[g]` of a function on `[x0, xf] × [y0, yf]`
//! blends its four edge traces and subtracts the bilinear corner
//! interpolant. Replacing each feature `σ_j` by `σ_j - M[σ_j]` gives a basis
//! that vanishes on the boundary, and adding `M[g]` restores the data.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::assembly::{Coefficient, FeatureCache, LinearOperatorSpec};
use crate::error::{Error, Result};
use crate::features::{MultiIndex, OutputWeights, RandomFeatureLayer};
use crate::field::ScalarField;
use crate::geometry::{BoxDomain, Domain};
use crate::solvers::{pinv_solve_detailed, PinvSolution};

/// Relative slack when deciding whether a point lies in the closed rectangle.
const RECT_SLACK: f64 = 1e-12;

/// One term `weight · ∂^alpha g(point)` of a Coons-patch derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilEntry {
    pub weight: f64,
    pub point: [f64; 2],
    pub alpha: MultiIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoonsPatch {
    x: [f64; 2],
    y: [f64; 2],
}

impl CoonsPatch {
    pub fn new(x: [f64; 2], y: [f64; 2]) -> Result<Self> {
        let b = BoxDomain::new(vec![x[0], y[0]], vec![x[1], y[1]])?;
        Self::from_box(&b)
    }

    pub fn from_box(b: &BoxDomain) -> Result<Self> {
        if b.dim() != 2 {
            return Err(Error::UnsupportedDomain(format!("Coons patches need a 2D rectangle, got a {}D box", b.dim())));
        }
        Ok(Self { x: [b.lo()[0], b.hi()[0]], y: [b.lo()[1], b.hi()[1]] })
    }

    pub fn for_domain(domain: &Domain) -> Result<Self> {
        match domain.as_rect() {
            Some(b) => Self::from_box(b),
            None => Err(Error::UnsupportedDomain(format!("xtfc requires a 2D box domain, got {}", domain.kind()))),
        }
    }

    pub fn x_range(&self) -> [f64; 2] {
        self.x
    }

    pub fn y_range(&self) -> [f64; 2] {
        self.y
    }

    pub fn contains_closed(&self, p: &[f64]) -> bool {
        let sx = RECT_SLACK * (self.x[1] - self.x[0]);
        let sy = RECT_SLACK * (self.y[1] - self.y[0]);
        p.len() == 2
            && p[0] >= self.x[0] - sx
            && p[0] <= self.x[1] + sx
            && p[1] >= self.y[0] - sy
            && p[1] <= self.y[1] + sy
    }

    /// `k`-th derivative of the blending functions `(1 - ξ, ξ)` along one axis.
    fn blend(range: [f64; 2], v: f64, k: u8) -> [f64; 2] {
        let h = range[1] - range[0];
        let s = (v - range[0]) / h;
        match k {
            0 => [1.0 - s, s],
            1 => [-1.0 / h, 1.0 / h],
            _ => [0.0, 0.0],
        }
    }

    /// Terms of `∂^α M[g](p)`. Differentiating in `x` hits only the `x`
    /// blending functions on the edges `x = x0, xf` and passes through to
    /// the traces on the edges `y = y0, yf`; likewise for `y`.
    pub fn stencil(&self, p: &[f64], alpha: MultiIndex) -> Result<Vec<StencilEntry>> {
        if p.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: p.len() });
        }
        if !self.contains_closed(p) {
            return Err(Error::OutsideRectangle(p.to_vec()));
        }
        let [a, b, c] = alpha.orders();
        if c != 0 {
            return Err(Error::InvalidArgument(format!("multi-index {alpha} exceeds dimension 2")));
        }
        if a + b > 2 {
            return Err(Error::UnsupportedOrder((a + b) as usize));
        }
        let phi = Self::blend(self.x, p[0], a);
        let psi = Self::blend(self.y, p[1], b);
        let along_y = MultiIndex::new(&[0, b])?;
        let along_x = MultiIndex::new(&[a, 0])?;
        let mut out = Vec::with_capacity(8);
        for i in 0..2 {
            out.push(StencilEntry { weight: phi[i], point: [self.x[i], p[1]], alpha: along_y });
        }
        for j in 0..2 {
            out.push(StencilEntry { weight: psi[j], point: [p[0], self.y[j]], alpha: along_x });
        }
        for i in 0..2 {
            for j in 0..2 {
                out.push(StencilEntry {
                    weight: -phi[i] * psi[j],
                    point: [self.x[i], self.y[j]],
                    alpha: MultiIndex::ZERO,
                });
            }
        }
        out.retain(|e| e.weight != 0.0);
        Ok(out)
    }

    /// `∂^α M[g](p)` for a field with analytic derivatives.
    pub fn eval(&self, g: &dyn ScalarField, p: &[f64], alpha: MultiIndex) -> Result<f64> {
        Ok(self.stencil(p, alpha)?.iter().map(|e| e.weight * g.derivative(&e.point, e.alpha)).sum())
    }

    /// `D[M[g]](p)`.
    pub fn apply_operator(&self, g: &dyn ScalarField, op: &LinearOperatorSpec, p: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for term in op.terms() {
            acc += term.coeff.at(p) * self.eval(g, p, term.alpha)?;
        }
        Ok(acc)
    }

    /// Matrix of `∂^α M[σ_j](x_i)` over all features.
    pub fn feature_matrix(&self, layer: &RandomFeatureLayer, points: ArrayView2<f64>, alpha: MultiIndex) -> Result<Array2<f64>> {
        let op = LinearOperatorSpec::constant(&[(alpha, 1.0)])?;
        self.operator_feature_matrix(layer, points, &op)
    }

    /// Matrix of `D[M[σ_j]](x_i)`. Edge and corner traces are evaluated as
    /// whole feature matrices and combined row by row with the blending
    /// weights.
    pub fn operator_feature_matrix(
        &self,
        layer: &RandomFeatureLayer,
        points: ArrayView2<f64>,
        op: &LinearOperatorSpec,
    ) -> Result<Array2<f64>> {
        if layer.dim() != 2 || points.ncols() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: points.ncols() });
        }
        let n = points.nrows();
        for row in points.rows() {
            let p = [row[0], row[1]];
            if !self.contains_closed(&p) {
                return Err(Error::OutsideRectangle(p.to_vec()));
            }
        }
        let project = |axis: usize, value: f64| {
            let mut q = points.to_owned();
            q.column_mut(axis).fill(value);
            q
        };
        let mut edges_x: Vec<FeatureCache> = Vec::new();
        let mut edges_y: Vec<FeatureCache> = Vec::new();
        let (ex, ey) = (
            [project(0, self.x[0]), project(0, self.x[1])],
            [project(1, self.y[0]), project(1, self.y[1])],
        );
        for i in 0..2 {
            edges_x.push(FeatureCache::new(layer, ex[i].view())?);
            edges_y.push(FeatureCache::new(layer, ey[i].view())?);
        }
        let corners = Array2::from_shape_vec(
            (4, 2),
            vec![self.x[0], self.y[0], self.x[0], self.y[1], self.x[1], self.y[0], self.x[1], self.y[1]],
        )
        .expect("static shape");
        let corner_values = layer.eval(corners.view())?;

        let mut out = Array2::<f64>::zeros((n, layer.neurons()));
        for term in op.terms() {
            let [a, b, c] = term.alpha.orders();
            if c != 0 {
                return Err(Error::InvalidArgument(format!("multi-index {} exceeds dimension 2", term.alpha)));
            }
            let coeff: Array1<f64> = match &term.coeff {
                Coefficient::Constant(v) => Array1::from_elem(n, *v),
                Coefficient::Function(_) => points.rows().into_iter().map(|r| term.coeff.at(&[r[0], r[1]])).collect(),
            };
            if coeff.iter().all(|&v| v == 0.0) {
                continue;
            }
            let phi: Vec<[f64; 2]> = points.column(0).iter().map(|&x| Self::blend(self.x, x, a)).collect();
            let psi: Vec<[f64; 2]> = points.column(1).iter().map(|&y| Self::blend(self.y, y, b)).collect();
            for i in 0..2 {
                let w: Array1<f64> = (0..n).map(|r| coeff[r] * phi[r][i]).collect();
                if w.iter().any(|&v| v != 0.0) {
                    let h = edges_x[i].get(MultiIndex::new(&[0, b])?)?;
                    out += &(h * &w.view().insert_axis(Axis(1)));
                }
                let w: Array1<f64> = (0..n).map(|r| coeff[r] * psi[r][i]).collect();
                if w.iter().any(|&v| v != 0.0) {
                    let h = edges_y[i].get(MultiIndex::new(&[a, 0])?)?;
                    out += &(h * &w.view().insert_axis(Axis(1)));
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    let w: Array1<f64> = (0..n).map(|r| -coeff[r] * phi[r][i] * psi[r][j]).collect();
                    if w.iter().any(|&v| v != 0.0) {
                        let corner = corner_values.row(2 * i + j);
                        out += &(w.view().insert_axis(Axis(1)).dot(&corner.insert_axis(Axis(0))));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `D[σ_j - M[σ_j]](x_i)`: the collocation matrix of the constrained basis.
pub fn xtfc_modified_feature_matrix(
    layer: &RandomFeatureLayer,
    patch: &CoonsPatch,
    points: ArrayView2<f64>,
    op: &LinearOperatorSpec,
) -> Result<Array2<f64>> {
    let interp = patch.operator_feature_matrix(layer, points, op)?;
    let mut cache = FeatureCache::new(layer, points)?;
    Ok(cache.operator_matrix(op)? - interp)
}

/// Trained XTFC model: `ũ = Σ_j β_j (σ_j - M[σ_j]) + M[g]`.
#[derive(Clone)]
pub struct XtfcModel {
    pub layer: RandomFeatureLayer,
    pub beta: OutputWeights,
    pub patch: CoonsPatch,
    pub boundary_data: std::sync::Arc<dyn ScalarField>,
}

impl XtfcModel {
    pub fn predict(&self, points: ArrayView2<f64>, alpha: MultiIndex) -> Result<Array1<f64>> {
        let op = LinearOperatorSpec::constant(&[(alpha, 1.0)])?;
        let basis = xtfc_modified_feature_matrix(&self.layer, &self.patch, points, &op)?;
        let mut u = basis.dot(&self.beta.0);
        for (v, row) in u.iter_mut().zip(points.rows()) {
            *v += self.patch.eval(self.boundary_data.as_ref(), &[row[0], row[1]], alpha)?;
        }
        Ok(u)
    }
}

pub struct XtfcSolution {
    pub model: XtfcModel,
    /// Modified collocation matrix.
    pub matrix: Array2<f64>,
    /// `f - D[M[g]]` at the interior points.
    pub shifted_rhs: Array1<f64>,
    pub pinv: PinvSolution,
    pub residual_norm: f64,
}

/// Least squares in the constrained basis. All collocation points are
/// interior; the boundary data enter only through `M[g]`.
#[allow(clippy::too_many_arguments)]
pub fn xtfc_solve(
    domain: &Domain,
    layer: &RandomFeatureLayer,
    op: &LinearOperatorSpec,
    source: &dyn Fn(&[f64]) -> f64,
    boundary_data: std::sync::Arc<dyn ScalarField>,
    interior: ArrayView2<f64>,
    rank_tol: f64,
) -> Result<XtfcSolution> {
    let patch = CoonsPatch::for_domain(domain)?;
    let matrix = xtfc_modified_feature_matrix(layer, &patch, interior, op)?;
    let f = crate::assembly::assemble_rhs(source, interior)?;
    let mut shifted_rhs = f;
    for (v, row) in shifted_rhs.iter_mut().zip(interior.rows()) {
        *v -= patch.apply_operator(boundary_data.as_ref(), op, &[row[0], row[1]])?;
    }
    let pinv = pinv_solve_detailed(matrix.view(), shifted_rhs.view(), rank_tol)?;
    let r = matrix.dot(&pinv.x) - &shifted_rhs;
    let residual_norm = r.dot(&r).sqrt();
    let model = XtfcModel { layer: layer.clone(), beta: OutputWeights(pinv.x.clone()), patch, boundary_data };
    Ok(XtfcSolution { model, matrix, shifted_rhs, pinv, residual_norm })
}
