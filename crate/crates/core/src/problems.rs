//! Benchmark catalog: manufactured-solution problems with closed-form exact
//! solutions, sources and Dirichlet data.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::assembly::{BoundaryOperatorSpec, BurgersFisher, Coefficient, LinearOperatorSpec, NonlinearDiffusion, NonlinearForm, PointFn, Term};
use crate::error::{Error, Result};
use crate::features::MultiIndex;
use crate::field::ScalarField;
use crate::geometry::Domain;

/// Value, gradient and Hessian at a point; unused coordinates are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

impl Jet {
    pub fn get(&self, alpha: MultiIndex) -> f64 {
        match alpha.axes().as_slice() {
            [] => self.value,
            [k] => self.grad[*k],
            [k, l] => self.hess[*k][*l],
            _ => f64::NAN,
        }
    }

    fn planar(value: f64, ux: f64, uy: f64, uxx: f64, uxy: f64, uyy: f64) -> Self {
        let mut j = Jet { value, ..Default::default() };
        j.grad[0] = ux;
        j.grad[1] = uy;
        j.hess[0][0] = uxx;
        j.hess[0][1] = uxy;
        j.hess[1][0] = uxy;
        j.hess[1][1] = uyy;
        j
    }
}

/// An exact solution given by its second-order jet.
pub trait ClosedForm: Send + Sync {
    fn dim(&self) -> usize;
    fn jet(&self, x: &[f64]) -> Jet;
}

/// Adapter exposing a [`ClosedForm`] as a [`ScalarField`].
pub struct Exact<T>(pub T);

impl<T: ClosedForm> ScalarField for Exact<T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0.jet(x).value
    }

    fn derivative(&self, x: &[f64], alpha: MultiIndex) -> f64 {
        self.0.jet(x).get(alpha)
    }
}

/// `exp(-a ((x - c_x)² + (y - c_y)²)) + p_x x + p_y y`.
#[derive(Debug, Clone, Copy)]
pub struct GaussPlusPlane {
    pub a: f64,
    pub center: [f64; 2],
    pub plane: [f64; 2],
}

impl ClosedForm for GaussPlusPlane {
    fn dim(&self) -> usize {
        2
    }

    fn jet(&self, x: &[f64]) -> Jet {
        let a = self.a;
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        let g = (-a * (dx * dx + dy * dy)).exp();
        Jet::planar(
            g + self.plane[0] * x[0] + self.plane[1] * x[1],
            -2.0 * a * dx * g + self.plane[0],
            -2.0 * a * dy * g + self.plane[1],
            (4.0 * a * a * dx * dx - 2.0 * a) * g,
            4.0 * a * a * dx * dy * g,
            (4.0 * a * a * dy * dy - 2.0 * a) * g,
        )
    }
}

/// `e^{-x} (x + y³)`.
#[derive(Debug, Clone, Copy)]
pub struct ExpPoly;

impl ClosedForm for ExpPoly {
    fn dim(&self) -> usize {
        2
    }

    fn jet(&self, x: &[f64]) -> Jet {
        let (px, y) = (x[0], x[1]);
        let e = (-px).exp();
        let p = px + y * y * y;
        Jet::planar(e * p, e * (1.0 - p), 3.0 * y * y * e, e * (p - 2.0), -3.0 * y * y * e, 6.0 * y * e)
    }
}

/// `y² sin(πx)`.
#[derive(Debug, Clone, Copy)]
pub struct SinQuad;

impl ClosedForm for SinQuad {
    fn dim(&self) -> usize {
        2
    }

    fn jet(&self, x: &[f64]) -> Jet {
        let (s, c) = (PI * x[0]).sin_cos();
        let y = x[1];
        Jet::planar(y * y * s, PI * y * y * c, 2.0 * y * s, -PI * PI * y * y * s, 2.0 * PI * y * c, 2.0 * s)
    }
}

/// `(1 - e^{-(1-x)/δ}) (1 - e^{-(1-y)/δ}) cos(π(x + y))`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryLayer {
    pub delta: f64,
}

impl ClosedForm for BoundaryLayer {
    fn dim(&self) -> usize {
        2
    }

    fn jet(&self, x: &[f64]) -> Jet {
        let d = self.delta;
        // Each layer factor as (value, first, second derivative).
        let layer = |v: f64| {
            let e = (-(1.0 - v) / d).exp();
            (1.0 - e, -e / d, -e / (d * d))
        };
        let (p, p1, p2) = layer(x[0]);
        let (q, q1, q2) = layer(x[1]);
        let (s, c) = (PI * (x[0] + x[1])).sin_cos();
        let (c1, c2) = (-PI * s, -PI * PI * c);
        Jet::planar(
            p * q * c,
            p1 * q * c + p * q * c1,
            p * q1 * c + p * q * c1,
            p2 * q * c + 2.0 * p1 * q * c1 + p * q * c2,
            p1 * q1 * c + p1 * q * c1 + p * q1 * c1 + p * q * c2,
            p * q2 * c + 2.0 * p * q1 * c1 + p * q * c2,
        )
    }
}

/// `exp(-(x² + τ r y²)) / (4π sqrt(τ))`.
#[derive(Debug, Clone, Copy)]
pub struct AnisotropicGaussian {
    pub tau: f64,
    pub r: f64,
}

impl ClosedForm for AnisotropicGaussian {
    fn dim(&self) -> usize {
        2
    }

    fn jet(&self, x: &[f64]) -> Jet {
        let k = self.tau * self.r;
        let (px, y) = (x[0], x[1]);
        let u = (-(px * px + k * y * y)).exp() / (4.0 * PI * self.tau.sqrt());
        Jet::planar(
            u,
            -2.0 * px * u,
            -2.0 * k * y * u,
            (4.0 * px * px - 2.0) * u,
            4.0 * k * px * y * u,
            (4.0 * k * k * y * y - 2.0 * k) * u,
        )
    }
}

/// `r^{2/3} sin(2θ/3)` with `θ ∈ [0, 2π)`, singular at the origin.
#[derive(Debug, Clone, Copy)]
pub struct CornerSingularity;

impl CornerSingularity {
    pub fn polar(x: &[f64]) -> (f64, f64) {
        let r = x[0].hypot(x[1]);
        let mut theta = x[1].atan2(x[0]);
        if theta < 0.0 {
            theta += 2.0 * PI;
        }
        (r, theta)
    }
}

impl ClosedForm for CornerSingularity {
    fn dim(&self) -> usize {
        2
    }

    fn jet(&self, x: &[f64]) -> Jet {
        let (r, th) = Self::polar(x);
        let value = r.powf(2.0 / 3.0) * (2.0 * th / 3.0).sin();
        if r == 0.0 {
            let inf = f64::INFINITY;
            return Jet { value, grad: [inf; 3], hess: [[inf; 3]; 3] };
        }
        // Derivatives of Im(z^{2/3}) via z^{-1/3} and z^{-4/3}.
        let g = 2.0 / 3.0 * r.powf(-1.0 / 3.0);
        let h = 2.0 / 9.0 * r.powf(-4.0 / 3.0);
        let (s4, c4) = (4.0 * th / 3.0).sin_cos();
        Jet::planar(value, -g * (th / 3.0).sin(), g * (th / 3.0).cos(), h * s4, -h * c4, -h * s4)
    }
}

/// `1/2 + tanh(5t/8 - x/4) / 2` on points `(x, t)`.
#[derive(Debug, Clone, Copy)]
pub struct TravelingWave;

impl ClosedForm for TravelingWave {
    fn dim(&self) -> usize {
        2
    }

    fn jet(&self, x: &[f64]) -> Jet {
        let (kx, kt) = (-0.25, 0.625);
        let t = (kt * x[1] + kx * x[0]).tanh();
        let s = 1.0 - t * t;
        let d1 = 0.5 * s;
        let d2 = -t * s;
        Jet::planar(0.5 + 0.5 * t, kx * d1, kt * d1, kx * kx * d2, kx * kt * d2, kt * kt * d2)
    }
}

/// `((x² + y² + 1)/4 + xy + x + y) / (1 - t)` on points `(x, y, t)`.
#[derive(Debug, Clone, Copy)]
pub struct SeparableDiffusion;

impl ClosedForm for SeparableDiffusion {
    fn dim(&self) -> usize {
        3
    }

    fn jet(&self, p: &[f64]) -> Jet {
        let (x, y, t) = (p[0], p[1], p[2]);
        let q = (x * x + y * y + 1.0) / 4.0 + x * y + x + y;
        let qx = x / 2.0 + y + 1.0;
        let qy = y / 2.0 + x + 1.0;
        let s = 1.0 / (1.0 - t);
        Jet {
            value: q * s,
            grad: [qx * s, qy * s, q * s * s],
            hess: [
                [0.5 * s, s, qx * s * s],
                [s, 0.5 * s, qy * s * s],
                [qx * s * s, qy * s * s, 2.0 * q * s * s * s],
            ],
        }
    }
}

#[derive(Clone)]
pub enum Operator {
    Linear(LinearOperatorSpec),
    Nonlinear(Arc<dyn NonlinearForm>),
}

impl Operator {
    pub fn is_linear(&self) -> bool {
        matches!(self, Operator::Linear(_))
    }

    /// `D[u](x)`.
    pub fn apply_field(&self, u: &dyn ScalarField, x: &[f64]) -> f64 {
        match self {
            Operator::Linear(op) => op.apply(u, x),
            Operator::Nonlinear(form) => form.apply_field(u, x),
        }
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operator::Linear(op) => write!(f, "Linear({op:?})"),
            Operator::Nonlinear(form) => write!(f, "Nonlinear({})", form.name()),
        }
    }
}

#[derive(Clone)]
pub struct BenchmarkProblem {
    pub id: &'static str,
    /// Short operator description for listings.
    pub operator_class: &'static str,
    pub domain: Domain,
    pub operator: Operator,
    pub boundary_op: BoundaryOperatorSpec,
    pub exact: Arc<dyn ScalarField>,
    pub source: PointFn,
    /// Curve carrying the boundary data when it differs from `∂Ω`.
    pub constraint_curve: Option<Domain>,
}

impl fmt::Debug for BenchmarkProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkProblem")
            .field("id", &self.id)
            .field("domain", &self.domain.kind())
            .field("operator", &self.operator)
            .finish_non_exhaustive()
    }
}

impl BenchmarkProblem {
    pub fn is_linear(&self) -> bool {
        self.operator.is_linear()
    }

    pub fn boundary_data(&self, x: &[f64]) -> f64 {
        self.exact.value(x)
    }

    /// Where boundary collocation points are drawn.
    pub fn constraint_domain(&self) -> &Domain {
        self.constraint_curve.as_ref().unwrap_or(&self.domain)
    }

    pub fn is_extrapolation(&self) -> bool {
        self.constraint_curve.is_some()
    }

    /// Single-line listing: id, domain kind, operator class, nonlinear flag.
    pub fn summary_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.id, self.domain.kind(), self.operator_class, !self.is_linear())
    }
}

/// L-shape with the upper-right quadrant removed.
pub fn lshape_vertices() -> Vec<[f64; 2]> {
    vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [-1.0, 1.0]]
}

/// Five-pointed star centred at the origin, outer radius 1, inner radius
/// 0.4, first tip on the positive `y` axis, counter-clockwise.
pub fn star_vertices() -> Vec<[f64; 2]> {
    (0..10)
        .map(|k| {
            let radius = if k % 2 == 0 { 1.0 } else { 0.4 };
            let angle = PI / 2.0 + k as f64 * PI / 5.0;
            [radius * angle.cos(), radius * angle.sin()]
        })
        .collect()
}

/// `[-1, 1]²` minus the lower-right quadrant; the reentrant corner sits at
/// the origin, where the corner solution is singular.
pub fn corner_lshape_vertices() -> Vec<[f64; 2]> {
    vec![[-1.0, -1.0], [0.0, -1.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [-1.0, 1.0]]
}

/// Removed region around the cut of the corner-excluded domain.
pub const CORNER_MARGIN: f64 = 0.05;

/// `[-1, 1]²` minus `{x > -m, y < m}`: slightly more than a quadrant, so the
/// origin lies outside the closed domain.
pub fn corner_excluded_vertices() -> Vec<[f64; 2]> {
    let m = CORNER_MARGIN;
    vec![[-1.0, -1.0], [-m, -1.0], [-m, m], [1.0, m], [1.0, 1.0], [-1.0, 1.0]]
}

fn field<T: ClosedForm + 'static>(t: T) -> Arc<dyn ScalarField> {
    Arc::new(Exact(t))
}

fn zero_source() -> PointFn {
    Arc::new(|_| 0.0)
}

/// Source `D[u*]` from the closed-form jet of `u*`.
fn linear_source(op: &LinearOperatorSpec, exact: &Arc<dyn ScalarField>) -> PointFn {
    let op = op.clone();
    let exact = exact.clone();
    Arc::new(move |x| op.apply(exact.as_ref(), x))
}

fn linear(
    id: &'static str,
    operator_class: &'static str,
    domain: Domain,
    op: LinearOperatorSpec,
    exact: Arc<dyn ScalarField>,
    constraint_curve: Option<Domain>,
) -> BenchmarkProblem {
    BenchmarkProblem {
        id,
        operator_class,
        source: linear_source(&op, &exact),
        domain,
        operator: Operator::Linear(op),
        boundary_op: LinearOperatorSpec::dirichlet(),
        exact,
        constraint_curve,
    }
}

fn square(lo: f64, hi: f64) -> Domain {
    Domain::rect([lo, hi], [lo, hi]).expect("valid square")
}

fn polygon(v: Vec<[f64; 2]>) -> Domain {
    Domain::polygon(v).expect("valid polygon")
}

/// `-δΔu + 2u_x + u_y`.
fn advection_diffusion(delta: f64) -> LinearOperatorSpec {
    LinearOperatorSpec::constant(&[
        (MultiIndex::dd(0, 0), -delta),
        (MultiIndex::dd(1, 1), -delta),
        (MultiIndex::d(0), 2.0),
        (MultiIndex::d(1), 1.0),
    ])
    .expect("valid operator")
}

/// `u_xx + u_yy / r`.
fn anisotropic(r: f64) -> LinearOperatorSpec {
    LinearOperatorSpec::new(vec![
        Term { alpha: MultiIndex::dd(0, 0), coeff: Coefficient::Constant(1.0) },
        Term { alpha: MultiIndex::dd(1, 1), coeff: Coefficient::Constant(1.0 / r) },
    ])
    .expect("valid operator")
}

pub const ANISO_TAU: f64 = 1e-3;

/// Every benchmark, in a fixed order.
pub fn catalog() -> Vec<BenchmarkProblem> {
    let lap = LinearOperatorSpec::laplacian(2);
    let mut out = vec![
        linear(
            "square-gauss",
            "poisson",
            Domain::unit_square(),
            lap.clone(),
            field(GaussPlusPlane { a: 10.0, center: [0.4, 0.4], plane: [0.1, 0.2] }),
            None,
        ),
        linear("lshape-p1", "poisson", polygon(lshape_vertices()), lap.clone(), field(ExpPoly), None),
        linear("star-p1", "poisson", polygon(star_vertices()), lap.clone(), field(ExpPoly), None),
        linear("lshape-p2", "poisson", polygon(lshape_vertices()), lap.clone(), field(SinQuad), None),
        linear("star-p2", "poisson", polygon(star_vertices()), lap.clone(), field(SinQuad), None),
        linear(
            "extrapolation-star",
            "poisson",
            square(-1.0, 1.0),
            lap.clone(),
            field(ExpPoly),
            Some(polygon(star_vertices())),
        ),
        linear(
            "extrapolation-lshape",
            "poisson",
            square(-1.0, 1.0),
            lap.clone(),
            field(ExpPoly),
            Some(polygon(lshape_vertices())),
        ),
    ];
    for (id, a) in [("peak-50", 50.0), ("peak-100", 100.0)] {
        let exact = field(GaussPlusPlane { a, center: [0.4, 0.4], plane: [0.0, 0.0] });
        out.push(linear(id, "poisson", Domain::unit_square(), lap.clone(), exact, None));
    }
    for (id, delta) in [("blayer-0.1", 0.1), ("blayer-0.01", 0.01)] {
        let exact = field(BoundaryLayer { delta });
        out.push(linear(id, "advection-diffusion", square(-1.0, 1.0), advection_diffusion(delta), exact, None));
    }
    for (id, r) in [("aniso-1e4", 1e4), ("aniso-1e5", 1e5)] {
        let exact = field(AnisotropicGaussian { tau: ANISO_TAU, r });
        out.push(linear(id, "anisotropic-diffusion", square(-1.0, 1.0), anisotropic(r), exact, None));
    }
    for (id, vertices) in [("corner-excluded", corner_excluded_vertices()), ("corner-included", corner_lshape_vertices())] {
        out.push(BenchmarkProblem {
            id,
            operator_class: "laplace",
            domain: polygon(vertices),
            operator: Operator::Linear(lap.clone()),
            boundary_op: LinearOperatorSpec::dirichlet(),
            exact: field(CornerSingularity),
            source: zero_source(),
            constraint_curve: None,
        });
    }
    let interval = Domain::Box(crate::geometry::BoxDomain::new(vec![0.0], vec![5.0]).expect("valid interval"));
    out.push(BenchmarkProblem {
        id: "burgers-fisher-1d",
        operator_class: "burgers-fisher",
        domain: Domain::space_time(interval, 0.0, 5.0).expect("valid cylinder"),
        operator: Operator::Nonlinear(Arc::new(BurgersFisher)),
        boundary_op: LinearOperatorSpec::dirichlet(),
        exact: field(TravelingWave),
        source: zero_source(),
        constraint_curve: None,
    });
    out.push(BenchmarkProblem {
        id: "nonlinear-diffusion-2d",
        operator_class: "nonlinear-diffusion",
        domain: Domain::space_time(Domain::unit_square(), 0.0, 0.25).expect("valid cylinder"),
        operator: Operator::Nonlinear(Arc::new(NonlinearDiffusion)),
        boundary_op: LinearOperatorSpec::dirichlet(),
        exact: field(SeparableDiffusion),
        source: zero_source(),
        constraint_curve: None,
    });
    out
}

pub fn lookup(id: &str) -> Result<BenchmarkProblem> {
    catalog().into_iter().find(|p| p.id == id).ok_or_else(|| Error::NotFound(id.to_string()))
}

/// `f = D[u*]` for a catalog entry.
pub fn manufactured_source(id: &str) -> Result<PointFn> {
    Ok(lookup(id)?.source)
}
