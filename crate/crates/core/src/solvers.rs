//! Training of the output weights: truncated-SVD least squares, penalty
//! weighting of boundary rows, the null-space method for equality
//! constraints, and a constraint-preserving Gauss-Newton loop.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::{JobSvd, SVDDC};
use serde::{Deserialize, Serialize};

use crate::assembly::Residual;
use crate::error::{Error, Result};

/// Singular values below `rank_tol * σ_1` are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Count of singular values strictly above `rank_tol * σ_1`.
pub fn numerical_rank(singular_values: &[f64], rank_tol: f64) -> usize {
    match singular_values.first() {
        Some(&s1) if s1 > 0.0 => singular_values.iter().take_while(|&&s| s > rank_tol * s1).count(),
        _ => 0,
    }
}

fn has_no_entries(m: &ArrayView2<f64>) -> bool {
    m.nrows() == 0 || m.ncols() == 0
}

/// Thin SVD `U diag(s) Vᵀ` of a matrix with at least one row and column.
fn thin_svd(m: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let owned = m.as_standard_layout().into_owned();
    let (u, s, vt) = owned.svddc(JobSvd::Some)?;
    let u = u.ok_or_else(|| Error::Linalg("SVD returned no U".into()))?;
    let vt = vt.ok_or_else(|| Error::Linalg("SVD returned no Vᵀ".into()))?;
    Ok((u, s, vt))
}

pub fn singular_values(m: ArrayView2<f64>) -> Result<Vec<f64>> {
    if has_no_entries(&m) {
        return Ok(Vec::new());
    }
    let owned = m.as_standard_layout().into_owned();
    let (_, s, _) = owned.svddc(JobSvd::None)?;
    Ok(s.to_vec())
}

/// Minimum-norm least-squares solution with its spectrum.
#[derive(Debug, Clone)]
pub struct PinvSolution {
    pub x: Array1<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

/// `H† y` through the SVD, truncating singular values below
/// `rank_tol * σ_1`. A zero matrix yields the zero vector.
pub fn pinv_solve(h: ArrayView2<f64>, y: ArrayView1<f64>, rank_tol: f64) -> Result<Array1<f64>> {
    Ok(pinv_solve_detailed(h, y, rank_tol)?.x)
}

pub fn pinv_solve_detailed(h: ArrayView2<f64>, y: ArrayView1<f64>, rank_tol: f64) -> Result<PinvSolution> {
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rank tolerance must be positive, got {rank_tol}")));
    }
    if h.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), got: y.len() });
    }
    if has_no_entries(&h) {
        return Ok(PinvSolution { x: Array1::zeros(h.ncols()), singular_values: Vec::new(), rank: 0 });
    }
    let (u, s, vt) = thin_svd(h)?;
    let rank = numerical_rank(s.as_slice().unwrap(), rank_tol);
    let coeffs = u.slice(s![.., ..rank]).t().dot(&y) / s.slice(s![..rank]);
    let x = vt.slice(s![..rank, ..]).t().dot(&coeffs);
    Ok(PinvSolution { x, singular_values: s.to_vec(), rank })
}

/// Orthogonal splitting of `R^L` by the SVD of the constraint matrix:
/// `V_r` spans `ker(C)^⊥` and `V_⊥` spans the numerical kernel of `C`.
#[derive(Debug, Clone)]
pub struct SvdSplit {
    pub u_r: Array2<f64>,
    pub sigma_r: Array1<f64>,
    pub v_r: Array2<f64>,
    pub v_perp: Array2<f64>,
    pub rank: usize,
    /// All singular values of `C`, descending.
    pub singular_values: Vec<f64>,
}

impl SvdSplit {
    pub fn of(c: ArrayView2<f64>, rank_tol: f64) -> Result<Self> {
        let (rows, cols) = c.dim();
        if cols == 0 {
            return Err(Error::InvalidArgument("constraint matrix has no columns".into()));
        }
        if rows == 0 {
            return Ok(Self {
                u_r: Array2::zeros((0, 0)),
                sigma_r: Array1::zeros(0),
                v_r: Array2::zeros((cols, 0)),
                v_perp: Array2::eye(cols),
                rank: 0,
                singular_values: Vec::new(),
            });
        }
        let owned = c.as_standard_layout().into_owned();
        let (u, s, vt) = owned.svddc(JobSvd::All)?;
        let u = u.ok_or_else(|| Error::Linalg("SVD returned no U".into()))?;
        let vt = vt.ok_or_else(|| Error::Linalg("SVD returned no Vᵀ".into()))?;
        let rank = numerical_rank(s.as_slice().unwrap(), rank_tol);
        let v = vt.reversed_axes();
        Ok(Self {
            u_r: u.slice(s![.., ..rank]).to_owned(),
            sigma_r: s.slice(s![..rank]).to_owned(),
            v_r: v.slice(s![.., ..rank]).to_owned(),
            v_perp: v.slice(s![.., rank..]).to_owned(),
            rank,
            singular_values: s.to_vec(),
        })
    }

    /// `y = Σ_r⁻¹ U_rᵀ g`, the coordinates fixed by the constraints.
    pub fn constrained_coordinates(&self, g: ArrayView1<f64>) -> Array1<f64> {
        self.u_r.t().dot(&g) / &self.sigma_r
    }

    pub fn freedom(&self) -> usize {
        self.v_perp.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct LseSolution {
    pub beta: Array1<f64>,
    pub y: Array1<f64>,
    pub z: Array1<f64>,
    pub split: SvdSplit,
    pub interior_residual_norm: f64,
    pub constraint_residual_norm: f64,
    /// Set when the constraints leave no kernel directions (`L = r`).
    pub no_interior_freedom: bool,
    /// Spectrum of the projected matrix `A V_⊥` (or the projected Jacobian
    /// at the last Gauss-Newton step).
    pub projected_singular_values: Vec<f64>,
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// `min ‖Aβ - f‖` subject to `Cβ = g`, by the null-space method. When `g` is
/// outside the range of `C` the constraints hold in the least-squares sense.
pub fn lse_solve(
    a: ArrayView2<f64>,
    f: ArrayView1<f64>,
    c: ArrayView2<f64>,
    g: ArrayView1<f64>,
    rank_tol: f64,
) -> Result<LseSolution> {
    if a.ncols() != c.ncols() {
        return Err(Error::DimensionMismatch { expected: c.ncols(), got: a.ncols() });
    }
    if a.nrows() != f.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: f.len() });
    }
    if c.nrows() != g.len() {
        return Err(Error::DimensionMismatch { expected: c.nrows(), got: g.len() });
    }
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rank tolerance must be positive, got {rank_tol}")));
    }
    let split = SvdSplit::of(c, rank_tol)?;
    let y = split.constrained_coordinates(g);
    let particular = split.v_r.dot(&y);
    let (z, projected_singular_values) = if split.freedom() == 0 {
        (Array1::zeros(0), Vec::new())
    } else {
        let projected = a.dot(&split.v_perp);
        // Right-hand side of the projected problem: f - A V_r y.
        let rhs = &f - &a.dot(&particular);
        let sol = pinv_solve_detailed(projected.view(), rhs.view(), rank_tol)?;
        (sol.x, sol.singular_values)
    };
    let beta = &particular + &split.v_perp.dot(&z);
    let interior_residual_norm = norm(&(a.dot(&beta) - f));
    let constraint_residual_norm = norm(&(c.dot(&beta) - g));
    Ok(LseSolution {
        no_interior_freedom: split.freedom() == 0,
        beta,
        y,
        z,
        split,
        interior_residual_norm,
        constraint_residual_norm,
        projected_singular_values,
    })
}

/// `argmin ½‖Aβ - f‖² + (λ/2)‖Cβ - g‖²` through the stacked system
/// `[A; √λ C] β ≈ [f; √λ g]`.
pub fn penalty_solve(
    a: ArrayView2<f64>,
    f: ArrayView1<f64>,
    c: ArrayView2<f64>,
    g: ArrayView1<f64>,
    lambda: f64,
    rank_tol: f64,
) -> Result<PinvSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("penalty weight must be positive, got {lambda}")));
    }
    if a.ncols() != c.ncols() {
        return Err(Error::DimensionMismatch { expected: c.ncols(), got: a.ncols() });
    }
    let w = lambda.sqrt();
    let stacked = concatenate![Axis(0), a, &c * w];
    let rhs = concatenate![Axis(0), f, &g * w];
    pinv_solve_detailed(stacked.view(), rhs.view(), rank_tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussNewtonOptions {
    pub max_iters: usize,
    /// Largest allowed `‖δz‖`; longer steps are rescaled.
    pub step_cap: f64,
    /// Stop once `‖R‖ / sqrt(rows)` falls to this level.
    pub res_tol: f64,
    pub rank_tol: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        Self { max_iters: 50, step_cap: 10.0, res_tol: 1e-10, rank_tol: DEFAULT_RANK_TOL }
    }
}

/// Steps shorter than this end the iteration.
const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖R(β_k)‖ / sqrt(rows)` before the step.
    pub residual_rms: f64,
    /// `‖δz‖` after capping; zero on the final record when no step was taken.
    pub step_norm: f64,
    pub step_capped: bool,
    pub constraint_residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct GaussNewtonSolution {
    pub solution: LseSolution,
    pub trace: Vec<IterationRecord>,
    /// Number of updates applied.
    pub iterations: usize,
    pub converged: bool,
}

/// Gauss-Newton in the kernel coordinates `z`. Starts from `β₀ = V_r y`
/// (so `z₀ = 0`) and moves only along `V_⊥`, which keeps `Cβ` fixed.
pub fn gauss_newton_constrained<R: Residual>(
    spec: &R,
    c: ArrayView2<f64>,
    g: ArrayView1<f64>,
    opts: &GaussNewtonOptions,
) -> Result<GaussNewtonSolution> {
    if c.ncols() != spec.cols() {
        return Err(Error::DimensionMismatch { expected: spec.cols(), got: c.ncols() });
    }
    if c.nrows() != g.len() {
        return Err(Error::DimensionMismatch { expected: c.nrows(), got: g.len() });
    }
    if !(opts.step_cap > 0.0) {
        return Err(Error::InvalidArgument(format!("step cap must be positive, got {}", opts.step_cap)));
    }
    let split = SvdSplit::of(c, opts.rank_tol)?;
    let y = split.constrained_coordinates(g);
    let mut beta = split.v_r.dot(&y);
    let mut z = Array1::<f64>::zeros(split.freedom());
    let rows_sqrt = (spec.rows().max(1) as f64).sqrt();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut projected_singular_values = Vec::new();

    loop {
        let r = spec.residual(&beta);
        let constraint_residual_norm = norm(&(c.dot(&beta) - g));
        let rms = norm(&r) / rows_sqrt;
        if !rms.is_finite() {
            return Err(Error::Diverged { iteration: iterations });
        }
        let mut record = IterationRecord {
            iteration: iterations,
            residual_rms: rms,
            step_norm: 0.0,
            step_capped: false,
            constraint_residual_norm,
        };
        if rms <= opts.res_tol {
            converged = true;
            trace.push(record);
            break;
        }
        if iterations >= opts.max_iters || split.freedom() == 0 {
            trace.push(record);
            break;
        }
        let jac = spec.jacobian(&beta).dot(&split.v_perp);
        let sol = pinv_solve_detailed(jac.view(), r.view(), opts.rank_tol)?;
        projected_singular_values = sol.singular_values;
        let mut dz = -sol.x;
        let mut step = norm(&dz);
        if !step.is_finite() {
            return Err(Error::Diverged { iteration: iterations });
        }
        if step > opts.step_cap {
            dz *= opts.step_cap / step;
            step = opts.step_cap;
            record.step_capped = true;
        }
        record.step_norm = step;
        trace.push(record);
        beta += &split.v_perp.dot(&dz);
        z += &dz;
        iterations += 1;
        if step <= MIN_STEP {
            let r = spec.residual(&beta);
            let rms = norm(&r) / rows_sqrt;
            converged = rms <= opts.res_tol;
            trace.push(IterationRecord {
                iteration: iterations,
                residual_rms: rms,
                step_norm: 0.0,
                step_capped: false,
                constraint_residual_norm: norm(&(c.dot(&beta) - g)),
            });
            break;
        }
    }

    let r = spec.residual(&beta);
    let solution = LseSolution {
        interior_residual_norm: norm(&r),
        constraint_residual_norm: norm(&(c.dot(&beta) - g)),
        no_interior_freedom: split.freedom() == 0,
        beta,
        y,
        z,
        split,
        projected_singular_values,
    };
    Ok(GaussNewtonSolution { solution, trace, iterations, converged })
}

/// Structured summary of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub problem_id: String,
    pub method: String,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub neurons: usize,
    /// Numerical rank of the boundary matrix (0 when no constraint split is used).
    pub rank: usize,
    pub interior_residual_norm: f64,
    pub constraint_residual_norm: f64,
    pub sigma_max: Option<f64>,
    pub sigma_min: Option<f64>,
    pub iterations: Vec<IterationRecord>,
    pub converged: Option<bool>,
    pub rmse: Option<f64>,
    pub max_abs_error: Option<f64>,
}

impl SolverReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Largest and smallest singular values above the rank threshold.
pub fn spectrum_extremes(singular_values: &[f64], rank_tol: f64) -> (Option<f64>, Option<f64>) {
    let r = numerical_rank(singular_values, rank_tol);
    if r == 0 {
        (None, None)
    } else {
        (Some(singular_values[0]), Some(singular_values[r - 1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&[3.0, 2.0, 1e-16], 1e-12), 2);
        assert_eq!(numerical_rank(&[5.0], 1e-12), 1);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-12), 0);
        assert_eq!(numerical_rank(&[], 1e-12), 0);
    }

    #[test]
    fn pinv_examples() {
        let x = pinv_solve(Array2::eye(2).view(), array![3.0, 4.0].view(), 1e-12).unwrap();
        assert!((&x - &array![3.0, 4.0]).iter().all(|v| v.abs() < 1e-14));
        let x = pinv_solve(array![[1.0], [1.0]].view(), array![0.0, 2.0].view(), 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        let x = pinv_solve(array![[1.0, 1.0]].view(), array![2.0].view(), 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pinv_of_zero_matrix_is_zero() {
        let x = pinv_solve(Array2::zeros((3, 2)).view(), array![1.0, 2.0, 3.0].view(), 1e-12).unwrap();
        assert_eq!(x, Array1::<f64>::zeros(2));
        let x = pinv_solve(Array2::zeros((0, 2)).view(), Array1::zeros(0).view(), 1e-12).unwrap();
        assert_eq!(x, Array1::<f64>::zeros(2));
        assert!(pinv_solve(Array2::eye(2).view(), array![1.0, 2.0].view(), 0.0).is_err());
    }

    #[test]
    fn lse_full_rank_square_constraints() {
        let a = Array2::eye(2);
        let c = Array2::eye(2);
        let sol = lse_solve(a.view(), array![7.0, -3.0].view(), c.view(), array![1.0, 2.0].view(), 1e-12).unwrap();
        assert!(sol.no_interior_freedom);
        assert!((sol.beta[0] - 1.0).abs() < 1e-14 && (sol.beta[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lse_two_by_two_kkt() {
        let sol = lse_solve(
            array![[1.0, -1.0]].view(),
            array![0.0].view(),
            array![[1.0, 1.0]].view(),
            array![2.0].view(),
            1e-12,
        )
        .unwrap();
        assert_eq!(sol.split.rank, 1);
        assert!((sol.beta[0] - 1.0).abs() < 1e-14 && (sol.beta[1] - 1.0).abs() < 1e-14);
        assert!(sol.z[0].abs() < 1e-14);
        let vy = sol.split.v_r.dot(&sol.y);
        assert!((vy[0] - 1.0).abs() < 1e-14 && (vy[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lse_rejects_mismatched_shapes() {
        let r = lse_solve(Array2::eye(2).view(), array![1.0].view(), Array2::eye(2).view(), array![1.0, 1.0].view(), 1e-12);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn penalty_with_no_interior_rows() {
        let c = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let g = array![1.0, 0.0, -2.0];
        let p = penalty_solve(Array2::zeros((0, 2)).view(), Array1::zeros(0).view(), c.view(), g.view(), 7.0, 1e-12).unwrap();
        let direct = pinv_solve(c.view(), g.view(), 1e-12).unwrap();
        assert!((&p.x - &direct).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn penalty_approaches_constrained_solution() {
        let a = array![[1.0, -1.0]];
        let c = array![[1.0, 1.0]];
        let p = penalty_solve(a.view(), array![0.0].view(), c.view(), array![2.0].view(), 1e12, 1e-12).unwrap();
        assert!((p.x[0] - 1.0).abs() < 1e-4 && (p.x[1] - 1.0).abs() < 1e-4);
        assert!(penalty_solve(a.view(), array![0.0].view(), c.view(), array![2.0].view(), 0.0, 1e-12).is_err());
    }

    #[test]
    fn split_without_constraints_is_identity() {
        let split = SvdSplit::of(Array2::zeros((0, 3)).view(), 1e-12).unwrap();
        assert_eq!(split.rank, 0);
        assert_eq!(split.v_perp, Array2::<f64>::eye(3));
    }

    #[test]
    fn report_json_round_trip() {
        let r = SolverReport {
            problem_id: "square-gauss".into(),
            method: "lse".into(),
            n_interior: 881,
            n_boundary: 119,
            neurons: 2000,
            rank: 119,
            interior_residual_norm: 1.25e-9,
            constraint_residual_norm: 3.0e-13,
            sigma_max: Some(12.5),
            sigma_min: None,
            iterations: vec![IterationRecord {
                iteration: 0,
                residual_rms: 0.1,
                step_norm: 2.0,
                step_capped: false,
                constraint_residual_norm: 0.0,
            }],
            converged: Some(true),
            rmse: Some(1.0e-7),
            max_abs_error: None,
        };
        assert_eq!(SolverReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }
}
