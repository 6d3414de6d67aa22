//! End-to-end training of a catalog problem: points, layer, assembly, solve.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_boundary_matrix, assemble_operator_matrix, assemble_rhs, build_nonlinear_residual, PenaltyResidual};
use crate::error::{Error, Result};
use crate::features::{MultiIndex, OutputWeights, RandomFeatureLayer, DEFAULT_HALF_RANGE};
use crate::field::ScalarField;
use crate::geometry::{allocate_counts, PointRule, PointSet};
use crate::io::ByteReader;
use crate::problems::{lookup, BenchmarkProblem, Operator};
use crate::seed::{derive_seed, rng_from_seed, LAYER, POINTS};
use crate::solvers::{
    gauss_newton_constrained, lse_solve, penalty_solve, spectrum_extremes, GaussNewtonOptions, IterationRecord, SolverReport,
    DEFAULT_RANK_TOL,
};
use crate::xtfc::{xtfc_solve, CoonsPatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lse,
    Pielm { lambda: f64 },
    Xtfc,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Lse => "lse",
            Method::Pielm { .. } => "pielm",
            Method::Xtfc => "xtfc",
        }
    }

    fn code(&self) -> u8 {
        match self {
            Method::Lse => 0,
            Method::Pielm { .. } => 1,
            Method::Xtfc => 2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Pielm { lambda } => write!(f, "pielm({lambda})"),
            m => f.write_str(m.name()),
        }
    }
}

/// How the neuron count follows the total point count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ratio {
    /// `L = N / 2`
    Under,
    /// `L = N`
    Square,
    /// `L = 2N`
    Over,
    /// `L` fixed regardless of `N`.
    Fixed(usize),
}

impl Ratio {
    pub fn neurons(&self, total: usize) -> usize {
        match *self {
            Ratio::Under => (total / 2).max(1),
            Ratio::Square => total.max(1),
            Ratio::Over => 2 * total.max(1),
            Ratio::Fixed(l) => l,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Under => f.write_str("under"),
            Ratio::Square => f.write_str("square"),
            Ratio::Over => f.write_str("over"),
            Ratio::Fixed(l) => write!(f, "fixed({l})"),
        }
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "under" => Ok(Ratio::Under),
            "square" => Ok(Ratio::Square),
            "over" => Ok(Ratio::Over),
            _ => s
                .strip_prefix("fixed(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|r| r.trim().parse().ok())
                .filter(|&l: &usize| l > 0)
                .map(Ratio::Fixed)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown ratio `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub method: Method,
    pub n_total: usize,
    pub rule: PointRule,
    pub ratio: Ratio,
    pub half_range: f64,
    pub seed: u64,
    pub rank_tol: f64,
    pub gn: GaussNewtonOptions,
}

impl SolveOptions {
    pub fn new(method: Method, n_total: usize, seed: u64) -> Self {
        Self {
            method,
            n_total,
            rule: PointRule::Sqrt,
            ratio: Ratio::Over,
            half_range: DEFAULT_HALF_RANGE,
            seed,
            rank_tol: DEFAULT_RANK_TOL,
            gn: GaussNewtonOptions::default(),
        }
    }
}

/// Rejects method/problem pairs the methods cannot handle.
pub fn check_compatibility(problem: &BenchmarkProblem, method: Method) -> Result<()> {
    match method {
        Method::Xtfc => {
            if problem.domain.as_rect().is_none() {
                return Err(Error::UnsupportedDomain(format!("xtfc requires box domain, `{}` is {}", problem.id, problem.domain.kind())));
            }
            if problem.is_extrapolation() {
                return Err(Error::UnsupportedDomain(format!("xtfc cannot impose data on the interior curve of `{}`", problem.id)));
            }
            if !problem.is_linear() {
                return Err(Error::UnsupportedDomain(format!("xtfc supports linear operators only, `{}` is nonlinear", problem.id)));
            }
            if !problem.boundary_op.is_dirichlet() {
                return Err(Error::UnsupportedDomain("xtfc supports Dirichlet data only".into()));
            }
        }
        Method::Pielm { lambda } => {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidArgument(format!("penalty weight must be positive, got {lambda}")));
            }
        }
        Method::Lse => {}
    }
    Ok(())
}

/// A trained ansatz, optionally carrying the XTFC correction.
#[derive(Clone)]
pub struct TrainedModel {
    pub layer: RandomFeatureLayer,
    pub beta: OutputWeights,
    pub xtfc: Option<(CoonsPatch, Arc<dyn ScalarField>)>,
}

impl TrainedModel {
    pub fn predict(&self, points: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.predict_derivative(points, MultiIndex::ZERO)
    }

    pub fn predict_derivative(&self, points: ArrayView2<f64>, alpha: MultiIndex) -> Result<Array1<f64>> {
        match &self.xtfc {
            None => self.layer.predict(&self.beta, points, alpha),
            Some((patch, g)) => {
                let model = crate::xtfc::XtfcModel {
                    layer: self.layer.clone(),
                    beta: self.beta.clone(),
                    patch: patch.clone(),
                    boundary_data: g.clone(),
                };
                model.predict(points, alpha)
            }
        }
    }
}

pub struct SolveOutcome {
    pub model: TrainedModel,
    pub points: PointSet,
    pub report: SolverReport,
}

/// Training points for a run: interior from the domain, boundary from the
/// constraint curve. XTFC uses interior points only.
pub fn training_points(problem: &BenchmarkProblem, opts: &SolveOptions) -> Result<PointSet> {
    let seed = derive_seed(opts.seed, POINTS);
    if opts.method == Method::Xtfc {
        let mut rng = rng_from_seed(seed);
        let interior = problem.domain.sample_interior(opts.n_total, &mut rng)?;
        return Ok(PointSet { interior, boundary: Array2::zeros((0, problem.domain.dim())), seed });
    }
    let alloc = allocate_counts(opts.n_total, opts.rule)?;
    PointSet::sample(&problem.domain, problem.constraint_domain(), alloc.n_interior, alloc.n_boundary, seed)
}

pub fn build_layer(problem: &BenchmarkProblem, opts: &SolveOptions) -> Result<RandomFeatureLayer> {
    let neurons = opts.ratio.neurons(opts.n_total);
    if neurons == 0 {
        return Err(Error::InvalidArgument("neuron count must be positive".into()));
    }
    RandomFeatureLayer::new(neurons, problem.domain.dim(), opts.half_range, derive_seed(opts.seed, LAYER))
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

pub fn solve_problem(problem: &BenchmarkProblem, opts: &SolveOptions) -> Result<SolveOutcome> {
    check_compatibility(problem, opts.method)?;
    let points = training_points(problem, opts)?;
    let layer = build_layer(problem, opts)?;
    let mut report = SolverReport {
        problem_id: problem.id.to_string(),
        method: opts.method.name().to_string(),
        n_interior: points.interior.nrows(),
        n_boundary: points.boundary.nrows(),
        neurons: layer.neurons(),
        rank: 0,
        interior_residual_norm: 0.0,
        constraint_residual_norm: 0.0,
        sigma_max: None,
        sigma_min: None,
        iterations: Vec::new(),
        converged: None,
        rmse: None,
        max_abs_error: None,
    };
    let source = problem.source.clone();
    let boundary_data = |x: &[f64]| problem.boundary_data(x);

    let (beta, xtfc) = match (&problem.operator, opts.method) {
        (Operator::Linear(op), Method::Xtfc) => {
            let sol = xtfc_solve(&problem.domain, &layer, op, source.as_ref(), problem.exact.clone(), points.interior.view(), opts.rank_tol)?;
            report.rank = sol.pinv.rank;
            report.interior_residual_norm = sol.residual_norm;
            (report.sigma_max, report.sigma_min) = spectrum_extremes(&sol.pinv.singular_values, opts.rank_tol);
            (sol.pinv.x, Some((sol.model.patch, sol.model.boundary_data)))
        }
        (Operator::Linear(op), method) => {
            let a = assemble_operator_matrix(&layer, op, points.interior.view())?;
            let f = assemble_rhs(source.as_ref(), points.interior.view())?;
            let c = assemble_boundary_matrix(&layer, &problem.boundary_op, points.boundary.view())?;
            let g = assemble_rhs(&boundary_data, points.boundary.view())?;
            if let Method::Pielm { lambda } = method {
                let sol = penalty_solve(a.view(), f.view(), c.view(), g.view(), lambda, opts.rank_tol)?;
                report.rank = sol.rank;
                report.interior_residual_norm = norm(&(a.dot(&sol.x) - &f));
                report.constraint_residual_norm = norm(&(c.dot(&sol.x) - &g));
                (report.sigma_max, report.sigma_min) = spectrum_extremes(&sol.singular_values, opts.rank_tol);
                (sol.x, None)
            } else {
                let sol = lse_solve(a.view(), f.view(), c.view(), g.view(), opts.rank_tol)?;
                report.rank = sol.split.rank;
                report.interior_residual_norm = sol.interior_residual_norm;
                report.constraint_residual_norm = sol.constraint_residual_norm;
                (report.sigma_max, report.sigma_min) = spectrum_extremes(&sol.projected_singular_values, opts.rank_tol);
                (sol.beta, None)
            }
        }
        (Operator::Nonlinear(form), method) => {
            let spec = build_nonlinear_residual(&layer, points.interior.view(), form.clone(), source.as_ref())?;
            let c = assemble_boundary_matrix(&layer, &problem.boundary_op, points.boundary.view())?;
            let g = assemble_rhs(&boundary_data, points.boundary.view())?;
            let gn = GaussNewtonOptions { rank_tol: opts.rank_tol, ..opts.gn };
            let sol = if let Method::Pielm { lambda } = method {
                let stacked = PenaltyResidual { inner: &spec, c: &c, g: &g, lambda };
                let none = Array2::zeros((0, layer.neurons()));
                let mut sol = gauss_newton_constrained(&stacked, none.view(), Array1::zeros(0).view(), &gn)?;
                sol.solution.split.rank = 0;
                sol.solution.constraint_residual_norm = norm(&(c.dot(&sol.solution.beta) - &g));
                sol
            } else {
                gauss_newton_constrained(&spec, c.view(), g.view(), &gn)?
            };
            let r = crate::assembly::Residual::residual(&spec, &sol.solution.beta);
            report.rank = sol.solution.split.rank;
            report.interior_residual_norm = norm(&r);
            report.constraint_residual_norm = sol.solution.constraint_residual_norm;
            (report.sigma_max, report.sigma_min) = spectrum_extremes(&sol.solution.projected_singular_values, opts.rank_tol);
            report.iterations = sol.trace.clone();
            report.converged = Some(sol.converged);
            (sol.solution.beta, None)
        }
    };
    let model = TrainedModel { layer, beta: OutputWeights(beta), xtfc };
    Ok(SolveOutcome { model, points, report })
}

/// Iteration trace of a nonlinear solve, empty for linear ones.
pub fn trace(outcome: &SolveOutcome) -> &[IterationRecord] {
    &outcome.report.iterations
}

const MODEL_MAGIC: &[u8; 4] = b"ELMM";
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAX_PROBLEM_ID: usize = 256;

/// Stored model: enough to rebuild predictions for a catalog problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub problem_id: String,
    pub method: Method,
    /// SHA-256 of the configuration that produced the model.
    pub config_digest: [u8; 32],
    pub layer: RandomFeatureLayer,
    pub beta: Array1<f64>,
}

impl ModelFile {
    /// `magic | version u32 | method u8 | lambda f64 | id_len u32 | id |
    /// digest[32] | layer record | beta_len u64 | beta`, little endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.push(self.method.code());
        let lambda = match self.method {
            Method::Pielm { lambda } => lambda,
            _ => 0.0,
        };
        out.extend_from_slice(&lambda.to_le_bytes());
        out.extend_from_slice(&(self.problem_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.problem_id.as_bytes());
        out.extend_from_slice(&self.config_digest);
        out.extend_from_slice(&self.layer.encode());
        out.extend_from_slice(&(self.beta.len() as u64).to_le_bytes());
        for v in &self.beta {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Decode("bad model magic".into()));
        }
        let version = r.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Decode(format!("unsupported model format version {version}")));
        }
        let code = r.u8()?;
        let lambda = r.f64()?;
        let method = match code {
            0 if lambda.to_bits() == 0 => Method::Lse,
            1 if lambda > 0.0 && lambda.is_finite() => Method::Pielm { lambda },
            2 if lambda.to_bits() == 0 => Method::Xtfc,
            _ => return Err(Error::Decode(format!("bad method code {code} / lambda {lambda}"))),
        };
        let id_len = r.u32()? as usize;
        if id_len > MAX_PROBLEM_ID {
            return Err(Error::Decode(format!("problem id of {id_len} bytes is too long")));
        }
        let problem_id = std::str::from_utf8(r.take(id_len)?).map_err(|e| Error::Decode(e.to_string()))?.to_string();
        let mut config_digest = [0u8; 32];
        config_digest.copy_from_slice(r.take(32)?);
        let start = r.position();
        let (layer, used) = RandomFeatureLayer::decode_prefix(&bytes[start..])?;
        r.take(used)?;
        let n = r.u64()?;
        if n != layer.neurons() as u64 {
            return Err(Error::Decode(format!("beta has {n} entries for {} neurons", layer.neurons())));
        }
        let beta = Array1::from(r.f64s(n as usize)?);
        if r.remaining() != 0 {
            return Err(Error::Decode(format!("{} trailing bytes after model", r.remaining())));
        }
        Ok(Self { problem_id, method, config_digest, layer, beta })
    }

    /// Rebuilds the predictor; XTFC models take their patch and boundary data
    /// from the catalog entry.
    pub fn into_model(self) -> Result<TrainedModel> {
        let xtfc = if self.method == Method::Xtfc {
            let problem = lookup(&self.problem_id)?;
            Some((CoonsPatch::for_domain(&problem.domain)?, problem.exact.clone()))
        } else {
            None
        };
        if self.layer.neurons() != self.beta.len() {
            return Err(Error::DimensionMismatch { expected: self.layer.neurons(), got: self.beta.len() });
        }
        Ok(TrainedModel { layer: self.layer, beta: OutputWeights(self.beta), xtfc })
    }
}
