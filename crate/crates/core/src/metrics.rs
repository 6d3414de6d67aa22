//! Error measures on held-out points, convergence sweeps and singular
//! spectrum reports.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_boundary_matrix, assemble_operator_matrix};
use crate::error::{Error, Result};
use crate::geometry::{allocate_counts, PointRule, PointSet};
use crate::io::format_float;
use crate::pipeline::{build_layer, solve_problem, training_points, Method, Ratio, SolveOptions, TrainedModel};
use crate::problems::{lookup, BenchmarkProblem, Operator};
use crate::seed::{derive_seed, TEST_POINTS};
use crate::solvers::{numerical_rank, singular_values, GaussNewtonOptions, SvdSplit};
use crate::xtfc::{xtfc_modified_feature_matrix, CoonsPatch};

pub const DEFAULT_TEST_POINTS: usize = 10_000;

fn mean_square(e: &Array1<f64>) -> f64 {
    e.dot(e) / e.len() as f64
}

/// `sqrt(mean interior squared error + mean boundary squared error)`.
pub fn rmse_from_errors(interior: &Array1<f64>, boundary: &Array1<f64>) -> Result<f64> {
    if interior.is_empty() || boundary.is_empty() {
        return Err(Error::InvalidArgument("rmse needs at least one interior and one boundary test point".into()));
    }
    Ok((mean_square(interior) + mean_square(boundary)).sqrt())
}

/// Held-out points drawn like training points from the test sub-seed.
pub fn test_points(problem: &BenchmarkProblem, n_interior: usize, n_boundary: usize, seed: u64) -> Result<PointSet> {
    PointSet::sample(&problem.domain, problem.constraint_domain(), n_interior, n_boundary, derive_seed(seed, TEST_POINTS))
}

/// Test points with the training allocation rule applied to `total`.
pub fn default_test_points(problem: &BenchmarkProblem, total: usize, rule: PointRule, seed: u64) -> Result<PointSet> {
    let alloc = allocate_counts(total, rule)?;
    test_points(problem, alloc.n_interior, alloc.n_boundary, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub rmse: f64,
    pub max_abs_error: f64,
    pub interior_mse: f64,
    pub boundary_mse: f64,
    /// RMS error at interior test points inside the constraint curve
    /// (extrapolation problems only).
    pub inside_rms: Option<f64>,
    /// RMS error at interior test points outside the constraint curve.
    pub outside_rms: Option<f64>,
}

pub fn evaluate(model: &TrainedModel, problem: &BenchmarkProblem, test: &PointSet) -> Result<ErrorSummary> {
    let errors = |pts: ArrayView2<f64>| -> Result<Array1<f64>> {
        let pred = model.predict(pts)?;
        Ok(pts.rows().into_iter().zip(pred.iter()).map(|(x, p)| p - problem.exact.value(x.as_slice().unwrap())).collect())
    };
    let ei = errors(test.interior.view())?;
    let eb = errors(test.boundary.view())?;
    let rmse = rmse_from_errors(&ei, &eb)?;
    let max_abs_error = ei.iter().chain(eb.iter()).fold(0.0_f64, |m, e| m.max(e.abs()));
    let (mut inside_rms, mut outside_rms) = (None, None);
    if let Some(curve) = &problem.constraint_curve {
        let (mut sin, mut nin, mut sout, mut nout) = (0.0, 0usize, 0.0, 0usize);
        for (x, e) in test.interior.rows().into_iter().zip(ei.iter()) {
            if curve.contains(x.as_slice().unwrap())? {
                sin += e * e;
                nin += 1;
            } else {
                sout += e * e;
                nout += 1;
            }
        }
        inside_rms = (nin > 0).then(|| (sin / nin as f64).sqrt());
        outside_rms = (nout > 0).then(|| (sout / nout as f64).sqrt());
    }
    Ok(ErrorSummary { rmse, max_abs_error, interior_mse: mean_square(&ei), boundary_mse: mean_square(&eb), inside_rms, outside_rms })
}

/// RMSE of `model` on `n_interior + n_boundary` fresh test points.
pub fn rmse(model: &TrainedModel, problem: &BenchmarkProblem, n_interior: usize, n_boundary: usize, seed: u64) -> Result<f64> {
    Ok(evaluate(model, problem, &test_points(problem, n_interior, n_boundary, seed)?)?.rmse)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub problem_id: String,
    pub method: Method,
    pub rule: PointRule,
    pub ratio: Ratio,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub half_range: f64,
    pub rank_tol: f64,
    pub gn: GaussNewtonOptions,
    pub test_points: usize,
}

impl ConvergenceStudy {
    pub fn new(problem_id: &str, method: Method, n_grid: Vec<usize>, seeds: Vec<u64>) -> Self {
        let base = SolveOptions::new(method, 0, 0);
        Self {
            problem_id: problem_id.to_string(),
            method,
            rule: base.rule,
            ratio: base.ratio,
            n_grid,
            seeds,
            half_range: base.half_range,
            rank_tol: base.rank_tol,
            gn: base.gn,
            test_points: DEFAULT_TEST_POINTS,
        }
    }

    pub fn options(&self, n_total: usize, seed: u64) -> SolveOptions {
        SolveOptions {
            method: self.method,
            n_total,
            rule: self.rule,
            ratio: self.ratio,
            half_range: self.half_range,
            seed,
            rank_tol: self.rank_tol,
            gn: self.gn,
        }
    }

    /// Cells in output order.
    pub fn keys(&self) -> Vec<(usize, u64)> {
        let mut keys: Vec<_> = self.n_grid.iter().flat_map(|&n| self.seeds.iter().map(move |&s| (n, s))).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub rmse: f64,
    pub constraint_residual: f64,
    pub interior_residual: f64,
    pub wall_ms: f64,
}

/// One `(N, seed)` run of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub neurons: usize,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub seed: u64,
    pub outcome: std::result::Result<CellMetrics, String>,
}

impl Cell {
    pub fn key(&self) -> (usize, u64) {
        (self.n, self.seed)
    }
}

pub fn run_cell(problem: &BenchmarkProblem, study: &ConvergenceStudy, n: usize, seed: u64) -> Cell {
    let opts = study.options(n, seed);
    let neurons = opts.ratio.neurons(n);
    let (n_interior, n_boundary) = match (opts.method, allocate_counts(n, opts.rule)) {
        (Method::Xtfc, _) => (n, 0),
        (_, Ok(a)) => (a.n_interior, a.n_boundary),
        (_, Err(_)) => (0, 0),
    };
    let start = Instant::now();
    let outcome = (|| -> Result<CellMetrics> {
        let solved = solve_problem(problem, &opts)?;
        let test = default_test_points(problem, study.test_points, opts.rule, seed)?;
        let summary = evaluate(&solved.model, problem, &test)?;
        Ok(CellMetrics {
            rmse: summary.rmse,
            constraint_residual: solved.report.constraint_residual_norm,
            interior_residual: solved.report.interior_residual_norm,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    })()
    .map_err(|e| e.to_string());
    Cell { n, neurons, n_interior, n_boundary, seed, outcome }
}

/// Runs every missing `(N, seed)` cell, on up to `jobs` threads. Cells in
/// `done` are kept as they are. `on_cell` sees each new cell as it finishes.
/// The result is ordered by `(N, seed)`.
pub fn run_convergence(
    study: &ConvergenceStudy,
    jobs: usize,
    done: &[Cell],
    on_cell: &(dyn Fn(&Cell) + Sync),
) -> Result<ConvergenceTable> {
    let problem = lookup(&study.problem_id)?;
    crate::pipeline::check_compatibility(&problem, study.method)?;
    if study.seeds.is_empty() || study.n_grid.is_empty() {
        return Err(Error::InvalidArgument("study needs at least one N and one seed".into()));
    }
    let mut cells: BTreeMap<(usize, u64), Cell> = done.iter().map(|c| (c.key(), c.clone())).collect();
    let todo: Vec<(usize, u64)> = study.keys().into_iter().filter(|k| !cells.contains_key(k)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let fresh: Vec<Cell> = pool.install(|| {
        todo.par_iter()
            .map(|&(n, seed)| {
                let cell = run_cell(&problem, study, n, seed);
                on_cell(&cell);
                cell
            })
            .collect()
    });
    for c in fresh {
        cells.insert(c.key(), c);
    }
    Ok(ConvergenceTable { cells: cells.into_values().collect() })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTable {
    pub cells: Vec<Cell>,
}

pub const CONVERGENCE_HEADER: [&str; 10] =
    ["N", "L", "N_I", "N_B", "seed", "rmse", "constraint_residual", "interior_residual", "wall_ms", "error"];

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

impl ConvergenceTable {
    /// Median RMSE over successful seeds, per `N`.
    pub fn medians(&self) -> Vec<(usize, Option<f64>)> {
        let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for c in &self.cells {
            let entry = by_n.entry(c.n).or_default();
            if let Ok(m) = &c.outcome {
                entry.push(m.rmse);
            }
        }
        by_n.into_iter().map(|(n, v)| (n, median(v))).collect()
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(CONVERGENCE_HEADER)?;
        for c in &self.cells {
            let mut rec = vec![c.n.to_string(), c.neurons.to_string(), c.n_interior.to_string(), c.n_boundary.to_string(), c.seed.to_string()];
            match &c.outcome {
                Ok(m) => {
                    rec.extend([m.rmse, m.constraint_residual, m.interior_residual].map(format_float));
                    rec.push(format!("{:.3}", m.wall_ms));
                    rec.push(String::new());
                }
                Err(reason) => {
                    rec.extend(std::iter::repeat_n(String::new(), 4));
                    rec.push(reason.clone());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a table written by [`write_csv`](Self::write_csv), possibly cut
    /// short. A trailing partial line is ignored; anything else malformed is
    /// an error.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text).map_err(|e| Error::Decode(e.to_string()))?;
        if !text.is_empty() && !text.ends_with('\n') {
            let cut = text.rfind('\n').map_or(0, |i| i + 1);
            text.truncate(cut);
        }
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::Decode(e.to_string()))?.clone();
        if text.is_empty() {
            return Ok(Self::default());
        }
        if header.iter().collect::<Vec<_>>() != CONVERGENCE_HEADER {
            return Err(Error::Decode(format!("unexpected convergence header {:?}", header)));
        }
        let mut cells = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Decode(e.to_string()))?;
            let int = |i: usize| -> Result<u64> {
                rec[i].parse::<u64>().map_err(|_| Error::Decode(format!("bad integer `{}` in column {}", &rec[i], CONVERGENCE_HEADER[i])))
            };
            let float = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|_| Error::Decode(format!("bad number `{}` in column {}", &rec[i], CONVERGENCE_HEADER[i])))
            };
            let size = |i: usize| -> Result<usize> { usize::try_from(int(i)?).map_err(|e| Error::Decode(e.to_string())) };
            let outcome = if rec[9].is_empty() {
                Ok(CellMetrics { rmse: float(5)?, constraint_residual: float(6)?, interior_residual: float(7)?, wall_ms: float(8)? })
            } else {
                Err(rec[9].to_string())
            };
            cells.push(Cell { n: size(0)?, neurons: size(1)?, n_interior: size(2)?, n_boundary: size(3)?, seed: int(4)?, outcome });
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &cells {
            if !seen.insert(c.key()) {
                return Err(Error::Decode(format!("duplicate cell N={} seed={}", c.n, c.seed)));
            }
        }
        cells.sort_by_key(|c| c.key());
        Ok(Self { cells })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub label: String,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// `σ_1 / σ_r` with `r` the numerical rank; infinite when `r = 0`.
    pub effective_condition: f64,
}

impl Spectrum {
    pub fn from_matrix(label: &str, m: ArrayView2<f64>, rank_tol: f64) -> Result<Self> {
        let singular_values = singular_values(m)?;
        let rank = numerical_rank(&singular_values, rank_tol);
        let effective_condition = if rank == 0 { f64::INFINITY } else { singular_values[0] / singular_values[rank - 1] };
        Ok(Self { label: label.to_string(), singular_values, rank, effective_condition })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub problem_id: String,
    pub n_total: usize,
    pub neurons: usize,
    pub spectra: Vec<Spectrum>,
}

impl SpectrumReport {
    pub fn get(&self, label: &str) -> Option<&Spectrum> {
        self.spectra.iter().find(|s| s.label == label)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["label", "index", "sigma"])?;
        for s in &self.spectra {
            for (i, v) in s.singular_values.iter().enumerate() {
                w.write_record([s.label.clone(), i.to_string(), format_float(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// The matrices the three methods actually factor, built on one layer and
/// one point set: `original` is the interior operator matrix `A`, `pielm`
/// stacks `[A; C]` with unit weight, `lse-elm` is `A V_⊥`, and `xtfc` is the
/// modified-feature operator matrix at the same interior points (boxes only).
pub fn spectrum_report(problem: &BenchmarkProblem, opts: &SolveOptions) -> Result<SpectrumReport> {
    let Operator::Linear(op) = &problem.operator else {
        return Err(Error::InvalidArgument(format!("spectrum report needs a linear problem, `{}` is nonlinear", problem.id)));
    };
    let lse_opts = SolveOptions { method: Method::Lse, ..*opts };
    let points = training_points(problem, &lse_opts)?;
    let layer = build_layer(problem, &lse_opts)?;
    let a = assemble_operator_matrix(&layer, op, points.interior.view())?;
    let c = assemble_boundary_matrix(&layer, &problem.boundary_op, points.boundary.view())?;
    let split = SvdSplit::of(c.view(), opts.rank_tol)?;
    let stacked = ndarray::concatenate![Axis(0), a, c];
    let projected: Array2<f64> = a.dot(&split.v_perp);
    let mut spectra = vec![
        Spectrum::from_matrix("original", a.view(), opts.rank_tol)?,
        Spectrum::from_matrix("pielm", stacked.view(), opts.rank_tol)?,
        Spectrum::from_matrix("lse-elm", projected.view(), opts.rank_tol)?,
    ];
    if problem.domain.as_rect().is_some() && !problem.is_extrapolation() {
        let patch = CoonsPatch::for_domain(&problem.domain)?;
        let m = xtfc_modified_feature_matrix(&layer, &patch, points.interior.view(), op)?;
        spectra.push(Spectrum::from_matrix("xtfc", m.view(), opts.rank_tol)?);
    }
    Ok(SpectrumReport { problem_id: problem.id.to_string(), n_total: opts.n_total, neurons: layer.neurons(), spectra })
}

/// Regular grid over the bounding box, keeping points of the closed domain.
pub fn field_grid(problem: &BenchmarkProblem, per_axis: usize) -> Result<Array2<f64>> {
    if per_axis < 2 {
        return Err(Error::InvalidArgument("field grid needs at least 2 points per axis".into()));
    }
    let (lo, hi) = problem.domain.bounding_box();
    let d = lo.len();
    let total = per_axis.pow(d as u32);
    let mut rows = Vec::new();
    let mut p = vec![0.0; d];
    for idx in 0..total {
        let mut rest = idx;
        for k in 0..d {
            let i = rest % per_axis;
            rest /= per_axis;
            p[k] = lo[k] + (hi[k] - lo[k]) * i as f64 / (per_axis - 1) as f64;
        }
        if problem.domain.contains_closed(&p)? {
            rows.extend_from_slice(&p);
        }
    }
    let n = rows.len() / d;
    Array2::from_shape_vec((n, d), rows).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Coordinate column names: `x, y` in the plane, `x, t` / `x, y, t` for
/// space-time problems.
pub fn coordinate_names(problem: &BenchmarkProblem) -> Vec<&'static str> {
    match (&problem.domain, problem.domain.dim()) {
        (crate::geometry::Domain::SpaceTime(_), 2) => vec!["x", "t"],
        (crate::geometry::Domain::SpaceTime(_), _) => vec!["x", "y", "t"],
        (_, 1) => vec!["x"],
        (_, 2) => vec!["x", "y"],
        _ => vec!["x", "y", "z"],
    }
}

/// CSV with columns `x, y[, t], u_pred, u_exact, abs_err`.
pub fn write_field_csv<W: Write>(out: W, model: &TrainedModel, problem: &BenchmarkProblem, points: ArrayView2<f64>) -> Result<()> {
    let pred = model.predict(points)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header: Vec<&str> = coordinate_names(problem);
    header.extend(["u_pred", "u_exact", "abs_err"]);
    w.write_record(&header)?;
    for (x, p) in points.rows().into_iter().zip(pred.iter()) {
        let exact = problem.exact.value(x.as_slice().unwrap());
        let mut rec: Vec<String> = x.iter().map(|v| format_float(*v)).collect();
        rec.extend([*p, exact, (p - exact).abs()].map(format_float));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_formula_examples() {
        let zero = Array1::<f64>::zeros(5);
        assert_eq!(rmse_from_errors(&zero, &zero).unwrap(), 0.0);
        let c = 0.3;
        let off_i = Array1::from_elem(7, c);
        let off_b = Array1::from_elem(3, -c);
        assert!((rmse_from_errors(&off_i, &off_b).unwrap() - 2f64.sqrt() * c).abs() < 1e-15);
        assert!((rmse_from_errors(&zero, &off_b).unwrap() - c).abs() < 1e-15);
        assert!(rmse_from_errors(&Array1::zeros(0), &off_b).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }

    fn sample_table() -> ConvergenceTable {
        ConvergenceTable {
            cells: vec![
                Cell {
                    n: 100,
                    neurons: 200,
                    n_interior: 66,
                    n_boundary: 34,
                    seed: 1,
                    outcome: Ok(CellMetrics { rmse: 1.5e-3, constraint_residual: 2e-14, interior_residual: 0.25, wall_ms: 12.5 }),
                },
                Cell { n: 100, neurons: 200, n_interior: 66, n_boundary: 34, seed: 2, outcome: Err("singular, \"bad\"".into()) },
            ],
        }
    }

    #[test]
    fn convergence_csv_round_trip() {
        let t = sample_table();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("N,L,N_I,N_B,seed,rmse,constraint_residual,interior_residual,wall_ms,error\n"));
        assert_eq!(ConvergenceTable::read_csv(buf.as_slice()).unwrap(), t);
        // a line cut mid-write is dropped
        let cut = &buf[..buf.len() - 5];
        assert_eq!(ConvergenceTable::read_csv(cut).unwrap().cells.len(), 1);
        assert!(ConvergenceTable::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn field_grid_respects_domain() {
        let p = lookup("lshape-p1").unwrap();
        let g = field_grid(&p, 21).unwrap();
        assert!(g.nrows() < 21 * 21);
        assert!(g.rows().into_iter().all(|r| p.domain.contains_closed(r.as_slice().unwrap()).unwrap()));
        let names = coordinate_names(&lookup("burgers-fisher-1d").unwrap());
        assert_eq!(names, vec!["x", "t"]);
    }

    #[test]
    fn spectrum_shapes() {
        let p = lookup("square-gauss").unwrap();
        let opts = SolveOptions::new(Method::Lse, 40, 3);
        let rep = spectrum_report(&p, &opts).unwrap();
        assert_eq!(rep.spectra.len(), 4);
        for s in &rep.spectra {
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
            assert!(s.singular_values.iter().all(|&v| v >= 0.0));
        }
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("label,index,sigma\n"));
    }
}
