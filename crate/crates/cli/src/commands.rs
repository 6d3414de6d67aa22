//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use elmpde::metrics::{
    default_test_points, evaluate, field_grid, run_convergence, spectrum_report, write_field_csv, Cell, ConvergenceTable,
};
use elmpde::pipeline::{check_compatibility, solve_problem, ModelFile, TrainedModel};
use elmpde::problems::{catalog, lookup, BenchmarkProblem};
use elmpde::solvers::SolverReport;
use serde::Serialize;

use crate::config::{hex, RunConfig};
use crate::{CatalogFilter, Cli, Command, Failure, EXIT_OK, EXIT_PARTIAL};

pub const REPORT_FILE: &str = "report.json";
pub const MODEL_FILE: &str = "model.elmm";
pub const FIELD_FILE: &str = "field.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
/// Settings of the study that produced `convergence.csv`, checked on resume.
pub const STUDY_FILE: &str = "convergence.toml";
pub const SPECTRUM_FILE: &str = "spectrum.csv";

type Out<'a> = &'a mut (dyn Write + Send);

/// Contents of `report.json`.
#[derive(Debug, Serialize)]
pub struct SolveRecord<'a> {
    pub config_digest: String,
    pub report: &'a SolverReport,
}

pub fn dispatch(cli: Cli, out: Out<'_>) -> Result<i32, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            RunConfig::parse(&text).map_err(Failure::config)?
        }
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.out_dir {
        cfg.outputs.dir = dir.clone();
    }
    match cli.command {
        Command::Catalog { filter } => cmd_catalog(filter, out),
        Command::Solve { overrides, model, field } => {
            overrides.apply(&mut cfg);
            cfg.outputs.model |= model;
            cfg.outputs.field |= field;
            cmd_solve(&cfg, out)
        }
        Command::Converge { overrides, n_grid, seeds, jobs, resume } => {
            overrides.apply(&mut cfg);
            if let Some(n) = n_grid {
                cfg.study.n_grid = n;
            }
            if let Some(s) = seeds {
                cfg.study.seeds = s;
            }
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            cmd_converge(&cfg, jobs, resume, out)
        }
        Command::Spectrum { overrides } => {
            overrides.apply(&mut cfg);
            cmd_spectrum(&cfg, out)
        }
        Command::ExportField { model, resolution, output } => {
            if let Some(r) = resolution {
                cfg.outputs.field_resolution = r;
            }
            let output = output.unwrap_or_else(|| cfg.outputs.dir.join(FIELD_FILE));
            cmd_export_field(&cfg, &model, &output, out)
        }
    }
}

fn say(out: Out<'_>, text: std::fmt::Arguments<'_>) -> Result<(), Failure> {
    out.write_fmt(text).map_err(|e| Failure::io(Path::new("<stdout>"), e))
}

/// Writes through a temporary file and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Failure::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Failure::io(path, e))
}

fn checked(cfg: &RunConfig) -> Result<BenchmarkProblem, Failure> {
    cfg.validate().map_err(Failure::config)?;
    let problem = lookup(&cfg.problem).map_err(Failure::config)?;
    check_compatibility(&problem, cfg.method()).map_err(Failure::config)?;
    Ok(problem)
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> elmpde::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| Failure::new(crate::EXIT_IO, format!("cannot format table: {e}")))?;
    Ok(buf)
}

pub fn cmd_catalog(filter: Option<CatalogFilter>, out: Out<'_>) -> Result<i32, Failure> {
    say(out, format_args!("id\tdomain\tclass\tnonlinear\n"))?;
    for p in catalog() {
        let keep = match filter {
            None => true,
            Some(CatalogFilter::Linear) => p.is_linear(),
            Some(CatalogFilter::Nonlinear) => !p.is_linear(),
        };
        if keep {
            say(out, format_args!("{}\n", p.summary_line()))?;
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_solve(cfg: &RunConfig, out: Out<'_>) -> Result<i32, Failure> {
    let problem = checked(cfg)?;
    let solved = solve_problem(&problem, &cfg.solve_options()).map_err(Failure::solve)?;
    let test = default_test_points(&problem, cfg.study.test_points, cfg.point_rule, cfg.seed).map_err(Failure::solve)?;
    let errors = evaluate(&solved.model, &problem, &test).map_err(Failure::solve)?;
    let mut report = solved.report.clone();
    report.rmse = Some(errors.rmse);
    report.max_abs_error = Some(errors.max_abs_error);

    let dir = &cfg.outputs.dir;
    let record = SolveRecord { config_digest: hex(&cfg.digest()), report: &report };
    let mut json = serde_json::to_string_pretty(&record).map_err(Failure::solve)?;
    json.push('\n');
    write_atomic(&dir.join(REPORT_FILE), json.as_bytes())?;

    say(out, format_args!("problem {}  method {}\n", problem.id, cfg.method()))?;
    say(out, format_args!("N_I {}  N_B {}  L {}\n", report.n_interior, report.n_boundary, report.neurons))?;
    if report.n_boundary > 0 {
        say(out, format_args!("rank {} of N_B {}\n", report.rank, report.n_boundary))?;
    }
    if !report.iterations.is_empty() {
        let converged = report.converged.map_or("n/a", |c| if c { "yes" } else { "no" });
        say(out, format_args!("gauss-newton iterations {}  converged {}\n", report.iterations.len() - 1, converged))?;
    }
    say(out, format_args!("constraint residual {:.3e}\n", report.constraint_residual_norm))?;
    say(out, format_args!("rmse {:.6e}\nmax abs error {:.6e}\n", errors.rmse, errors.max_abs_error))?;

    if cfg.outputs.model {
        let file = ModelFile {
            problem_id: problem.id.to_string(),
            method: cfg.method(),
            config_digest: cfg.digest(),
            layer: solved.model.layer.clone(),
            beta: solved.model.beta.0.clone(),
        };
        write_atomic(&dir.join(MODEL_FILE), &file.encode())?;
    }
    if cfg.outputs.field {
        write_field(&solved.model, &problem, cfg.outputs.field_resolution, &dir.join(FIELD_FILE))?;
    }
    Ok(EXIT_OK)
}

fn write_field(model: &TrainedModel, problem: &BenchmarkProblem, resolution: usize, path: &Path) -> Result<(), Failure> {
    let grid = field_grid(problem, resolution).map_err(Failure::config)?;
    let bytes = csv_bytes(|buf| write_field_csv(buf, model, problem, grid.view()))?;
    write_atomic(path, &bytes)
}

/// Reads finished cells from an earlier run of the same study. Failed cells
/// are dropped so they run again.
fn resumable_cells(cfg: &RunConfig, dir: &Path) -> Result<Vec<Cell>, Failure> {
    let csv_path = dir.join(CONVERGENCE_FILE);
    let bytes = match fs::read(&csv_path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Failure::io(&csv_path, e)),
    };
    let study_path = dir.join(STUDY_FILE);
    let previous = fs::read_to_string(&study_path).map_err(|e| Failure::io(&study_path, e))?;
    let previous = RunConfig::parse(&previous).map_err(Failure::config)?;
    if previous.cell_digest() != cfg.cell_digest() {
        return Err(Failure::config(format!(
            "cannot resume: {} was written with different settings (see {})",
            csv_path.display(),
            study_path.display()
        )));
    }
    let table = ConvergenceTable::read_csv(bytes.as_slice())
        .map_err(|e| Failure::config(format!("cannot resume from {}: {e}", csv_path.display())))?;
    let keys = cfg.study().keys();
    Ok(table.cells.into_iter().filter(|c| c.outcome.is_ok() && keys.contains(&c.key())).collect())
}

fn describe(c: &Cell) -> String {
    match &c.outcome {
        Ok(m) => format!("N {:>6}  seed {:>4}  rmse {:.3e}  {:.0} ms", c.n, c.seed, m.rmse, m.wall_ms),
        Err(e) => format!("N {:>6}  seed {:>4}  failed: {e}", c.n, c.seed),
    }
}

pub fn cmd_converge(cfg: &RunConfig, jobs: usize, resume: bool, out: Out<'_>) -> Result<i32, Failure> {
    checked(cfg)?;
    let study = cfg.study();
    if study.n_grid.is_empty() || study.seeds.is_empty() {
        return Err(Failure::config("study needs at least one N and one seed"));
    }
    let dir = &cfg.outputs.dir;
    let csv_path = dir.join(CONVERGENCE_FILE);
    let done = if resume { resumable_cells(cfg, dir)? } else { Vec::new() };
    let mut sidecar = cfg.clone();
    sidecar.outputs = Default::default();
    write_atomic(&dir.join(STUDY_FILE), sidecar.to_toml().as_bytes())?;
    if !done.is_empty() {
        say(out, format_args!("resuming with {} finished cells\n", done.len()))?;
    }

    struct Progress<'a> {
        cells: BTreeMap<(usize, u64), Cell>,
        out: Out<'a>,
        error: Option<Failure>,
    }
    let progress = Mutex::new(Progress { cells: done.iter().map(|c| (c.key(), c.clone())).collect(), out, error: None });
    let snapshot = |cells: &BTreeMap<(usize, u64), Cell>| -> Result<(), Failure> {
        let table = ConvergenceTable { cells: cells.values().cloned().collect() };
        write_atomic(&csv_path, &csv_bytes(|buf| table.write_csv(buf))?)
    };
    snapshot(&progress.lock().unwrap().cells)?;
    let table = run_convergence(&study, jobs, &done, &|cell| {
        let mut p = progress.lock().unwrap();
        if p.error.is_some() {
            return;
        }
        p.cells.insert(cell.key(), cell.clone());
        let line = describe(cell);
        let result = snapshot(&p.cells).and_then(|()| say(p.out, format_args!("{line}\n")));
        if let Err(f) = result {
            p.error = Some(f);
        }
    })
    .map_err(Failure::solve)?;
    let progress = progress.into_inner().unwrap();
    if let Some(f) = progress.error {
        return Err(f);
    }
    let out = progress.out;
    snapshot(&table.cells.iter().map(|c| (c.key(), c.clone())).collect())?;

    summarize(&table, &csv_path, out)
}

/// Prints per-`N` medians; the exit code is [`EXIT_PARTIAL`] when any cell
/// failed.
pub fn summarize(table: &ConvergenceTable, csv_path: &Path, out: Out<'_>) -> Result<i32, Failure> {
    for (n, median) in table.medians() {
        match median {
            Some(m) => say(out, format_args!("median rmse  N {n:>6}  {m:.3e}\n"))?,
            None => say(out, format_args!("median rmse  N {n:>6}  no successful seeds\n"))?,
        }
    }
    let failures = table.failures();
    if failures > 0 {
        say(out, format_args!("{failures} of {} cells failed, see {}\n", table.cells.len(), csv_path.display()))?;
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

pub fn cmd_spectrum(cfg: &RunConfig, out: Out<'_>) -> Result<i32, Failure> {
    let problem = checked(cfg)?;
    if !problem.is_linear() {
        return Err(Failure::config(format!("spectrum needs a linear problem, `{}` is nonlinear", problem.id)));
    }
    let report = spectrum_report(&problem, &cfg.solve_options()).map_err(Failure::solve)?;
    let path = cfg.outputs.dir.join(SPECTRUM_FILE);
    write_atomic(&path, &csv_bytes(|buf| report.write_csv(buf))?)?;
    say(out, format_args!("problem {}  N {}  L {}\n", report.problem_id, report.n_total, report.neurons))?;
    for s in &report.spectra {
        say(
            out,
            format_args!(
                "{:<9} rank {:>5} of {:>5}  sigma_max {:.3e}  effective condition {:.3e}\n",
                s.label,
                s.rank,
                s.singular_values.len(),
                s.singular_values.first().copied().unwrap_or(0.0),
                s.effective_condition
            ),
        )?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_export_field(cfg: &RunConfig, model_path: &Path, output: &Path, out: Out<'_>) -> Result<i32, Failure> {
    cfg.validate().map_err(Failure::config)?;
    let bytes = fs::read(model_path).map_err(|e| Failure::io(model_path, e))?;
    let file = ModelFile::decode(&bytes).map_err(|e| Failure::config(format!("invalid model file {}: {e}", model_path.display())))?;
    let problem = lookup(&file.problem_id).map_err(Failure::config)?;
    let digest = hex(&file.config_digest);
    let model = file.into_model().map_err(Failure::config)?;
    write_field(&model, &problem, cfg.outputs.field_resolution, output)?;
    say(out, format_args!("problem {}  config {}\nwrote {}\n", problem.id, digest, output.display()))?;
    Ok(EXIT_OK)
}
