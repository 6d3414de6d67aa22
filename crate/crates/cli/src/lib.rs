//! Command-line front end for the `elmpde` solvers.
//!
//! Settings come from, in decreasing priority: flags, environment
//! (`ELMPDE_OUT_DIR`, `ELMPDE_JOBS`), the TOML file given by `--config`,
//! built-in defaults.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use elmpde::geometry::PointRule;
use elmpde::pipeline::Ratio;

use config::{MethodKind, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_SOLVE: i32 = 4;
pub const EXIT_IO: i32 = 5;
/// Some convergence cells failed; the table marks them.
pub const EXIT_PARTIAL: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "elmpde", version, about = "Random-feature collocation PDE solvers")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "ELMPDE_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the benchmark problems: id, domain, operator class, nonlinear.
    Catalog {
        #[arg(long)]
        filter: Option<CatalogFilter>,
    },
    /// Solve one problem and write `report.json`.
    Solve {
        #[command(flatten)]
        overrides: Overrides,
        /// Also write `model.elmm`.
        #[arg(long)]
        model: bool,
        /// Also write `field.csv` on a regular grid.
        #[arg(long)]
        field: bool,
    },
    /// Run a convergence study over `(N, seed)` cells into `convergence.csv`.
    Converge {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated point counts.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, env = "ELMPDE_JOBS")]
        jobs: Option<usize>,
        /// Keep finished cells from an existing `convergence.csv`.
        #[arg(long)]
        resume: bool,
    },
    /// Singular values of the matrices each method factors, into `spectrum.csv`.
    Spectrum {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a stored model on a regular grid.
    ExportField {
        #[arg(long)]
        model: PathBuf,
        /// Grid points per axis.
        #[arg(long)]
        resolution: Option<usize>,
        /// Output file; defaults to `field.csv` in the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CatalogFilter {
    Linear,
    Nonlinear,
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub method: Option<MethodKind>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Total collocation points.
    #[arg(long = "n")]
    pub n_total: Option<usize>,
    /// `sqrt`, `linear` or `fixed(k)`.
    #[arg(long)]
    pub point_rule: Option<PointRule>,
    /// `under`, `square`, `over` or `fixed(L)`.
    #[arg(long)]
    pub ratio: Option<Ratio>,
    /// Half-width of the uniform weight and bias range.
    #[arg(long)]
    pub half_range: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rank_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub test_points: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$src { c.$($dst).+ = v.clone(); })*
            };
        }
        set!(
            problem => problem,
            method => method,
            lambda => lambda,
            n_total => n_total,
            point_rule => point_rule,
            ratio => ratio,
            half_range => half_range,
            seed => seed,
            rank_tol => rank_tol,
            max_iters => gn.max_iters,
            test_points => study.test_points,
        );
    }
}

/// A failed command: message plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, format!("config error: {e}"))
    }

    pub fn solve(e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_SOLVE, format!("solve failed: {e}"))
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_IO, format!("io error on {}: {e}", path.display()))
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match commands::dispatch(cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "elmpde: {}", f.message);
            f.code
        }
    }
}
