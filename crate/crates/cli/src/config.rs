//! Run configuration: a TOML file with defaults for every key.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use elmpde::features::DEFAULT_HALF_RANGE;
use elmpde::geometry::PointRule;
use elmpde::metrics::{ConvergenceStudy, DEFAULT_TEST_POINTS};
use elmpde::pipeline::{Method, Ratio, SolveOptions};
use elmpde::solvers::{GaussNewtonOptions, DEFAULT_RANK_TOL};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Largest accepted config file.
pub const MAX_CONFIG_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Lse,
    Pielm,
    Xtfc,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodKind::Lse => "lse",
            MethodKind::Pielm => "pielm",
            MethodKind::Xtfc => "xtfc",
        })
    }
}

/// Serde through `Display` / `FromStr`, for types with a compact text form.
mod as_text {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnConfig {
    pub max_iters: usize,
    pub step_cap: f64,
    pub res_tol: f64,
}

impl Default for GnConfig {
    fn default() -> Self {
        let d = GaussNewtonOptions::default();
        Self { max_iters: d.max_iters, step_cap: d.step_cap, res_tol: d.res_tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub test_points: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { n_grid: vec![100, 200, 400, 700, 1000], seeds: vec![1, 2, 3, 4, 5], test_points: DEFAULT_TEST_POINTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write `model.elmm` after a solve.
    pub model: bool,
    /// Write `field.csv` after a solve.
    pub field: bool,
    /// Grid points per axis for field exports.
    pub field_resolution: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("elmpde-out"), model: false, field: false, field_resolution: 101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub method: MethodKind,
    /// Penalty weight, used by pielm only.
    pub lambda: f64,
    pub n_total: usize,
    #[serde(with = "as_text")]
    pub point_rule: PointRule,
    #[serde(with = "as_text")]
    pub ratio: Ratio,
    pub half_range: f64,
    pub seed: u64,
    pub rank_tol: f64,
    pub gn: GnConfig,
    pub study: StudyConfig,
    pub outputs: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "square-gauss".into(),
            method: MethodKind::Lse,
            lambda: 1.0,
            n_total: 1000,
            point_rule: PointRule::Sqrt,
            ratio: Ratio::Over,
            half_range: DEFAULT_HALF_RANGE,
            seed: 1,
            rank_tol: DEFAULT_RANK_TOL,
            gn: GnConfig::default(),
            study: StudyConfig::default(),
            outputs: OutputConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file is {0} bytes, larger than the {MAX_CONFIG_BYTES} byte limit")]
    TooLarge(usize),
    #[error("config is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Self::parse(s)
    }
}

impl RunConfig {
    /// Parses a TOML document; missing keys take their defaults. Values are
    /// not cross-checked here, see [`validate`](Self::validate).
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        if s.len() > MAX_CONFIG_BYTES {
            return Err(ConfigError::TooLarge(s.len()));
        }
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn method(&self) -> Method {
        match self.method {
            MethodKind::Lse => Method::Lse,
            MethodKind::Pielm => Method::Pielm { lambda: self.lambda },
            MethodKind::Xtfc => Method::Xtfc,
        }
    }

    pub fn gn_options(&self) -> GaussNewtonOptions {
        GaussNewtonOptions {
            max_iters: self.gn.max_iters,
            step_cap: self.gn.step_cap,
            res_tol: self.gn.res_tol,
            rank_tol: self.rank_tol,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            method: self.method(),
            n_total: self.n_total,
            rule: self.point_rule,
            ratio: self.ratio,
            half_range: self.half_range,
            seed: self.seed,
            rank_tol: self.rank_tol,
            gn: self.gn_options(),
        }
    }

    pub fn study(&self) -> ConvergenceStudy {
        let mut s = ConvergenceStudy::new(&self.problem, self.method(), self.study.n_grid.clone(), self.study.seeds.clone());
        s.rule = self.point_rule;
        s.ratio = self.ratio;
        s.half_range = self.half_range;
        s.rank_tol = self.rank_tol;
        s.gn = self.gn_options();
        s.test_points = self.study.test_points;
        s
    }

    /// Range checks on single values. Problem lookup and method
    /// compatibility are checked when a command runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_total < 2 {
            return bad(format!("n_total must be at least 2, got {}", self.n_total));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.half_range > 0.0 && self.half_range.is_finite()) {
            return bad(format!("half_range must be positive, got {}", self.half_range));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return bad(format!("rank_tol must lie in (0, 1), got {}", self.rank_tol));
        }
        if !(self.gn.step_cap > 0.0 && self.gn.step_cap.is_finite()) {
            return bad(format!("gn.step_cap must be positive, got {}", self.gn.step_cap));
        }
        if !(self.gn.res_tol >= 0.0 && self.gn.res_tol.is_finite()) {
            return bad(format!("gn.res_tol must be non-negative, got {}", self.gn.res_tol));
        }
        if self.study.n_grid.iter().any(|&n| n < 2) {
            return bad("study.n_grid entries must be at least 2".into());
        }
        if self.study.test_points < 2 {
            return bad("study.test_points must be at least 2".into());
        }
        if self.outputs.field_resolution < 2 {
            return bad("outputs.field_resolution must be at least 2".into());
        }
        Ok(())
    }

    /// SHA-256 of everything that affects results (outputs excluded).
    pub fn digest(&self) -> [u8; 32] {
        let mut science = self.clone();
        science.outputs = OutputConfig::default();
        Sha256::digest(science.to_toml().as_bytes()).into()
    }
}

impl RunConfig {
    /// Digest of the settings a single `(N, seed)` cell depends on: like
    /// [`digest`](Self::digest) but ignoring the study grid and seed list.
    pub fn cell_digest(&self) -> [u8; 32] {
        let mut c = self.clone();
        c.study.n_grid.clear();
        c.study.seeds.clear();
        c.digest()
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.ratio.neurons(c.n_total), 2000);
        assert_eq!(c.gn.max_iters, 50);
        assert_eq!(c.gn.step_cap, 10.0);
        assert_eq!(c.gn.res_tol, 1e-10);
    }

    #[test]
    fn sections_and_text_fields() {
        let c = RunConfig::parse(
            "problem = \"peak-50\"\nmethod = \"pielm\"\nlambda = 100.0\npoint_rule = \"fixed(40)\"\nratio = \"square\"\n[gn]\nmax_iters = 7\n[study]\nseeds = [9]\n",
        )
        .unwrap();
        assert_eq!(c.method(), Method::Pielm { lambda: 100.0 });
        assert_eq!(c.point_rule, PointRule::Fixed(40));
        assert_eq!(c.ratio, Ratio::Square);
        assert_eq!(c.gn.max_iters, 7);
        assert_eq!(c.study.seeds, vec![9]);
        assert_eq!(c.study.n_grid, StudyConfig::default().n_grid);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::parse("nope = 1").is_err());
        assert!(RunConfig::parse("ratio = \"sideways\"").is_err());
        assert!(RunConfig::parse("[gn]\nstep = 1").is_err());
        let c = RunConfig::parse("lambda = -1.0").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_ignores_outputs() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.outputs.dir = "elsewhere".into();
        assert_eq!(a.digest(), b.digest());
        b.seed = 2;
        assert_ne!(a.digest(), b.digest());
    }
}
