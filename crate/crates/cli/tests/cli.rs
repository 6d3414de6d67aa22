use std::fs;
use std::path::Path;

use elmpde::geometry::PointRule;
use elmpde::metrics::{Cell, CellMetrics, ConvergenceTable};
use elmpde::pipeline::Ratio;
use elmpde_cli::commands::summarize;
use elmpde_cli::config::{MethodKind, RunConfig};
use elmpde_cli::{run, EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE};
use proptest::prelude::*;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn elmpde(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("elmpde").chain(args.iter().copied()), &mut out, &mut err);
    Run { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn dir_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn catalog_lists_every_problem() {
    let r = elmpde(&["catalog"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.lines().count() > 15);
}

#[test]
fn catalog_nonlinear_filter() {
    let r = elmpde(&["catalog", "--filter", "nonlinear"]);
    assert_eq!(r.code, EXIT_OK);
    let ids: Vec<_> = r.stdout.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(ids, ["burgers-fisher-1d", "nonlinear-diffusion-2d"]);
    let linear = elmpde(&["catalog", "--filter", "linear"]);
    let all = elmpde(&["catalog"]);
    assert_eq!(linear.stdout.lines().count() + 2, all.stdout.lines().count());
}

#[test]
fn unknown_filter_is_a_usage_error() {
    let r = elmpde(&["catalog", "--filter", "stiff"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("stiff"));
    assert_eq!(elmpde(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(elmpde(&["--help"]).code, EXIT_OK);
}

#[test]
fn solve_prints_rmse_and_rank_below_boundary_count() {
    let tmp = tempfile::tempdir().unwrap();
    let r = elmpde(&["--out-dir", &dir_arg(tmp.path()), "solve", "--problem", "square-gauss", "--n", "1000", "--seed", "1"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let rank_line = r.stdout.lines().find(|l| l.starts_with("rank ")).unwrap();
    let nums: Vec<usize> = rank_line.split_whitespace().filter_map(|w| w.parse().ok()).collect();
    assert!(nums[0] < nums[1], "{rank_line}");
    let rmse: f64 = r.stdout.lines().find_map(|l| l.strip_prefix("rmse ")).unwrap().parse().unwrap();
    assert!(rmse <= 1e-6, "{rmse}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    let stored = report["report"]["rmse"].as_f64().unwrap();
    assert!((stored - rmse).abs() <= 1e-6 * rmse);
    assert_eq!(report["report"]["n_boundary"].as_u64().unwrap() as usize, nums[1]);
}

#[test]
fn xtfc_on_polygon_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let r = elmpde(&["--out-dir", &dir_arg(tmp.path()), "solve", "--problem", "lshape-p1", "--method", "xtfc"]);
    assert_eq!(r.code, EXIT_CONFIG);
    assert!(r.stderr.contains("xtfc requires box domain"), "{}", r.stderr);
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn same_config_gives_byte_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let r = elmpde(&["--out-dir", &dir_arg(dir), "solve", "--problem", "star-p1", "--n", "300", "--seed", "4", "--method", "pielm"]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    }
    assert_eq!(fs::read(a.path().join("report.json")).unwrap(), fs::read(b.path().join("report.json")).unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "problem = \"square-gauss\"\nn_total = 120\nseed = 5\n").unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let r = elmpde(&["--config", cfg.to_str().unwrap(), "--out-dir", &dir_arg(&out_a), "solve", "--seed", "7"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    fs::write(&cfg, "problem = \"square-gauss\"\nn_total = 120\nseed = 7\n").unwrap();
    let r = elmpde(&["--config", cfg.to_str().unwrap(), "--out-dir", &dir_arg(&out_b), "solve"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(fs::read(out_a.join("report.json")).unwrap(), fs::read(out_b.join("report.json")).unwrap());
}

#[test]
fn bad_config_files() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.toml");
    assert_eq!(elmpde(&["--config", missing.to_str().unwrap(), "solve"]).code, EXIT_IO);
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "problme = \"square-gauss\"\n").unwrap();
    let r = elmpde(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(r.code, EXIT_CONFIG);
    assert!(r.stderr.contains("problme"), "{}", r.stderr);
    let d = dir_arg(tmp.path());
    assert_eq!(elmpde(&["--out-dir", &d, "solve", "--problem", "no-such-problem"]).code, EXIT_CONFIG);
    assert_eq!(elmpde(&["--out-dir", &d, "solve", "--method", "pielm", "--lambda", "0"]).code, EXIT_CONFIG);
}

fn without_timing(t: &ConvergenceTable) -> Vec<(usize, u64, f64)> {
    t.cells.iter().map(|c| (c.n, c.seed, c.outcome.as_ref().unwrap().rmse)).collect()
}

fn read_table(dir: &Path) -> (String, ConvergenceTable) {
    let text = fs::read_to_string(dir.join("convergence.csv")).unwrap();
    let table = ConvergenceTable::read_csv(text.as_bytes()).unwrap();
    (text, table)
}

const STUDY: [&str; 8] = ["converge", "--n-grid", "40,60,80", "--seeds", "1,2", "--test-points", "400", "--jobs"];

#[test]
fn converge_writes_one_row_per_cell_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = dir_arg(tmp.path());
    let mut args = vec!["--out-dir", &d];
    args.extend(STUDY);
    args.push("2");
    let r = elmpde(&args);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let (text, full) = read_table(tmp.path());
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("N,L,N_I,N_B,seed,"));
    assert!(!text.contains('\r'));
    assert_eq!(full.cells.iter().map(|c| c.key()).collect::<Vec<_>>(), [(40, 1), (40, 2), (60, 1), (60, 2), (80, 1), (80, 2)]);

    // Interrupt mid-row: keep the header, three rows and half of the fourth.
    let cut: usize = text.lines().take(4).map(|l| l.len() + 1).sum::<usize>() + 10;
    fs::write(tmp.path().join("convergence.csv"), &text[..cut]).unwrap();
    args.push("--resume");
    let r = elmpde(&args);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.contains("resuming with 3 finished cells"), "{}", r.stdout);
    assert_eq!(r.stdout.lines().filter(|l| l.contains("seed")).count(), 3);
    let (_, resumed) = read_table(tmp.path());
    assert_eq!(without_timing(&resumed), without_timing(&full));
    assert_eq!(resumed.cells[..3], full.cells[..3]);
}

#[test]
fn resume_refuses_a_study_with_other_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let d = dir_arg(tmp.path());
    let base = ["--out-dir", &d, "converge", "--n-grid", "40", "--seeds", "1", "--test-points", "400"];
    assert_eq!(elmpde(&base).code, EXIT_OK);
    let mut more = base.to_vec();
    more.extend(["--resume", "--seeds", "1,2"]);
    let r = elmpde(&more);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.contains("resuming with 1 finished cells"));
    let mut other = base.to_vec();
    other.extend(["--resume", "--half-range", "2.0"]);
    let r = elmpde(&other);
    assert_eq!(r.code, EXIT_CONFIG);
    assert!(r.stderr.contains("different settings"), "{}", r.stderr);
}

#[test]
fn failed_cells_signal_partial() {
    let cell = |seed, outcome| Cell { n: 50, neurons: 100, n_interior: 30, n_boundary: 20, seed, outcome };
    let ok = CellMetrics { rmse: 1e-3, constraint_residual: 0.0, interior_residual: 0.0, wall_ms: 1.0 };
    let mut table = ConvergenceTable { cells: vec![cell(1, Ok(ok)), cell(2, Err("singular".into()))] };
    let mut out = Vec::new();
    assert_eq!(summarize(&table, Path::new("c.csv"), &mut out).unwrap(), EXIT_PARTIAL);
    assert!(String::from_utf8(out).unwrap().contains("1 of 2 cells failed"));
    table.cells.pop();
    assert_eq!(summarize(&table, Path::new("c.csv"), &mut Vec::new()).unwrap(), EXIT_OK);
}

#[test]
fn spectrum_reports_four_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let r = elmpde(&["--out-dir", &dir_arg(tmp.path()), "spectrum", "--n", "300"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let text = fs::read_to_string(tmp.path().join("spectrum.csv")).unwrap();
    let mut labels: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    labels.dedup();
    assert_eq!(labels, ["original", "pielm", "lse-elm", "xtfc"]);
    assert_eq!(elmpde(&["--out-dir", &dir_arg(tmp.path()), "spectrum", "--problem", "burgers-fisher-1d"]).code, EXIT_CONFIG);
}

#[test]
fn exported_field_matches_the_solve_field() {
    let tmp = tempfile::tempdir().unwrap();
    let d = dir_arg(tmp.path());
    for method in ["lse", "xtfc"] {
        let r = elmpde(&["--out-dir", &d, "solve", "--n", "150", "--method", method, "--model", "--field"]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        let model = tmp.path().join("model.elmm");
        let again = tmp.path().join("again.csv");
        let r = elmpde(&["export-field", "--model", model.to_str().unwrap(), "--output", again.to_str().unwrap()]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        assert_eq!(fs::read(tmp.path().join("field.csv")).unwrap(), fs::read(&again).unwrap(), "{method}");
    }
    let junk = tmp.path().join("junk.elmm");
    fs::write(&junk, b"not a model").unwrap();
    assert_eq!(elmpde(&["export-field", "--model", junk.to_str().unwrap()]).code, EXIT_CONFIG);
}

#[test]
fn binary_honours_environment_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_elmpde"))
        .args(["solve", "--n", "80"])
        .env("ELMPDE_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));
    assert!(tmp.path().join("report.json").exists());
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_elmpde"))
        .args(["converge", "--n-grid", "30", "--seeds", "1", "--test-points", "200"])
        .env("ELMPDE_OUT_DIR", tmp.path())
        .env("ELMPDE_JOBS", "0x")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    let rule = prop_oneof![Just(PointRule::Sqrt), Just(PointRule::Linear), (1usize..10_000).prop_map(PointRule::Fixed)];
    let ratio = prop_oneof![Just(Ratio::Under), Just(Ratio::Square), Just(Ratio::Over), (1usize..10_000).prop_map(Ratio::Fixed)];
    let method = prop_oneof![Just(MethodKind::Lse), Just(MethodKind::Pielm), Just(MethodKind::Xtfc)];
    (
        ("[a-z0-9.-]{1,20}", method, 1e-6f64..1e12, 2usize..100_000, rule, ratio),
        (1e-3f64..10.0, any::<u64>(), 1e-16f64..1e-2, 0usize..200, 1e-3f64..100.0, 0.0f64..1e-3),
        (prop::collection::vec(2usize..5000, 0..6), prop::collection::vec(any::<u64>(), 0..6), 2usize..100_000),
        ("[a-z/_]{1,20}", any::<bool>(), any::<bool>(), 2usize..500),
    )
        .prop_map(|(a, b, c, d)| {
            let mut cfg = RunConfig {
                problem: a.0,
                method: a.1,
                lambda: a.2,
                n_total: a.3,
                point_rule: a.4,
                ratio: a.5,
                half_range: b.0,
                seed: b.1,
                rank_tol: b.2,
                ..RunConfig::default()
            };
            cfg.gn.max_iters = b.3;
            cfg.gn.step_cap = b.4;
            cfg.gn.res_tol = b.5;
            cfg.study.n_grid = c.0;
            cfg.study.seeds = c.1;
            cfg.study.test_points = c.2;
            cfg.outputs.dir = d.0.into();
            cfg.outputs.model = d.1;
            cfg.outputs.field = d.2;
            cfg.outputs.field_resolution = d.3;
            cfg
        })
}

proptest! {
    #[test]
    fn config_round_trips_through_toml(cfg in arb_config()) {
        let text = cfg.to_toml();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), cfg.clone());
        prop_assert_eq!(RunConfig::parse(&text).unwrap().digest(), cfg.digest());
    }

    #[test]
    fn config_parser_never_panics(text in "[a-z_=\\[\\]\" .0-9\n]{0,200}") {
        let _ = RunConfig::parse(&text);
    }
}
