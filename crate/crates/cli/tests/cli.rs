use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use fhjb_core::grid::GridFunction;
use fhjb_core::io::ProblemFile;
use fhjb_core::solver::{assemble, problem_grid, solve, SchemeKind, SchemeParams, SolveOptions};
use serde_json::Value;
use statrs::function::gamma::{gamma, ln_gamma};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data(rel: &str) -> PathBuf {
    root().join("data").join(rel)
}

fn fhjb(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fhjb")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_catalog_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = fhjb(&["check", s(&data("problems/t1.json"))], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = fhjb(&["--json", "check", s(&data("problems/t1.json")), "--seed", "3"], dir.path());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 10);
    assert!(results.iter().all(|r| r["status"] == "pass"));
}

#[test]
fn check_reports_one_sided_asymmetry() {
    let dir = tempfile::tempdir().unwrap();
    let o = fhjb(&["--json", "check", s(&data("problems/t4.json"))], dir.path());
    assert_eq!(code(&o), 1);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let a5 = v["results"].as_array().unwrap().iter().find(|r| r["name"] == "A5").unwrap().clone();
    assert_eq!(a5["status"], "fail");
    assert!(a5["value"].as_f64().unwrap() > 0.0);
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["exit_code"], 1);
}

#[test]
fn solve_writes_solution_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = fhjb(&["solve", s(&data("problems/t1.json")), "--scheme", "fraclap", "--h", "0.125", "--tol", "1e-10"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(report["converged"], true);

    // Re-import is bit-exact against an in-process solve.
    let p = ProblemFile::load(&data("problems/t1.json")).unwrap().build().unwrap();
    let grid = problem_grid(&p, 0.125).unwrap();
    let scheme = assemble(&p, grid.clone(), &SchemeParams::manual(SchemeKind::FraclapPower, 0.125, None, None)).unwrap();
    let r = solve(&scheme, &SolveOptions::default()).unwrap();
    let f = std::fs::File::open(dir.path().join("u.csv")).unwrap();
    let back = GridFunction::read_csv(Arc::clone(&grid), std::io::BufReader::new(f)).unwrap();
    assert_eq!(back.values, r.solution.values);
}

#[test]
fn identical_invocations_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let t2 = data("problems/t2.json");
    let args = ["solve", s(&t2), "--scheme", "dc", "--h", "0.0625", "--couple", "degenerate", "--k0", "4"];
    assert_eq!(code(&fhjb(&args, a.path())), 0);
    assert_eq!(code(&fhjb(&args, b.path())), 0);
    let ua = std::fs::read(a.path().join("u.csv")).unwrap();
    let ub = std::fs::read(b.path().join("u.csv")).unwrap();
    assert_eq!(ua, ub);
}

#[test]
fn rates_study_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let o = fhjb(&["rates", s(&data("studies/t1_fraclap_study.json"))], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,k,delta,error,rate,iters,seconds");
    assert!(lines.len() >= 5);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    assert!(summary["fitted_slope"].as_f64().unwrap() >= 1.8);
}

#[test]
fn weights_match_golden_files_and_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    for sigma in ["0.5", "1", "1.5"] {
        let o = fhjb(&["weights", "--sigma", sigma, "--h", "1", "--max-offset", "16"], dir.path());
        assert_eq!(code(&o), 0);
        let golden = std::fs::read(data(&format!("golden/weights_sigma_{sigma}.csv"))).unwrap();
        assert_eq!(o.stdout, golden, "sigma {sigma}");
        let sg: f64 = sigma.parse().unwrap();
        let h = sg / 2.0;
        let a = 2f64.powf(sg) * gamma((1.0 + sg) / 2.0) / (std::f64::consts::PI.sqrt() * gamma(-h).abs());
        for line in String::from_utf8(o.stdout).unwrap().lines().skip(1) {
            let (j, k) = line.split_once(',').unwrap();
            let j: f64 = j.parse::<f64>().unwrap().abs();
            let k: f64 = k.parse().unwrap();
            let oracle = a * (ln_gamma(j - h) - ln_gamma(j + 1.0 + h)).exp();
            assert!((k - oracle).abs() <= 1e-12 * oracle, "sigma {sigma} j {j}: {k} vs {oracle}");
        }
    }
}

#[test]
fn correction_of_fractional_laplacian() {
    let dir = tempfile::tempdir().unwrap();
    let o = fhjb(&["correction", s(&data("problems/t1.json")), "--delta", "0.25"], dir.path());
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let c = &v[0]["correction"];
    // ν = c_{1,σ}|z|^{−1−σ}: a_δ = c_{1,σ} δ^{2−σ}/(2−σ).
    let sigma: f64 = 1.5;
    let c1 = sigma * 2f64.powf(sigma - 1.0) * gamma((1.0 + sigma) / 2.0) / (std::f64::consts::PI.sqrt() * gamma(1.0 - sigma / 2.0));
    let oracle = c1 * 0.25f64.powf(2.0 - sigma) / (2.0 - sigma);
    let a = c["a_delta"][0][0].as_f64().unwrap();
    assert!((a - oracle).abs() < 1e-12 * oracle, "{a} vs {oracle}");
    assert_eq!(c["b_tilde"][0], 0.0);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let t1 = data("problems/t1.json");
    assert_eq!(code(&fhjb(&["solve", s(&t1), "--scheme", "dc", "--h", "0.125"], dir.path())), 2);
    assert_eq!(code(&fhjb(&["solve", s(&t1), "--scheme", "dc", "--h", "0.125", "--k", "0.1", "--couple", "smooth"], dir.path())), 2);
    assert_eq!(code(&fhjb(&["weights", "--sigma", "2.5"], dir.path())), 2);
    assert_eq!(code(&fhjb(&["frobnicate"], dir.path())), 2);
    std::fs::write(dir.path().join("bad.json"), r#"{"dimension": 1}"#).unwrap();
    assert_eq!(code(&fhjb(&["check", "bad.json"], dir.path())), 2);
}

#[test]
fn non_convergence_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = fhjb(
        &["--json", "--threads", "2", "solve", s(&data("problems/t1.json")), "--scheme", "fraclap", "--h", "0.0625", "--method", "value", "--max-iter", "2"],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "not_converged");
}
