use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fhjb_core::check::check_assumptions;
use fhjb_core::correction::correction;
use fhjb_core::fraclap::{weights_1d_with, weights_nd, WeightMethod};
use fhjb_core::io::ProblemFile;
use fhjb_core::model::HJBProblem;
use fhjb_core::rates::{run_rate_study, RateStudy};
use fhjb_core::solver::{assemble, problem_grid, solve, CouplingRule, Method, SchemeKind, SchemeParams, SolveOptions, Sweep};
use fhjb_core::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "fhjb", version, about = "Monotone schemes for fractional HJB equations")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Machine-readable output and errors.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions on a problem file.
    Check {
        problem: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Assemble and solve a problem on one grid.
    Solve(SolveArgs),
    /// Run a refinement study.
    Rates {
        study: PathBuf,
        #[arg(long, default_value = "rates.csv")]
        csv: PathBuf,
        #[arg(long, default_value = "summary.json")]
        summary: PathBuf,
    },
    /// Print discrete fractional Laplacian weights as CSV.
    Weights {
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, default_value_t = 16)]
        max_offset: i64,
        #[arg(long, value_enum, default_value_t = MethodArg::GammaRatio)]
        method: MethodArg,
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
    /// Print the small-jump correction of every control as JSON.
    Correction {
        problem: PathBuf,
        #[arg(long)]
        delta: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    GammaRatio,
    Semigroup,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    #[value(alias = "dc")]
    DiffusionCorrected,
    #[value(alias = "fraclap")]
    FraclapPower,
    #[value(alias = "drift")]
    DriftExtended,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Smooth,
    Degenerate,
    DriftA,
    DriftB,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Policy,
    Value,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    GaussSeidel,
    Jacobi,
}

#[derive(Args)]
struct SolveArgs {
    problem: PathBuf,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long)]
    h: f64,
    #[arg(long, conflicts_with = "couple")]
    k: Option<f64>,
    #[arg(long, conflicts_with = "couple")]
    delta: Option<f64>,
    #[arg(long, value_enum)]
    couple: Option<RuleArg>,
    #[arg(long, default_value_t = 1.0, requires = "couple")]
    k0: f64,
    #[arg(long, default_value_t = 1.0, requires = "couple")]
    delta0: f64,
    /// Tail truncation radius R.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::Policy)]
    method: SolverArg,
    #[arg(long, value_enum, default_value_t = SweepArg::GaussSeidel)]
    sweep: SweepArg,
    #[arg(long, default_value = "u.csv")]
    out: PathBuf,
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::UnknownFamily(_) | Error::Json(_) | Error::Io(_) => 2,
            _ => 1,
        };
        Failure { code, kind: e.kind(), message: e.to_string() }
    }
}

fn domain(kind: &'static str, message: impl Into<String>) -> Failure {
    Failure { code: 1, kind, message: message.into() }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, kind: "usage", message: message.into() }
}

fn load_problem(path: &Path) -> Result<HJBProblem, Failure> {
    Ok(ProblemFile::load(path)?.build()?)
}

fn writer(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::from(Error::Io(e)))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    let mut w = writer(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Failure::from(Error::Io(e)))
}

/// Write to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io(e).into()),
        _ => Ok(()),
    }
}

fn run_check(problem: &Path, samples: usize, seed: u64, as_json: bool) -> Result<(), Failure> {
    let p = load_problem(problem)?;
    let report = check_assumptions(&p, samples, seed);
    if as_json {
        emit(&(serde_json::to_string_pretty(&report.to_json()).expect("json") + "\n"))?;
    } else {
        emit(&report.to_text())?;
    }
    if report.all_pass() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.results.iter().filter(|r| r.status == fhjb_core::check::Status::Fail).map(|r| r.name).collect();
        Err(domain("assumption", format!("assumptions failed: {}", failed.join(", "))))
    }
}

fn run_solve(a: &SolveArgs, as_json: bool) -> Result<(), Failure> {
    let p = load_problem(&a.problem)?;
    let kind = match a.scheme {
        SchemeArg::DiffusionCorrected => SchemeKind::DiffusionCorrected,
        SchemeArg::FraclapPower => SchemeKind::FraclapPower,
        SchemeArg::DriftExtended => SchemeKind::DriftExtended,
    };
    let mut params = match a.couple {
        Some(rule) => {
            let rule = match rule {
                RuleArg::Smooth => CouplingRule::Smooth,
                RuleArg::Degenerate => CouplingRule::Degenerate,
                RuleArg::DriftA => CouplingRule::DriftA,
                RuleArg::DriftB => CouplingRule::DriftB,
            };
            SchemeParams::coupled(kind, a.h, rule, p.order(), a.k0, a.delta0)?
        }
        None => {
            if kind != SchemeKind::FraclapPower && (a.k.is_none() || a.delta.is_none()) {
                return Err(usage("this scheme needs --k and --delta, or --couple"));
            }
            SchemeParams::manual(kind, a.h, a.k, a.delta)
        }
    };
    params.radius = a.radius;
    let grid = problem_grid(&p, a.h)?;
    let scheme = assemble(&p, grid, &params)?;
    let opts = SolveOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        method: match a.method {
            SolverArg::Policy => Method::Policy,
            SolverArg::Value => Method::Value,
        },
        sweep: match a.sweep {
            SweepArg::GaussSeidel => Sweep::GaussSeidel,
            SweepArg::Jacobi => Sweep::Jacobi,
        },
        ..Default::default()
    };
    let r = solve(&scheme, &opts)?;
    let mut w = writer(&a.out)?;
    r.solution.write_csv(&mut w)?;
    w.flush().map_err(|e| Failure::from(Error::Io(e)))?;
    let mut report = r.to_json();
    report["scheme"] = json!(kind.name());
    report["h"] = json!(params.h);
    report["k"] = json!(params.k);
    report["delta"] = json!(params.delta);
    report["controls"] = json!(scheme.controls.iter().map(|c| c.stencil.to_json()).collect::<Vec<_>>());
    write_text(&a.report, &(serde_json::to_string_pretty(&report).expect("json") + "\n"))?;
    if as_json {
        emit(&format!("{}\n", json!({"converged": r.converged, "iterations": r.iterations, "residual": r.residual})))?;
    } else {
        emit(&format!("converged={} iterations={} residual={:e}\n", r.converged, r.iterations, r.residual))?;
    }
    if r.converged {
        Ok(())
    } else {
        Err(Error::NotConverged { iterations: r.iterations, residual: r.residual }.into())
    }
}

fn run_rates(study: &Path, csv: &Path, summary: &Path) -> Result<(), Failure> {
    let s = RateStudy::load(study)?;
    let base = study.parent().unwrap_or(Path::new("."));
    let r = run_rate_study(&s, base)?;
    write_text(csv, &r.to_csv())?;
    let text = serde_json::to_string_pretty(&r.summary()).expect("json");
    write_text(summary, &(text.clone() + "\n"))?;
    emit(&format!("{}\n", r.summary()))?;
    if let Some(e) = &r.aborted {
        return Err(domain("aborted", format!("study aborted: {e}")));
    }
    if !r.pass {
        return Err(domain("rate", "fitted slope below target or errors not monotone"));
    }
    Ok(())
}

fn run_weights(sigma: f64, h: f64, max_offset: i64, method: MethodArg, dim: usize) -> Result<(), Failure> {
    let w = match dim {
        1 => weights_1d_with(
            sigma,
            h,
            max_offset,
            match method {
                MethodArg::GammaRatio => WeightMethod::GammaRatio,
                MethodArg::Semigroup => WeightMethod::Semigroup,
            },
        )?,
        2 => weights_nd(sigma, h, max_offset, 2)?,
        _ => return Err(usage("--dim must be 1 or 2")),
    };
    emit(&w.to_csv())
}

fn run_correction(problem: &Path, delta: f64) -> Result<(), Failure> {
    let p = load_problem(problem)?;
    let mut out = Vec::new();
    for c in &p.controls {
        let d = correction(&c.levy, &c.jump, &c.b, delta)?;
        out.push(json!({"control": c.name, "correction": d}));
    }
    emit(&(serde_json::to_string_pretty(&out).expect("json") + "\n"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("--threads must be positive");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::Check { problem, samples, seed } => run_check(problem, *samples, *seed, cli.json),
        Command::Solve(a) => run_solve(a, cli.json),
        Command::Rates { study, csv, summary } => run_rates(study, csv, summary),
        Command::Weights { sigma, h, max_offset, method, dim } => run_weights(*sigma, *h, *max_offset, *method, *dim),
        Command::Correction { problem, delta } => run_correction(problem, *delta),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if cli.json {
                eprintln!("{}", json!({"error": f.kind, "message": f.message, "exit_code": f.code}));
            } else {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
