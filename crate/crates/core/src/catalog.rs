//! Shipped test problems, all periodic on [−1, 1] with c ≡ λ = 1.
//!
//! - `T1`: one fractional Laplacian control with the manufactured solution cos πx.
//! - `T2`: a fractional Laplacian control against a control without jumps; the sup switches
//!   between them and the solution has Lipschitz kinks.
//! - `T3`: two compound Poisson controls with off-grid symmetric atoms.
//! - `T4`: a one-sided measure with drift and the manufactured solution cos πx.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::functions::{Coords, ScalarFn};
use crate::io::{Coefficient, ControlSpec, JumpSpec, LevySpec, ProblemFile};
use crate::model::{Atom, DomainSpec, ExteriorSpec, Forcing, HJBProblem, ModelParams};
use crate::solver::{CouplingRule, SchemeKind};

pub const NAMES: [&str; 4] = ["T1", "T2", "T3", "T4"];

fn periodic() -> Option<DomainSpec> {
    Some(DomainSpec { half_width: 1.0, exterior: ExteriorSpec::Periodic })
}

fn spec(name: &str, f: Forcing, b: f64, levy: LevySpec) -> ControlSpec {
    ControlSpec { name: name.into(), f, c: Coefficient::Number(1.0), b: Coords([b, 0.0]), levy, jump: JumpSpec::default() }
}

fn frac(sigma: f64) -> LevySpec {
    LevySpec { family: "frac_laplacian".into(), sigma, params: ModelParams { coef: Some(1.0), ..Default::default() } }
}

fn atoms(sigma: f64, pairs: &[(f64, f64)]) -> LevySpec {
    let mut list = Vec::new();
    for &(m, z) in pairs {
        list.push(Atom::new(m, [z, 0.0]));
        list.push(Atom::new(m, [-z, 0.0]));
    }
    LevySpec { family: "compound_poisson".into(), sigma, params: ModelParams { atoms: list, ..Default::default() } }
}

fn cos_pi() -> ScalarFn {
    ScalarFn::cos(1.0, PI, 0.0)
}

pub fn t1(sigma: f64) -> ProblemFile {
    ProblemFile {
        dimension: 1,
        lambda: 1.0,
        controls: vec![spec("frac", Forcing::Manufactured { u_star: cos_pi() }, 0.0, frac(sigma))],
        beta: Some(1.0),
        bound_k: None,
        domain: periodic(),
    }
}

pub fn t2(sigma: f64) -> ProblemFile {
    ProblemFile {
        dimension: 1,
        lambda: 1.0,
        controls: vec![
            spec("frac", Forcing::Function(ScalarFn::cos(-1.0, PI, 0.0)), 0.0, frac(sigma)),
            spec(
                "stop",
                Forcing::Function(ScalarFn::constant(-0.05)),
                0.0,
                LevySpec { family: "zero".into(), sigma, params: ModelParams::default() },
            ),
        ],
        beta: Some(1.0),
        bound_k: None,
        domain: periodic(),
    }
}

pub fn t3(sigma: f64) -> ProblemFile {
    ProblemFile {
        dimension: 1,
        lambda: 1.0,
        controls: vec![
            spec("near", Forcing::Function(ScalarFn::cos(-1.0, PI, 0.0)), 0.0, atoms(sigma, &[(1.0, 0.42426)])),
            spec(
                "far",
                Forcing::Function(ScalarFn::Sum {
                    terms: vec![
                        ScalarFn::constant(-0.2),
                        ScalarFn::Sin { amp: 0.6, freq: Coords([PI, 0.0]), phase: 0.0, offset: 0.0 },
                    ],
                }),
                0.0,
                atoms(sigma, &[(0.5, 0.618)]),
            ),
        ],
        beta: Some(1.0),
        bound_k: None,
        domain: periodic(),
    }
}

pub fn t4(sigma: f64) -> ProblemFile {
    ProblemFile {
        dimension: 1,
        lambda: 1.0,
        controls: vec![spec(
            "one_sided",
            Forcing::Manufactured { u_star: cos_pi() },
            0.5,
            LevySpec { family: "one_sided".into(), sigma, params: ModelParams::default() },
        )],
        beta: Some(1.0),
        bound_k: None,
        domain: periodic(),
    }
}

/// Default order for each catalog problem.
pub fn default_sigma(name: &str) -> Result<f64> {
    match name {
        "T1" | "T2" | "T3" => Ok(1.5),
        "T4" => Ok(0.5),
        _ => invalid(format!("unknown catalog problem `{name}`")),
    }
}

pub fn problem_file(name: &str, sigma: Option<f64>) -> Result<ProblemFile> {
    let s = match sigma {
        Some(s) => s,
        None => default_sigma(name)?,
    };
    match name {
        "T1" => Ok(t1(s)),
        "T2" => Ok(t2(s)),
        "T3" => Ok(t3(s)),
        "T4" => Ok(t4(s)),
        _ => invalid(format!("unknown catalog problem `{name}`")),
    }
}

pub fn problem(name: &str, sigma: Option<f64>) -> Result<HJBProblem> {
    problem_file(name, sigma)?.build()
}

/// Scheme and coupling each catalog problem is meant to be run with.
pub fn natural_scheme(name: &str) -> Result<(SchemeKind, CouplingRule)> {
    match name {
        "T1" => Ok((SchemeKind::DiffusionCorrected, CouplingRule::Smooth)),
        "T2" | "T3" => Ok((SchemeKind::DiffusionCorrected, CouplingRule::Degenerate)),
        "T4" => Ok((SchemeKind::DriftExtended, CouplingRule::DriftA)),
        _ => invalid(format!("unknown catalog problem `{name}`")),
    }
}
