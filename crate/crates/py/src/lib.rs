use std::path::Path;

use fhjb_core::check::check_assumptions;
use fhjb_core::fraclap::{weights_1d_with, weights_nd, WeightMethod};
use fhjb_core::io::ProblemFile;
use fhjb_core::rates::{run_rate_study, RateStudy};
use fhjb_core::solver::{assemble, problem_grid, solve as solve_scheme, CouplingRule, SchemeKind, SchemeParams, SolveOptions};
use fhjb_core::{catalog, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

create_exception!(fhjb, FhjbError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::UnknownFamily(_) | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => FhjbError::new_err(format!("{}: {}", e.kind(), e)),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let out = PyList::empty(py);
            for x in a {
                out.append(json_to_py(py, x)?)?;
            }
            out.into_any()
        }
        Value::Object(m) => {
            let out = PyDict::new(py);
            for (k, x) in m {
                out.set_item(k, json_to_py(py, x)?)?;
            }
            out.into_any()
        }
    })
}

fn scheme_kind(name: &str) -> PyResult<SchemeKind> {
    match name {
        "diffusion-corrected" | "dc" => Ok(SchemeKind::DiffusionCorrected),
        "fraclap-power" | "fraclap" => Ok(SchemeKind::FraclapPower),
        "drift-extended" | "drift" => Ok(SchemeKind::DriftExtended),
        _ => Err(PyValueError::new_err(format!("unknown scheme `{name}`"))),
    }
}

fn coupling_rule(name: &str) -> PyResult<CouplingRule> {
    match name {
        "smooth" => Ok(CouplingRule::Smooth),
        "degenerate" => Ok(CouplingRule::Degenerate),
        "drift_a" | "drift-a" => Ok(CouplingRule::DriftA),
        "drift_b" | "drift-b" => Ok(CouplingRule::DriftB),
        _ => Err(PyValueError::new_err(format!("unknown coupling rule `{name}`"))),
    }
}

/// JSON text of a catalog problem.
#[pyfunction]
#[pyo3(signature = (name, sigma=None))]
fn catalog_problem(name: &str, sigma: Option<f64>) -> PyResult<String> {
    Ok(catalog::problem_file(name, sigma).map_err(to_py)?.to_json_pretty())
}

/// Assumption report of a problem given as JSON text.
#[pyfunction]
#[pyo3(signature = (problem, samples=200, seed=0))]
fn check<'py>(py: Python<'py>, problem: &str, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let p = ProblemFile::from_json(problem).and_then(|f| f.build()).map_err(to_py)?;
    let report = py.detach(|| check_assumptions(&p, samples, seed));
    json_to_py(py, &report.to_json())
}

/// Discrete fractional Laplacian weights as a list of (offset, weight).
#[pyfunction]
#[pyo3(signature = (sigma, h=1.0, max_offset=16, dim=1, method="gamma-ratio"))]
fn fraclap_weights(sigma: f64, h: f64, max_offset: i64, dim: usize, method: &str) -> PyResult<Vec<(Vec<i64>, f64)>> {
    let m = match method {
        "gamma-ratio" => WeightMethod::GammaRatio,
        "semigroup" => WeightMethod::Semigroup,
        _ => return Err(PyValueError::new_err(format!("unknown weight method `{method}`"))),
    };
    let w = match dim {
        1 => weights_1d_with(sigma, h, max_offset, m),
        2 => weights_nd(sigma, h, max_offset, 2),
        _ => return Err(PyValueError::new_err("dim must be 1 or 2")),
    }
    .map_err(to_py)?;
    Ok(w.entries.iter().map(|(o, v)| (o[..dim].to_vec(), *v)).collect())
}

/// Solve a problem on one grid. Returns the report with `x` and `u` added.
#[pyfunction]
#[pyo3(signature = (problem, scheme, h, k=None, delta=None, couple=None, k0=1.0, delta0=1.0, tol=1e-10, max_iter=200_000))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    problem: &str,
    scheme: &str,
    h: f64,
    k: Option<f64>,
    delta: Option<f64>,
    couple: Option<&str>,
    k0: f64,
    delta0: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = ProblemFile::from_json(problem).and_then(|f| f.build()).map_err(to_py)?;
    let kind = scheme_kind(scheme)?;
    let params = match couple {
        Some(rule) => {
            if k.is_some() || delta.is_some() {
                return Err(PyValueError::new_err("pass either couple or k and delta"));
            }
            SchemeParams::coupled(kind, h, coupling_rule(rule)?, p.order(), k0, delta0).map_err(to_py)?
        }
        None => SchemeParams::manual(kind, h, k, delta),
    };
    let opts = SolveOptions { tol, max_iter, ..Default::default() };
    let r = py
        .detach(|| {
            let grid = problem_grid(&p, h)?;
            let s = assemble(&p, grid, &params)?;
            solve_scheme(&s, &opts)
        })
        .map_err(to_py)?;
    let g = &r.solution.grid;
    let mut out = r.to_json();
    out["x"] = (0..g.len()).map(|i| g.node_coords(i)[..g.dim].to_vec()).collect::<Vec<_>>().into();
    out["u"] = r.solution.values.clone().into();
    out["k"] = params.k.into();
    out["delta"] = params.delta.into();
    json_to_py(py, &out)
}

/// Run a rate study given as JSON text; relative problem paths resolve against `base`.
#[pyfunction]
#[pyo3(signature = (study, base="."))]
fn rate_study<'py>(py: Python<'py>, study: &str, base: &str) -> PyResult<Bound<'py, PyAny>> {
    let s = RateStudy::from_json(study).map_err(to_py)?;
    s.validate().map_err(to_py)?;
    let r = py.detach(|| run_rate_study(&s, Path::new(base))).map_err(to_py)?;
    let mut out = r.summary();
    out["rows"] = serde_json::to_value(&r.rows).map_err(|e| to_py(e.into()))?;
    json_to_py(py, &out)
}

#[pymodule]
fn fhjb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FhjbError", m.py().get_type::<FhjbError>())?;
    m.add_function(wrap_pyfunction!(catalog_problem, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(fraclap_weights, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(rate_study, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
