//! Refinement studies: solve along an h ladder, measure sup-errors on an interior window
//! and fit the observed convergence rate.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::catalog;
use crate::error::{invalid, Error, Result};
use crate::functions::ScalarFn;
use crate::grid::{fmt_f64, Grid, GridFunction};
use crate::io::ProblemFile;
use crate::model::HJBProblem;
use crate::solver::{assemble, problem_grid, solve, CouplingRule, Method, SchemeKind, SchemeParams, SolveOptions, Sweep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Catalog {
        catalog: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    Path(String),
    Inline(Box<ProblemFile>),
}

impl ProblemSource {
    pub fn resolve(&self, base: &Path) -> Result<HJBProblem> {
        match self {
            ProblemSource::Catalog { catalog: name, sigma } => catalog::problem(name, *sigma),
            ProblemSource::Path(p) => {
                let path = PathBuf::from(p);
                let path = if path.is_absolute() { path } else { base.join(path) };
                ProblemFile::load(&path)?.build()
            }
            ProblemSource::Inline(f) => f.build(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSpec {
    pub rule: CouplingRule,
    #[serde(default = "one")]
    pub k0: f64,
    #[serde(default = "one")]
    pub delta0: f64,
    /// Fixed values for the manual rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for CoupleSpec {
    fn default() -> Self {
        CoupleSpec { rule: CouplingRule::Manual, k0: 1.0, delta0: 1.0, k: None, delta: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub h0: f64,
    pub levels: usize,
}

impl Ladder {
    pub fn values(&self) -> Vec<f64> {
        (0..self.levels).map(|i| self.h0 * 0.5f64.powi(i as i32)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Closed-form solution; defaults to the problem's manufactured solution.
    Exact {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        solution: Option<ScalarFn>,
    },
    /// Converged solve at (smallest ladder h)/factor, injected onto coarse nodes.
    FineGrid {
        #[serde(default = "eight")]
        factor: usize,
    },
}

fn eight() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Smooth,
    StronglyDegenerate,
    WeaklyNondegenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateStudy {
    pub problem: ProblemSource,
    pub scheme: SchemeKind,
    #[serde(default)]
    pub couple: CoupleSpec,
    pub ladder: Ladder,
    pub reference: ReferenceSpec,
    /// Excluded boundary layer as a fraction of the box width.
    #[serde(default = "quarter")]
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default = "tol")]
    pub tol: f64,
    #[serde(default = "slack")]
    pub slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theoretical_slope: Option<f64>,
    #[serde(default)]
    pub method: Method,
}

fn quarter() -> f64 {
    0.25
}
fn tol() -> f64 {
    1e-10
}
fn slack() -> f64 {
    0.2
}

impl RateStudy {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.levels < 4 {
            return invalid("a rate study needs at least 4 levels");
        }
        if !(self.ladder.h0 > 0.0 && self.ladder.h0 < 1.0) {
            return invalid("ladder h0 must lie in (0,1)");
        }
        if !(0.0..0.5).contains(&self.margin) {
            return invalid("margin must lie in [0, 0.5)");
        }
        if let ReferenceSpec::FineGrid { factor } = self.reference {
            if factor < 4 || !factor.is_power_of_two() {
                return invalid("fine-grid factor must be a power of two, at least 4");
            }
        }
        Ok(())
    }

    /// Scheme parameters at one ladder level.
    pub fn params(&self, h: f64, sigma: f64) -> Result<SchemeParams> {
        let mut p = if self.scheme == SchemeKind::FraclapPower {
            SchemeParams::manual(self.scheme, h, None, None)
        } else if self.couple.rule == CouplingRule::Manual {
            SchemeParams::manual(self.scheme, h, self.couple.k, self.couple.delta)
        } else {
            SchemeParams::coupled(self.scheme, h, self.couple.rule, sigma, self.couple.k0, self.couple.delta0)?
        };
        p.rule = self.couple.rule;
        p.radius = self.radius;
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub h: f64,
    pub k: Option<f64>,
    pub delta: Option<f64>,
    pub error: f64,
    /// Local rate against the previous level.
    pub rate: Option<f64>,
    pub iters: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub rows: Vec<RateRow>,
    pub fitted_slope: Option<f64>,
    pub theoretical_slope: Option<f64>,
    pub errors_monotone: bool,
    pub pass: bool,
    /// Set when a level failed and the table is partial.
    pub aborted: Option<String>,
}

impl StudyResult {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut out = String::from("h,k,delta,error,rate,iters,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_f64(r.h),
                opt(r.k),
                opt(r.delta),
                fmt_f64(r.error),
                opt(r.rate),
                r.iters,
                fmt_f64(r.seconds)
            ));
        }
        out
    }

    pub fn summary(&self) -> Value {
        let mut v = json!({
            "fitted_slope": self.fitted_slope,
            "theoretical_slope": self.theoretical_slope,
            "pass": self.pass,
            "errors_monotone": self.errors_monotone,
            "levels": self.rows.len(),
        });
        if let Some(e) = &self.aborted {
            v["aborted"] = json!(e);
        }
        v
    }
}

/// Least-squares slope of log y against log x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Sup of |u − v| over nodes at distance ≥ margin·(box width) from the boundary.
pub fn windowed_error(u: &GridFunction, reference: &[f64], margin: f64) -> f64 {
    let g = &u.grid;
    let limit = g.half_width - margin * 2.0 * g.half_width;
    let mut e = 0.0f64;
    for (i, (a, b)) in u.values.iter().zip(reference).enumerate() {
        let x = g.node_coords(i);
        if x[0].abs() <= limit + 1e-12 && x[1].abs() <= limit + 1e-12 {
            e = e.max((a - b).abs());
        }
    }
    e
}

/// Injection of a fine-grid function onto the nodes of a nested coarse grid.
pub fn restrict(fine: &GridFunction, coarse: Arc<Grid>) -> Result<GridFunction> {
    let ratio = coarse.h / fine.grid.h;
    let m = ratio.round();
    if (ratio - m).abs() > 1e-9 || m < 1.0 || coarse.half_width != fine.grid.half_width {
        return Err(Error::GridMismatch("grids are not nested".into()));
    }
    let m = m as i64;
    let values = (0..coarse.len())
        .map(|i| {
            let idx = coarse.index_of(i);
            fine.value_at(&[idx[0] * m, idx[1] * m])
        })
        .collect::<Result<Vec<f64>>>()?;
    GridFunction::new(coarse, values)
}

/// Converged solve at h_fine.
pub fn fine_grid_reference(problem: &HJBProblem, params: &SchemeParams, opts: &SolveOptions) -> Result<GridFunction> {
    let grid = problem_grid(problem, params.h)?;
    let scheme = assemble(problem, grid, params)?;
    let r = solve(&scheme, opts)?;
    if !r.converged {
        return Err(Error::NotConverged { iterations: r.iterations, residual: r.residual });
    }
    Ok(r.solution)
}

fn infer_regime(problem: &HJBProblem) -> Regime {
    if problem.manufactured_solution().is_some_and(|u| u.is_smooth()) {
        Regime::Smooth
    } else if problem.controls.iter().any(|c| c.levy.nondegeneracy_const.is_some()) {
        Regime::WeaklyNondegenerate
    } else {
        Regime::StronglyDegenerate
    }
}

/// Predicted error exponent for the study, if one applies.
pub fn theoretical_slope(study: &RateStudy, problem: &HJBProblem, rows: &[RateRow]) -> Option<f64> {
    if let Some(s) = study.theoretical_slope {
        return Some(s);
    }
    let sigma = problem.order();
    let regime = study.regime.unwrap_or_else(|| infer_regime(problem));
    let symmetric = problem.controls.iter().all(|c| c.levy.symmetric && c.jump.odd);
    let drift = problem.controls.iter().any(|c| c.b != [0.0, 0.0]) || !symmetric;
    match (study.scheme, regime) {
        (SchemeKind::FraclapPower, Regime::Smooth) => Some(2.0),
        (SchemeKind::FraclapPower, Regime::WeaklyNondegenerate) => Some(if sigma <= 1.0 { 0.5 } else { 0.5 * sigma }),
        (SchemeKind::FraclapPower, Regime::StronglyDegenerate) => None,
        (_, _) if study.couple.rule == CouplingRule::Manual => None,
        (_, Regime::Smooth) => {
            // Slope of the truncation bound over the ladder actually used.
            let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
            let bound: Vec<f64> = rows
                .iter()
                .map(|r| {
                    let (h, k, d) = (r.h, r.k.unwrap_or(r.h), r.delta.unwrap_or(r.h));
                    let small = if symmetric { d.powf(4.0 - sigma) } else { d.powf(3.0 - sigma) };
                    let upwind = if drift { h } else { 0.0 };
                    small + upwind + d.powf(2.0 * (2.0 - sigma)) * k * k + h * h / (k * k) + h * h / d.powf(sigma)
                })
                .collect();
            fit_slope(&hs, &bound)
        }
        (SchemeKind::DriftExtended, _) => match study.couple.rule {
            CouplingRule::DriftA => Some(if sigma <= 1.2 { 0.5 } else { 2.0 * (3.0 - sigma) / (6.0 + sigma) }),
            CouplingRule::DriftB => Some(if sigma <= 4.0 / 3.0 { 0.5 } else { (4.0 - sigma) / (4.0 + sigma) }),
            _ => None,
        },
        (SchemeKind::DiffusionCorrected, Regime::StronglyDegenerate) => Some((4.0 - sigma) / (4.0 + sigma)),
        (SchemeKind::DiffusionCorrected, Regime::WeaklyNondegenerate) => {
            Some(if sigma <= 1.0 { (4.0 - sigma) / (4.0 + sigma) } else { sigma * (4.0 - sigma) / (4.0 + sigma) })
        }
    }
}

/// Run a study; relative problem paths resolve against `base`.
pub fn run_rate_study(study: &RateStudy, base: &Path) -> Result<StudyResult> {
    study.validate()?;
    let problem = study.problem.resolve(base)?;
    let sigma = problem.order();
    let hs = study.ladder.values();
    let opts = SolveOptions { tol: study.tol, method: study.method, sweep: Sweep::GaussSeidel, ..Default::default() };

    let fine = match &study.reference {
        ReferenceSpec::FineGrid { factor } => {
            let hf = hs[hs.len() - 1] / *factor as f64;
            Some(fine_grid_reference(&problem, &study.params(hf, sigma)?, &opts)?)
        }
        ReferenceSpec::Exact { .. } => None,
    };
    let exact = match &study.reference {
        ReferenceSpec::Exact { solution: Some(s) } => Some(s.clone()),
        ReferenceSpec::Exact { solution: None } => match problem.manufactured_solution() {
            Some(u) => Some(u.clone()),
            None => return invalid("exact reference needs a solution or a manufactured problem"),
        },
        ReferenceSpec::FineGrid { .. } => None,
    };

    let mut rows: Vec<RateRow> = Vec::new();
    let mut aborted = None;
    for &h in &hs {
        let start = Instant::now();
        let level = (|| -> Result<RateRow> {
            let params = study.params(h, sigma)?;
            let grid = problem_grid(&problem, h)?;
            let scheme = assemble(&problem, grid.clone(), &params)?;
            let rep = solve(&scheme, &opts)?;
            if !rep.converged {
                return Err(Error::NotConverged { iterations: rep.iterations, residual: rep.residual });
            }
            let reference: Vec<f64> = match (&exact, &fine) {
                (Some(u), _) => (0..grid.len()).map(|i| u.eval(&grid.node_coords(i))).collect(),
                (None, Some(f)) => restrict(f, grid.clone())?.values,
                (None, None) => unreachable!(),
            };
            let error = windowed_error(&rep.solution, &reference, study.margin);
            Ok(RateRow { h, k: params.k, delta: params.delta, error, rate: None, iters: rep.iterations, seconds: start.elapsed().as_secs_f64() })
        })();
        match level {
            Ok(mut row) => {
                if let Some(prev) = rows.last() {
                    if prev.error > 0.0 && row.error > 0.0 {
                        row.rate = Some((prev.error / row.error).ln() / (prev.h / row.h).ln());
                    }
                }
                rows.push(row);
            }
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
    }
    let hs_done: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let fitted = fit_slope(&hs_done, &errs);
    let theory = theoretical_slope(study, &problem, &rows);
    let errors_monotone = errs.windows(2).all(|w| w[1] <= w[0]);
    let pass = aborted.is_none()
        && errors_monotone
        && match (fitted, theory) {
            (Some(f), Some(t)) => f >= t - study.slack,
            (Some(_), None) => true,
            (None, _) => errs.iter().all(|e| *e == 0.0),
        };
    Ok(StudyResult { rows, fitted_slope: fitted, theoretical_slope: theory, errors_monotone, pass, aborted })
}
