//! Assembly of the discrete HJB operator and the nonlinear solvers.
//!
//! The scheme is `sup_α { f^α + c^α u − L^α u } = 0` on every node, where each `L^α` is a
//! monotone stencil `L u(x) = Σ_j κ_j (u(x + j h) − u(x))`.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::correction::{correction, CorrectionData};
use crate::error::{invalid, Error, Result};
use crate::fraclap::{periodic_weights_1d, tail_constant, total_mass_1d, weights_1d_with, weights_nd, WeightMethod};
use crate::grid::{ExteriorPolicy, Grid, GridFunction};
use crate::measure::density_mass;
use crate::model::{Control, Density, Forcing, HJBProblem};
use crate::reference::manufacture_forcing;
use crate::special::hurwitz_zeta;
use crate::stencil::{
    build_nonlocal_stencil, build_sl_local_stencil, build_upwind_drift_stencil, CompiledOperator, NonlocalOptions,
    StencilOperator,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    DiffusionCorrected,
    FraclapPower,
    DriftExtended,
}

impl FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusion_corrected" | "dc" => Ok(SchemeKind::DiffusionCorrected),
            "fraclap_power" | "fraclap" => Ok(SchemeKind::FraclapPower),
            "drift_extended" | "drift" => Ok(SchemeKind::DriftExtended),
            _ => invalid(format!("unknown scheme `{s}`")),
        }
    }
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::DiffusionCorrected => "diffusion_corrected",
            SchemeKind::FraclapPower => "fraclap_power",
            SchemeKind::DriftExtended => "drift_extended",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingRule {
    #[default]
    Manual,
    Smooth,
    Degenerate,
    DriftA,
    DriftB,
}

impl FromStr for CouplingRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(CouplingRule::Manual),
            "smooth" => Ok(CouplingRule::Smooth),
            "degenerate" => Ok(CouplingRule::Degenerate),
            "drift_a" => Ok(CouplingRule::DriftA),
            "drift_b" => Ok(CouplingRule::DriftB),
            _ => invalid(format!("unknown coupling rule `{s}`")),
        }
    }
}

/// (k, δ) from h for a coupling rule at order σ.
pub fn couple(rule: CouplingRule, h: f64, sigma: f64, k0: f64, delta0: f64) -> Result<(f64, f64)> {
    if !(h > 0.0 && k0 > 0.0 && delta0 > 0.0) {
        return invalid("h, k0 and delta0 must be positive");
    }
    let (k, d) = match rule {
        CouplingRule::Manual => return invalid("manual coupling has no formula; give k and delta"),
        CouplingRule::Smooth => (k0 * h.powf(sigma / 4.0), delta0 * h.sqrt()),
        CouplingRule::Degenerate => {
            (k0 * h.powf(2.0 * sigma / (4.0 + sigma)), delta0 * h.powf(4.0 / (4.0 + sigma)))
        }
        CouplingRule::DriftA | CouplingRule::DriftB => {
            let (split, e) = if rule == CouplingRule::DriftA { (1.2, 6.0) } else { (4.0 / 3.0, 4.0) };
            let d = delta0 * if sigma <= split { h.powf(1.0 / sigma) } else { h.powf(e / (e + sigma)) };
            let k = (k0 * (h * h / d.powf(2.0 - 0.5 * sigma)).sqrt()).min(1.0);
            (k, d)
        }
    };
    if !(d < 1.0) {
        return invalid(format!("coupled delta = {d} is not below 1; use a smaller h or delta0"));
    }
    Ok((k, d))
}

#[derive(Debug, Clone)]
pub struct SchemeParams {
    pub kind: SchemeKind,
    pub h: f64,
    pub k: Option<f64>,
    pub delta: Option<f64>,
    /// Tail radius R; chosen automatically when absent.
    pub radius: Option<f64>,
    pub tail_tol: f64,
    pub rule: CouplingRule,
    pub k0: f64,
    pub delta0: f64,
    pub weight_method: WeightMethod,
}

impl SchemeParams {
    pub fn manual(kind: SchemeKind, h: f64, k: Option<f64>, delta: Option<f64>) -> Self {
        SchemeParams {
            kind,
            h,
            k,
            delta,
            radius: None,
            tail_tol: NonlocalOptions::default().tail_tol,
            rule: CouplingRule::Manual,
            k0: 1.0,
            delta0: 1.0,
            weight_method: WeightMethod::GammaRatio,
        }
    }

    pub fn coupled(kind: SchemeKind, h: f64, rule: CouplingRule, sigma: f64, k0: f64, delta0: f64) -> Result<Self> {
        let mut p = Self::manual(kind, h, None, None);
        p.rule = rule;
        p.k0 = k0;
        p.delta0 = delta0;
        if kind != SchemeKind::FraclapPower {
            let (k, d) = couple(rule, h, sigma, k0, delta0)?;
            p.k = Some(k);
            p.delta = Some(d);
        }
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return invalid(format!("h must be positive, got {}", self.h));
        }
        if self.kind != SchemeKind::FraclapPower {
            match (self.k, self.delta) {
                (Some(k), Some(d)) => {
                    if !(k > 0.0 && k.is_finite()) {
                        return invalid(format!("k must be positive, got {k}"));
                    }
                    if !(d > 0.0 && d < 1.0) {
                        return invalid(format!("delta must lie in (0,1), got {d}"));
                    }
                }
                _ => return invalid("the scheme needs both k and delta"),
            }
        }
        if let Some(r) = self.radius {
            if !(r >= 1.0) {
                return invalid(format!("tail radius must be at least 1, got {r}"));
            }
        }
        if !(self.tail_tol > 0.0) {
            return invalid("tail_tol must be positive");
        }
        Ok(())
    }
}

/// One control after assembly.
#[derive(Debug, Clone)]
pub struct AssembledControl {
    pub name: String,
    pub stencil: StencilOperator,
    pub op: CompiledOperator,
    pub f: Vec<f64>,
    pub c: Vec<f64>,
    pub correction: Option<CorrectionData>,
}

#[derive(Debug, Clone)]
pub struct AssembledScheme {
    pub grid: Arc<Grid>,
    pub lambda: f64,
    pub params: SchemeParams,
    pub controls: Vec<AssembledControl>,
}

/// Grid for a problem: its declared domain, or the periodic box [−1,1]^N.
pub fn problem_grid(problem: &HJBProblem, h: f64) -> Result<Arc<Grid>> {
    let (l, policy) = match &problem.domain {
        Some(d) => (d.half_width, ExteriorPolicy::from_spec(&d.exterior)),
        None => (1.0, ExteriorPolicy::Periodic),
    };
    Ok(Arc::new(Grid::new(problem.dim, l, h, policy)?))
}

fn auto_radius(control: &Control, tail_tol: f64) -> f64 {
    let m = &control.levy;
    let support = m.density_support_radius().unwrap_or(f64::INFINITY);
    if support <= 1.0 {
        return 1.0;
    }
    let total = density_mass(m, 1.0, f64::INFINITY) + m.atoms.iter().filter(|a| m.norm(&a.z.0) >= 1.0).map(|a| a.mass).sum::<f64>();
    let mut r = 1.0;
    while r < 1048576.0 && density_mass(m, r, f64::INFINITY) > tail_tol * total {
        r *= 2.0;
    }
    r
}

fn nodal_forcing(control: &Control, grid: &Arc<Grid>) -> Result<Vec<f64>> {
    match &control.f {
        Forcing::Manufactured { u_star } => Ok(manufacture_forcing(control, u_star, grid.clone())?.values),
        Forcing::Function(g) => Ok((0..grid.len()).map(|i| g.eval(&grid.node_coords(i))).collect()),
    }
}

fn fraclap_stencil(control: &Control, grid: &Grid, params: &SchemeParams) -> Result<StencilOperator> {
    let m = &control.levy;
    let coef = match m.frac_lap_coefficient() {
        Some(a) => a,
        None => {
            return invalid(format!(
                "control {} has a {} measure; the fraclap scheme needs a fractional Laplacian or no jumps",
                control.name,
                m.family.name()
            ))
        }
    };
    if coef == 0.0 {
        let mut st = StencilOperator::new(grid.dim, grid.h);
        st.meta.parts.push("fraclap".into());
        return Ok(st);
    }
    let sigma = m.sigma;
    let h = grid.h;
    let w = match (grid.dim, grid.period()) {
        (1, Some(p)) => periodic_weights_1d(sigma, h, p)?,
        (dim, _) => {
            // Smallest J whose neglected mass is within tail_tol of the total.
            let total = total_mass_1d(sigma);
            let a = tail_constant(sigma);
            let need = |j: f64| 2.0 * a * hurwitz_zeta(1.0 + sigma, j + 1.0) <= params.tail_tol * total;
            let mut j = 16.0f64;
            while !need(j) && j < 1048576.0 {
                j *= 2.0;
            }
            if let Some(r) = params.radius {
                j = j.min((r / h).ceil());
            }
            let w = if dim == 1 {
                weights_1d_with(sigma, h, j as i64, params.weight_method)?
            } else {
                let cap = grid.period().map_or(j, |p| j.min(p as f64));
                weights_nd(sigma, h, cap as i64, 2)?
            };
            let tol = params.tail_tol * total * h.powf(-sigma);
            if w.neglected_mass > tol {
                return Err(Error::TailMass { radius: w.max_offset as f64 * h, mass: w.neglected_mass, tol });
            }
            w
        }
    };
    let mut st = w.to_stencil(coef);
    st.meta.alpha = control.name.clone();
    Ok(st)
}

/// Build the per-control stencils, forcings and discount coefficients.
pub fn assemble(problem: &HJBProblem, grid: Arc<Grid>, params: &SchemeParams) -> Result<AssembledScheme> {
    problem.validate()?;
    params.validate()?;
    if grid.dim != problem.dim {
        return Err(Error::GridMismatch("grid and problem dimensions differ".into()));
    }
    if (grid.h - params.h).abs() > 1e-12 * params.h {
        return Err(Error::GridMismatch(format!("grid spacing {} differs from h = {}", grid.h, params.h)));
    }
    let mut controls = Vec::with_capacity(problem.controls.len());
    for ctl in &problem.controls {
        let (mut stencil, corr) = match params.kind {
            SchemeKind::FraclapPower => {
                let mut st = fraclap_stencil(ctl, &grid, params)?;
                if ctl.b != [0.0, 0.0] {
                    st.merge(&build_upwind_drift_stencil(&ctl.b, &grid));
                }
                (st, None)
            }
            SchemeKind::DiffusionCorrected | SchemeKind::DriftExtended => {
                let k = params.k.unwrap();
                let delta = params.delta.unwrap();
                if params.kind == SchemeKind::DiffusionCorrected && !(ctl.levy.symmetric && ctl.jump.odd) {
                    return invalid(format!(
                        "control {} has a nonsymmetric measure or non-odd jump map; use the drift_extended scheme",
                        ctl.name
                    ));
                }
                let corr = correction(&ctl.levy, &ctl.jump, &ctl.b, delta)?;
                let mut st = build_sl_local_stencil(&corr, &grid, k)?;
                let radius = params.radius.unwrap_or_else(|| if grid.is_periodic() && matches!(ctl.levy.density, Density::PowerLaw { .. }) {
                    1.0
                } else {
                    auto_radius(ctl, params.tail_tol)
                });
                let opts = NonlocalOptions { tail_tol: params.tail_tol, ..Default::default() };
                let nl = build_nonlocal_stencil(&ctl.levy, &ctl.jump, &grid, delta, radius, &opts)?;
                st.merge(&nl);
                st.merge(&build_upwind_drift_stencil(&corr.b_delta, &grid));
                st.meta.k = Some(k);
                st.meta.delta = Some(delta);
                st.meta.radius = Some(radius);
                (st, Some(corr))
            }
        };
        stencil.meta.alpha = ctl.name.clone();
        stencil.meta.h = grid.h;
        let scale = stencil.total_weight().max(1.0);
        if stencil.meta.min_weight_preclamp < -1e-12 * scale || stencil.min_weight() < 0.0 {
            return Err(Error::Internal(format!(
                "non-monotone stencil for control {}: min weight {}",
                ctl.name, stencil.meta.min_weight_preclamp
            )));
        }
        let op = CompiledOperator::compile(&stencil, &grid)?;
        let f = nodal_forcing(ctl, &grid)?;
        let c: Vec<f64> = (0..grid.len()).map(|i| ctl.c.eval(&grid.node_coords(i))).collect();
        if let Some(bad) = c.iter().find(|v| !(**v >= problem.lambda)) {
            return invalid(format!("control {}: c = {bad} below lambda = {}", ctl.name, problem.lambda));
        }
        controls.push(AssembledControl { name: ctl.name.clone(), stencil, op, f, c, correction: corr });
    }
    Ok(AssembledScheme { grid, lambda: problem.lambda, params: params.clone(), controls })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Jacobi,
    #[default]
    GaussSeidel,
}

impl FromStr for Sweep {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jacobi" => Ok(Sweep::Jacobi),
            "gauss_seidel" | "gs" => Ok(Sweep::GaussSeidel),
            _ => invalid(format!("unknown sweep `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Value,
    #[default]
    Policy,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "value" | "value_iteration" => Ok(Method::Value),
            "policy" | "policy_iteration" | "howard" => Ok(Method::Policy),
            _ => invalid(format!("unknown method `{s}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: GridFunction,
    /// Control realizing the sup at each node (lowest index on ties).
    pub control: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub seconds: f64,
    pub method: Method,
    pub sweep: Sweep,
    /// ‖u_h‖_∞ and the bound sup_α‖f^α‖_∞ / λ.
    pub sup_u: f64,
    pub stability_bound: f64,
}

impl SolveReport {
    pub fn to_json(&self) -> Value {
        json!({
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "seconds": self.seconds,
            "method": self.method,
            "sweep": self.sweep,
            "nodes": self.solution.values.len(),
            "sup_u": self.sup_u,
            "stability_bound": self.stability_bound,
            "control_counts": self.control_counts(),
        })
    }

    pub fn control_counts(&self) -> Vec<usize> {
        let n = self.control.iter().copied().max().map_or(0, |m| m + 1);
        let mut c = vec![0; n];
        for &a in &self.control {
            c[a] += 1;
        }
        c
    }
}

impl AssembledScheme {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// sup_α‖f^α‖_∞ / λ.
    pub fn stability_bound(&self) -> f64 {
        self.controls.iter().flat_map(|c| c.f.iter()).fold(0.0f64, |m, v| m.max(v.abs())) / self.lambda
    }

    /// Value of f^α + c^α u − L^α u at node i.
    #[inline]
    fn branch(&self, a: usize, i: usize, u: &[f64]) -> f64 {
        let c = &self.controls[a];
        c.f[i] + (c.c[i] + c.op.diag[i]) * u[i] - c.op.off_diag(i, u)
    }

    /// Pointwise sup over controls, with the lowest index attaining it.
    fn sup_at(&self, i: usize, u: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..self.controls.len() {
            let v = self.branch(a, i, u);
            if v > best.0 {
                best = (v, a);
            }
        }
        best
    }

    fn residual_values(&self, u: &[f64]) -> Vec<(f64, usize)> {
        (0..self.len()).into_par_iter().map(|i| self.sup_at(i, u)).collect()
    }

    /// Nodal value solving the scheme at node i with neighbours fixed.
    #[inline]
    fn local_solve(&self, i: usize, u: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for c in &self.controls {
            let v = (c.op.off_diag(i, u) - c.f[i]) / (c.c[i] + c.op.diag[i]);
            if v < best {
                best = v;
            }
        }
        best
    }

    fn sup_norm_residual(&self, u: &[f64]) -> f64 {
        self.residual_values(u).iter().fold(0.0f64, |m, r| m.max(r.0.abs()))
    }
}

/// sup_α{f^α + c^α u − L^α u} at every node.
pub fn residual(scheme: &AssembledScheme, u: &GridFunction) -> Result<GridFunction> {
    if !u.grid.same_lattice(&scheme.grid) || u.values.len() != scheme.len() {
        return Err(Error::GridMismatch("function and scheme grids differ".into()));
    }
    let r = scheme.residual_values(&u.values);
    GridFunction::new(scheme.grid.clone(), r.into_iter().map(|v| v.0).collect())
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub sweep: Sweep,
    pub method: Method,
    /// Dense policy evaluation up to this many nodes.
    pub dense_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_iter: 200_000, sweep: Sweep::GaussSeidel, method: Method::Policy, dense_limit: 4096 }
    }
}

fn finish(scheme: &AssembledScheme, u: Vec<f64>, iterations: usize, start: Instant, tol: f64, method: Method, sweep: Sweep) -> Result<SolveReport> {
    let r = scheme.residual_values(&u);
    let residual = r.iter().fold(0.0f64, |m, v| m.max(v.0.abs()));
    let control = r.iter().map(|v| v.1).collect();
    let sup_u = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let solution = GridFunction::new(scheme.grid.clone(), u)?;
    Ok(SolveReport {
        solution,
        control,
        iterations,
        residual,
        converged: residual <= tol,
        seconds: start.elapsed().as_secs_f64(),
        method,
        sweep,
        sup_u,
        stability_bound: scheme.stability_bound(),
    })
}

/// Value iteration from u₀ = 0.
pub fn solve_value_iteration(scheme: &AssembledScheme, tol: f64, max_iter: usize, sweep: Sweep) -> Result<SolveReport> {
    if !(tol > 0.0) {
        return invalid("tol must be positive");
    }
    let start = Instant::now();
    let n = scheme.len();
    let mut u = vec![0.0; n];
    let mut iterations = 0;
    let mut prev = f64::INFINITY;
    let mut res = scheme.sup_norm_residual(&u);
    while res > tol && iterations < max_iter {
        match sweep {
            Sweep::Jacobi => {
                u = (0..n).into_par_iter().map(|i| scheme.local_solve(i, &u)).collect();
            }
            Sweep::GaussSeidel => {
                if iterations % 2 == 0 {
                    for i in 0..n {
                        u[i] = scheme.local_solve(i, &u);
                    }
                } else {
                    for i in (0..n).rev() {
                        u[i] = scheme.local_solve(i, &u);
                    }
                }
            }
        }
        iterations += 1;
        res = scheme.sup_norm_residual(&u);
        if sweep == Sweep::Jacobi && iterations > 1 && res > prev * (1.0 + 1e-9) + 1e-14 {
            return Err(Error::Internal(format!(
                "Jacobi residual increased from {prev} to {res} at iteration {iterations}"
            )));
        }
        prev = res;
    }
    finish(scheme, u, iterations, start, tol, Method::Value, sweep)
}

/// Solve the frozen-policy linear system (c + W) u − K u = const − f.
fn evaluate_policy(scheme: &AssembledScheme, policy: &[usize], u: &mut [f64], opts: &SolveOptions) -> Result<()> {
    let n = scheme.len();
    if n <= opts.dense_limit {
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for i in 0..n {
            let c = &scheme.controls[policy[i]];
            a[(i, i)] += c.c[i] + c.op.diag[i];
            for e in c.op.row_ptr[i]..c.op.row_ptr[i + 1] {
                a[(i, c.op.cols[e] as usize)] -= c.op.weights[e];
            }
            rhs[i] = c.op.constant[i] - c.f[i];
        }
        let sol = a.lu().solve(&rhs).ok_or_else(|| Error::Internal("singular policy-evaluation system".into()))?;
        u.copy_from_slice(sol.as_slice());
        return Ok(());
    }
    // Iterative evaluation to tol/10 on the linear residual.
    let target = 0.1 * opts.tol;
    let lin = |i: usize, u: &[f64]| {
        let c = &scheme.controls[policy[i]];
        (c.op.off_diag(i, u) - c.f[i]) / (c.c[i] + c.op.diag[i])
    };
    let res = |u: &[f64]| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let c = &scheme.controls[policy[i]];
                (c.f[i] + (c.c[i] + c.op.diag[i]) * u[i] - c.op.off_diag(i, u)).abs()
            })
            .reduce(|| 0.0, f64::max)
    };
    let mut it = 0;
    while res(u) > target {
        if it >= opts.max_iter {
            return Err(Error::NotConverged { iterations: it, residual: res(u) });
        }
        if it % 2 == 0 {
            for i in 0..n {
                u[i] = lin(i, u);
            }
        } else {
            for i in (0..n).rev() {
                u[i] = lin(i, u);
            }
        }
        it += 1;
    }
    Ok(())
}

/// Howard policy iteration from u₀ = 0.
pub fn solve_policy_iteration(scheme: &AssembledScheme, tol: f64, max_outer: usize, opts: &SolveOptions) -> Result<SolveReport> {
    if !(tol > 0.0) {
        return invalid("tol must be positive");
    }
    let start = Instant::now();
    let n = scheme.len();
    let mut u = vec![0.0; n];
    let mut policy: Vec<usize> = scheme.residual_values(&u).into_iter().map(|r| r.1).collect();
    let mut outer = 0;
    let eval_opts = SolveOptions { tol, ..opts.clone() };
    loop {
        evaluate_policy(scheme, &policy, &mut u, &eval_opts)?;
        outer += 1;
        let r = scheme.residual_values(&u);
        let res = r.iter().fold(0.0f64, |m, v| m.max(v.0.abs()));
        if res <= tol || outer >= max_outer {
            break;
        }
        // Keep the current control unless another is strictly better.
        let mut changed = false;
        for i in 0..n {
            let cur = scheme.branch(policy[i], i, &u);
            if r[i].0 > cur + 1e-14 * (1.0 + cur.abs()) && r[i].1 != policy[i] {
                policy[i] = r[i].1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    finish(scheme, u, outer, start, tol, Method::Policy, opts.sweep)
}

/// Solve with the configured method.
pub fn solve(scheme: &AssembledScheme, opts: &SolveOptions) -> Result<SolveReport> {
    match opts.method {
        Method::Value => solve_value_iteration(scheme, opts.tol, opts.max_iter, opts.sweep),
        Method::Policy => solve_policy_iteration(scheme, opts.tol, 200, opts),
    }
}
