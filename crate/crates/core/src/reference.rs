//! High-accuracy evaluation of the continuous nonlocal operator
//! I[φ](x) = ∫ (φ(x+η(z)) − φ(x) − 1_{|z|<1} η(z)·∇φ(x)) ν(dz)
//! and manufactured forcings built from it.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functions::{dot, Point, ScalarFn};
use crate::grid::{Grid, GridFunction};
use crate::measure::{density_mass, radial_integral, MeasureQuad};
use crate::model::{Control, Density, JumpMap, LevyModel};
use crate::special::{frac_lap_constant, gamma};

/// Lévy symbol ψ(k) with I[e^{ik·x}] = ψ(k)e^{ik·x}, as (re, im), where a closed form exists.
pub fn levy_symbol(model: &LevyModel, jump: &JumpMap, k: &Point) -> Option<(f64, f64)> {
    let m = jump.matrix(model.dim)?;
    // η = Mz, so k·η = (Mᵀk)·z.
    let kt = [m[0][0] * k[0] + m[1][0] * k[1], m[0][1] * k[0] + m[1][1] * k[1]];
    let kn = if model.dim == 1 { kt[0].abs() } else { kt[0].hypot(kt[1]) };
    let sigma = model.sigma;
    let (mut re, mut im) = match model.density {
        Density::Zero => (0.0, 0.0),
        Density::PowerLaw { scale } => (-(scale / frac_lap_constant(model.dim, sigma)) * kn.powf(sigma), 0.0),
        Density::Tempered { scale, rate } if model.dim == 1 && (sigma - 1.0).abs() > 1e-3 => {
            let r = (rate * rate + kn * kn).powf(0.5 * sigma) * (sigma * (kn / rate).atan()).cos() - rate.powf(sigma);
            (2.0 * scale * gamma(-sigma) * r, 0.0)
        }
        _ => return None,
    };
    for at in &model.atoms {
        let e = jump.apply(&at.z.0);
        let t = dot(k, &e);
        re += at.mass * (t.cos() - 1.0);
        im += at.mass * (t.sin() - if model.norm(&at.z.0) < 1.0 { t } else { 0.0 });
    }
    Some((re, im))
}

/// Length over which the function varies appreciably.
fn length_scale(phi: &ScalarFn) -> f64 {
    match phi {
        ScalarFn::Const { .. } => f64::INFINITY,
        ScalarFn::Cos { freq, .. } | ScalarFn::Sin { freq, .. } => 0.25 / freq.0[0].hypot(freq.0[1]),
        ScalarFn::Gaussian { width, .. } => 0.25 * width,
        ScalarFn::AbsSin { freq, .. } => 0.125 / freq.0[0].hypot(freq.0[1]),
        ScalarFn::Sum { terms } => terms.iter().map(length_scale).fold(f64::INFINITY, f64::min),
    }
}

/// Radius around x outside which the function vanishes to double precision.
fn decay_radius(phi: &ScalarFn, x: &Point) -> Option<f64> {
    match phi {
        ScalarFn::Gaussian { width, center, .. } => Some((x[0] - center.0[0]).hypot(x[1] - center.0[1]) + 6.5 * width),
        _ => None,
    }
}

fn sup_abs(phi: &ScalarFn) -> f64 {
    match phi {
        ScalarFn::Const { value } => value.abs(),
        ScalarFn::Cos { amp, offset, .. } | ScalarFn::Sin { amp, offset, .. } => amp.abs() + offset.abs(),
        ScalarFn::Gaussian { amp, .. } => amp.abs(),
        ScalarFn::AbsSin { amp, offset, .. } => amp.abs() + offset.abs(),
        ScalarFn::Sum { terms } => terms.iter().map(sup_abs).sum(),
    }
}

fn min_singular(m: &[[f64; 2]; 2], dim: usize) -> f64 {
    if dim == 1 {
        return m[0][0].abs();
    }
    let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let c = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let tr = a + c;
    let det = a * c - b * b;
    (0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt())).max(0.0).sqrt()
}

/// Tail mass ν_density(|z| > r).
fn tail_mass(model: &LevyModel, r: f64) -> f64 {
    density_mass(model, r, f64::INFINITY)
}

/// Consecutive pieces of (a, b) no wider than `ell` and no wider than their left end.
fn pieces(a: f64, b: f64, ell: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut lo = a;
    while lo < b {
        let hi = (lo + lo.min(ell)).min(b);
        out.push((lo, hi));
        lo = hi;
    }
    out
}

fn angular_for(r: f64, ell: f64) -> usize {
    let n = (16.0 * r / ell).ceil() as usize;
    n.clamp(64, 4096)
}

/// ∫_{r0<|z|<r1} g(z) ν(dz) with pieces refined to the given length scale.
fn density_integral<F: Fn(&Point) -> f64 + Copy>(model: &LevyModel, r0: f64, r1: f64, ell: f64, q: &MeasureQuad, g: F) -> f64 {
    if !model.has_density() || r1 <= r0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut start = r0;
    if r0 == 0.0 {
        // Graded toward the origin below the first resolved scale.
        let first = ell.min(r1).min(1.0);
        total += radial_integral::<1, _>(model, 0.0, first, q, |z| [g(z)]).value[0];
        start = first;
    }
    for (a, b) in pieces(start, r1, ell) {
        let qq = MeasureQuad { angular: angular_for(b, ell).max(q.angular), ..*q };
        total += radial_integral::<1, _>(model, a, b, &qq, |z| [g(z)]).value[0];
    }
    total
}

/// Reference evaluation of I[φ](x) by quadrature, with a refinement factor for self-checks.
fn quadrature_operator(model: &LevyModel, jump: &JumpMap, phi: &ScalarFn, x: &Point, refine: f64) -> Result<f64> {
    let lip = jump.lipschitz_const.max(1e-300);
    let ell = (length_scale(phi) / lip / refine).min(0.25);
    let q = MeasureQuad::default();
    let mut value = 0.0;
    if model.has_density() {
        let inner_top = model.density_support_radius().map_or(1.0, |s| s.min(1.0));
        value += density_integral(model, 0.0, inner_top, ell, &q, |z| phi.remainder(x, &jump.apply(z)));
        let support = model.density_support_radius().unwrap_or(f64::INFINITY);
        if support > 1.0 {
            let scale = sup_abs(phi).max(1e-300);
            let cut = match (decay_radius(phi, x), jump.matrix(model.dim)) {
                (Some(rho), Some(m)) if min_singular(&m, model.dim) > 0.0 => (rho / min_singular(&m, model.dim)).max(1.0),
                _ => {
                    let mut r = 2.0;
                    while 2.0 * scale * tail_mass(model, r) > 1e-14 * scale {
                        r *= 2.0;
                        if r > 1e7 {
                            return Err(Error::Quadrature {
                                achieved: 2.0 * scale * tail_mass(model, r),
                                budget: 1e-14 * scale,
                                context: "reference operator tail".into(),
                            });
                        }
                    }
                    r
                }
            }
            .min(support);
            if cut > 1.0 {
                value += density_integral(model, 1.0, cut, ell, &q, |z| phi.increment(x, &jump.apply(z)));
            }
            if support > cut {
                value -= phi.eval(x) * tail_mass(model, cut);
            }
        }
    }
    for at in &model.atoms {
        let e = jump.apply(&at.z.0);
        let d = if model.norm(&at.z.0) < 1.0 { phi.remainder(x, &e) } else { phi.increment(x, &e) };
        value += at.mass * d;
    }
    if !value.is_finite() {
        return Err(Error::Quadrature { achieved: f64::INFINITY, budget: 0.0, context: "reference operator".into() });
    }
    Ok(value)
}

/// I[φ](x) for the Lévy part of one control.
pub fn levy_operator(model: &LevyModel, jump: &JumpMap, phi: &ScalarFn, x: &Point) -> Result<f64> {
    levy_operator_impl(model, jump, phi, x, false)
}

/// As `levy_operator`, but quadrature results are confirmed by halving the panel widths.
pub fn levy_operator_checked(model: &LevyModel, jump: &JumpMap, phi: &ScalarFn, x: &Point) -> Result<f64> {
    levy_operator_impl(model, jump, phi, x, true)
}

fn levy_operator_impl(model: &LevyModel, jump: &JumpMap, phi: &ScalarFn, x: &Point, check: bool) -> Result<f64> {
    match phi {
        ScalarFn::Const { .. } => return Ok(0.0),
        ScalarFn::Sum { terms } => {
            let mut v = 0.0;
            for t in terms {
                v += levy_operator_impl(model, jump, t, x, check)?;
            }
            return Ok(v);
        }
        _ => {}
    }
    if let Some(pw) = phi.plane_waves() {
        let mut v = 0.0;
        let mut ok = true;
        for (amp, k, ph) in &pw.waves {
            match levy_symbol(model, jump, k) {
                Some((re, im)) => {
                    let th = dot(k, x) + ph;
                    v += amp * (re * th.cos() - im * th.sin());
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(v);
        }
    }
    let v = quadrature_operator(model, jump, phi, x, 1.0)?;
    if check {
        let v2 = quadrature_operator(model, jump, phi, x, 2.0)?;
        let budget = 1e-9 * (1.0 + v.abs());
        if (v - v2).abs() > budget {
            return Err(Error::Quadrature { achieved: (v - v2).abs(), budget, context: "reference operator halving".into() });
        }
        return Ok(v2);
    }
    Ok(v)
}

/// ∫_{|z|<δ} (φ(x+η) − φ(x) − η·∇φ(x)) ν(dz): the small-jump part replaced by the correction.
pub fn small_jump_operator(model: &LevyModel, jump: &JumpMap, phi: &ScalarFn, x: &Point, delta: f64) -> f64 {
    let lip = jump.lipschitz_const.max(1e-300);
    let ell = (length_scale(phi) / lip).min(0.25);
    let mut v = density_integral(model, 0.0, delta, ell, &MeasureQuad::default(), |z| phi.remainder(x, &jump.apply(z)));
    for at in &model.atoms {
        if model.norm(&at.z.0) < delta {
            v += at.mass * phi.remainder(x, &jump.apply(&at.z.0));
        }
    }
    v
}

/// The generator b·∇φ + I[φ] of one control at x.
pub fn generator(control: &Control, phi: &ScalarFn, x: &Point) -> Result<f64> {
    Ok(dot(&control.b, &phi.grad(x)) + levy_operator(&control.levy, &control.jump, phi, x)?)
}

/// Forcing making u* an exact solution of f + c u − b·∇u − I[u] = 0 for this control.
pub fn forcing_value(control: &Control, u_star: &ScalarFn, x: &Point) -> Result<f64> {
    Ok(generator(control, u_star, x)? - control.c.eval(x) * u_star.eval(x))
}

/// Nodal manufactured forcing f^α = I[u*] + b·∇u* − c u*.
pub fn manufacture_forcing(control: &Control, u_star: &ScalarFn, grid: Arc<Grid>) -> Result<GridFunction> {
    use rayon::prelude::*;
    let values: Result<Vec<f64>> =
        (0..grid.len()).into_par_iter().map(|i| forcing_value(control, u_star, &grid.node_coords(i))).collect();
    GridFunction::new(grid, values?)
}
