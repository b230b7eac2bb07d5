//! Small-jump diffusion correction a_δ, its square root, and the drift correction b̃.

use nalgebra::{Matrix2, SymmetricEigen};
use serde::Serialize;
use statrs::function::gamma::gamma_li;

use crate::error::{invalid, Error, Result};
use crate::functions::Point;
use crate::measure::{radial_integral, MeasureQuad};
use crate::model::{Density, JumpMap, LevyModel};

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Serialize)]
pub struct CorrectionData {
    pub delta: f64,
    pub a_delta: Mat2,
    /// Columns of the square root: `sqrt_a[i]` is the i-th column.
    pub sqrt_a: [Point; 2],
    pub b_tilde: Point,
    pub b_delta: Point,
    /// Magnitude of negative eigenvalues clipped to zero.
    pub psd_clip: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0,1), got {delta}"));
    }
    Ok(())
}

fn mat_mul_t(m: &Mat2, s: f64) -> Mat2 {
    // s · M Mᵀ
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = s * (m[i][0] * m[j][0] + m[i][1] * m[j][1]);
        }
    }
    out
}

/// Closed form of a_δ for power-law families with a linear jump map.
fn a_delta_closed(model: &LevyModel, jump: &JumpMap, delta: f64) -> Option<Mat2> {
    let m = jump.matrix(model.dim)?;
    let s = model.sigma;
    let mom = delta.powf(2.0 - s) / (2.0 - s);
    match (model.dim, &model.density) {
        (_, Density::Zero) => Some([[0.0; 2]; 2]),
        // ∫_0^δ r^{1−σ}e^{−μr} dr = μ^{σ−2} γ(2−σ, μδ).
        (1, Density::Tempered { scale, rate }) => {
            let t = rate.powf(s - 2.0) * gamma_li(2.0 - s, rate * delta);
            Some([[scale * m[0][0] * m[0][0] * t, 0.0], [0.0, 0.0]])
        }
        (2, Density::Tempered { scale, rate }) => {
            let t = rate.powf(s - 2.0) * gamma_li(2.0 - s, rate * delta);
            Some(mat_mul_t(&m, 0.5 * scale * std::f64::consts::PI * t))
        }
        (1, Density::PowerLaw { scale }) => Some([[scale * m[0][0] * m[0][0] * mom, 0.0], [0.0, 0.0]]),
        (1, Density::OneSided { scale }) => Some([[0.5 * scale * m[0][0] * m[0][0] * mom, 0.0], [0.0, 0.0]]),
        (2, Density::PowerLaw { scale }) => Some(mat_mul_t(&m, 0.5 * scale * std::f64::consts::PI * mom)),
        _ => None,
    }
}

/// a_δ = ½∫_{|z|<δ} η ηᵀ ν(dz) by graded radial quadrature, with an error estimate.
pub fn a_delta_quadrature(model: &LevyModel, jump: &JumpMap, delta: f64) -> Result<(Mat2, f64)> {
    check_delta(delta)?;
    let integrand = |z: &Point| {
        let e = jump.apply(z);
        [0.5 * e[0] * e[0], 0.5 * e[0] * e[1], 0.5 * e[1] * e[1]]
    };
    let fine = radial_integral::<3, _>(model, 0.0, delta, &MeasureQuad::default(), integrand);
    let coarse = radial_integral::<3, _>(model, 0.0, delta, &MeasureQuad { order: 10, angular: 48, ..Default::default() }, integrand);
    let v = fine.value;
    let err = (0..3).map(|k| (v[k] - coarse.value[k]).abs()).fold(0.0, f64::max) + fine.remainder;
    let scale = v[0].abs() + v[2].abs();
    let budget = 1e-9 * scale + 1e-300;
    if !(err <= budget) || !v.iter().all(|x| x.is_finite()) {
        return Err(Error::Quadrature { achieved: err, budget, context: "a_delta".into() });
    }
    let mut a = [[v[0], v[1]], [v[1], v[2]]];
    if model.dim == 1 {
        a = [[v[0], 0.0], [0.0, 0.0]];
    }
    Ok((a, err))
}

/// The diffusion matrix replacing jumps smaller than δ. Atoms are not diffused: they enter
/// the nonlocal quadrature exactly at every δ.
pub fn a_delta(model: &LevyModel, jump: &JumpMap, delta: f64) -> Result<Mat2> {
    check_delta(delta)?;
    if let Some(a) = a_delta_closed(model, jump, delta) {
        return Ok(a);
    }
    a_delta_quadrature(model, jump, delta).map(|(a, _)| a)
}

/// Symmetric square root of a PSD matrix, returned as columns; clipped eigenvalue mass in `.1`.
pub fn sqrt_spd(a: &Mat2, dim: usize) -> Result<([Point; 2], f64)> {
    let trace = if dim == 1 { a[0][0] } else { a[0][0] + a[1][1] };
    let size = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if size == 0.0 {
        return Ok(([[0.0; 2]; 2], 0.0));
    }
    let tol = 1e-10 * trace.abs().max(size);
    if dim == 1 {
        let v = a[0][0];
        if v < -tol {
            return Err(Error::InvalidMeasure(format!("negative diffusion coefficient {v}")));
        }
        return Ok(([[v.max(0.0).sqrt(), 0.0], [0.0, 0.0]], (-v).max(0.0)));
    }
    if (a[0][1] - a[1][0]).abs() > 1e-12 * size {
        return invalid("matrix is not symmetric");
    }
    let m = Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1]);
    let eig = SymmetricEigen::new(m);
    let mut clip = 0.0f64;
    let mut root = Matrix2::zeros();
    for k in 0..2 {
        let l = eig.eigenvalues[k];
        if l < -tol {
            return Err(Error::InvalidMeasure(format!("eigenvalue {l} below -tol_psd = {}", -tol)));
        }
        clip = clip.max((-l).max(0.0));
        let v = eig.eigenvectors.column(k);
        root += l.max(0.0).sqrt() * v * v.transpose();
    }
    let cols = [[root[(0, 0)], root[(1, 0)]], [root[(0, 1)], root[(1, 1)]]];
    Ok((cols, clip))
}

/// b̃ = ∫_{δ<|z|<1} η ν(dz) over the density part, plus Σ m·η(z) over atoms with |z| < 1.
pub fn b_tilde_delta(model: &LevyModel, jump: &JumpMap, delta: f64) -> Result<Point> {
    check_delta(delta)?;
    if model.symmetric && jump.odd {
        return Ok([0.0, 0.0]);
    }
    let mut b = [0.0, 0.0];
    let closed = match (jump.matrix(model.dim), &model.density, model.dim) {
        (_, Density::Zero, _) => Some(0.0),
        (Some(m), Density::OneSided { scale }, 1) => {
            let s = model.sigma;
            let mom = if (s - 1.0).abs() < 1e-14 { -delta.ln() } else { (1.0 - delta.powf(1.0 - s)) / (1.0 - s) };
            Some(scale * m[0][0] * mom)
        }
        _ => None,
    };
    if let Some(v) = closed {
        b[0] = v;
    } else {
        let q = radial_integral::<2, _>(model, delta, 1.0, &MeasureQuad::default(), |z| jump.apply(z));
        let coarse = radial_integral::<2, _>(model, delta, 1.0, &MeasureQuad { order: 10, angular: 48, ..Default::default() }, |z| jump.apply(z));
        let err = (0..2).map(|k| (q.value[k] - coarse.value[k]).abs()).fold(0.0, f64::max);
        let budget = 1e-9 * (q.value[0].abs() + q.value[1].abs()) + 1e-12;
        if !(err <= budget) {
            return Err(Error::Quadrature { achieved: err, budget, context: "b_tilde".into() });
        }
        b = q.value;
    }
    for at in &model.atoms {
        if model.norm(&at.z.0) < 1.0 {
            let e = jump.apply(&at.z.0);
            b[0] += at.mass * e[0];
            b[1] += at.mass * e[1];
        }
    }
    if model.dim == 1 {
        b[1] = 0.0;
    }
    Ok(b)
}

/// All correction data for one control with constant drift `b`.
pub fn correction(model: &LevyModel, jump: &JumpMap, b: &Point, delta: f64) -> Result<CorrectionData> {
    let a = a_delta(model, jump, delta)?;
    let (sqrt_a, psd_clip) = sqrt_spd(&a, model.dim)?;
    let b_tilde = b_tilde_delta(model, jump, delta)?;
    let b_delta = [b[0] - b_tilde[0], b[1] - b_tilde[1]];
    Ok(CorrectionData { delta, a_delta: a, sqrt_a, b_tilde, b_delta, psd_clip })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Atom, ModelParams};

    fn frac(sigma: f64, dim: usize) -> LevyModel {
        builtin_model("frac_laplacian", sigma, dim, &ModelParams { a: Some(1.0), ..Default::default() }).unwrap()
    }

    #[test]
    fn tempered_closed_form_matches_quadrature() {
        for dim in [1, 2] {
            for sigma in [0.3, 1.0, 1.5, 1.9] {
                let m = builtin_model("tempered", sigma, dim, &ModelParams { a: Some(1.0), rate: Some(2.0), ..Default::default() }).unwrap();
                for delta in [0.5, 0.1, 0.01] {
                    let closed = a_delta(&m, &JumpMap::identity(), delta).unwrap();
                    let (quad, _) = a_delta_quadrature(&m, &JumpMap::identity(), delta).unwrap();
                    let rel = (closed[0][0] - quad[0][0]).abs() / closed[0][0];
                    assert!(rel < 1e-9, "dim {dim} sigma {sigma} delta {delta}: {rel}");
                }
            }
        }
    }

    #[test]
    fn one_dimensional_example() {
        let a = a_delta(&frac(1.0, 1), &JumpMap::identity(), 0.5).unwrap();
        assert!((a[0][0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for sigma in [0.5, 1.0, 1.5] {
            for dim in [1, 2] {
                let m = frac(sigma, dim);
                for p in 2..=6 {
                    let d = 0.5f64.powi(p);
                    let c = a_delta(&m, &JumpMap::identity(), d).unwrap();
                    let (q, _) = a_delta_quadrature(&m, &JumpMap::identity(), d).unwrap();
                    for i in 0..dim {
                        for j in 0..dim {
                            assert!((c[i][j] - q[i][j]).abs() <= 1e-10 * c[0][0], "σ={sigma} N={dim} δ={d}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn compound_poisson_has_zero_correction() {
        let p = ModelParams { atoms: vec![Atom::new(2.0, [0.5, 0.0])], ..Default::default() };
        let m = builtin_model("compound_poisson", 1.0, 1, &p).unwrap();
        assert_eq!(a_delta(&m, &JumpMap::identity(), 0.75).unwrap(), [[0.0; 2]; 2]);
        let b = b_tilde_delta(&m, &JumpMap::identity(), 0.25).unwrap();
        assert_eq!(b, [1.0, 0.0]);
    }

    #[test]
    fn one_sided_drift_closed_form() {
        let m = builtin_model("one_sided", 0.5, 1, &ModelParams::default()).unwrap();
        let b = b_tilde_delta(&m, &JumpMap::identity(), 0.25).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-14);
        let q = radial_integral::<1, _>(&m, 0.25, 1.0, &MeasureQuad::default(), |z| [z[0]]).value[0];
        assert!((q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_examples() {
        let (r, _) = sqrt_spd(&[[1.0, 0.0], [0.0, 1.0]], 2).unwrap();
        assert!((r[0][0] - 1.0).abs() < 1e-15 && r[0][1].abs() < 1e-15 && (r[1][1] - 1.0).abs() < 1e-15);
        let (r, _) = sqrt_spd(&[[4.0, 0.0], [0.0, 1.0]], 2).unwrap();
        assert!((r[0][0] - 2.0).abs() < 1e-15 && (r[1][1] - 1.0).abs() < 1e-15);
        assert!(matches!(sqrt_spd(&[[1.0, 0.0], [0.0, -1.0]], 2), Err(Error::InvalidMeasure(_))));
        let (r, clip) = sqrt_spd(&[[1.0, 0.0], [0.0, -1e-12]], 2).unwrap();
        assert!(clip > 0.0 && r[1][1] == 0.0);
    }
}
