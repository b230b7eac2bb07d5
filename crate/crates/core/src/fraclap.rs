//! Weights of powers of the discrete Laplacian, (−Δ_h)^{σ/2}.
//!
//! In one dimension the weights have the closed form
//! κ_{1,j} = A·Γ(|j| − σ/2)/Γ(|j| + 1 + σ/2), A = 2^σ Γ((1+σ)/2)/(√π |Γ(−σ/2)|),
//! and in any dimension the heat-semigroup representation
//! κ_{1,j} = |Γ(−σ/2)|^{-1} ∫_0^∞ ∏_k e^{−2t} I_{j_k}(2t) t^{−1−σ/2} dt.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{GridFunction, Index};
use crate::special::{bessel_i_scaled, gamma, gauss, hurwitz_zeta, ln_gamma};
use crate::stencil::StencilOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMethod {
    #[default]
    GammaRatio,
    Semigroup,
}

#[derive(Debug, Clone)]
pub struct FracLapWeights {
    pub sigma: f64,
    pub h: f64,
    pub dim: usize,
    pub max_offset: i64,
    /// κ_{h,j} for every kept offset, in lexicographic order.
    pub entries: Vec<(Index, f64)>,
    /// Weight mass beyond `max_offset` that was dropped (zero for folded tables).
    pub neglected_mass: f64,
    pub clamp_defect: f64,
    /// Lattice period when the table is folded onto a periodic grid.
    pub period: Option<i64>,
}

fn check(sigma: f64, h: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma < 2.0) {
        return invalid(format!("sigma must lie in (0,2), got {sigma}"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("h must be positive, got {h}"));
    }
    Ok(())
}

/// Asymptotic constant A with κ_{1,j} ≈ A |j|^{−1−σ}.
pub fn tail_constant(sigma: f64) -> f64 {
    let s = 0.5 * sigma;
    4f64.powf(s) * gamma(0.5 + s) / (PI.sqrt() * gamma(-s).abs())
}

/// Σ_{j≠0} κ_{1,j} in one dimension, i.e. the diagonal of the unit-spacing operator.
pub fn total_mass_1d(sigma: f64) -> f64 {
    let s = 0.5 * sigma;
    4f64.powf(s) * gamma(0.5 + s) / (PI.sqrt() * gamma(1.0 + s))
}

/// κ_{1,j} for j = 1..=jmax by the Gamma-ratio closed form (index 0 unused).
pub fn gamma_ratio_table(sigma: f64, jmax: usize) -> Vec<f64> {
    let s = 0.5 * sigma;
    let mut out = vec![0.0; jmax + 1];
    if jmax == 0 {
        return out;
    }
    // Anchor on log-gamma every 1024 steps; the recurrence is exact in between.
    let anchor = |j: usize| tail_constant(sigma) * (ln_gamma(j as f64 - s) - ln_gamma(j as f64 + 1.0 + s)).exp();
    out[1] = tail_constant(sigma) * gamma(1.0 - s) / gamma(2.0 + s);
    for j in 2..=jmax {
        out[j] = if j % 1024 == 0 {
            anchor(j)
        } else {
            let jf = (j - 1) as f64;
            out[j - 1] * (jf - s) / (jf + 1.0 + s)
        };
    }
    out
}

/// Taylor coefficients of e^{−2t} I_m(2t) / t^m up to degree `deg`.
fn heat_series(m: usize, deg: usize) -> Vec<f64> {
    let mut c = vec![0.0; deg + 1];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut acc = 0.0;
        for b in 0..=k / 2 {
            let a = k - 2 * b;
            let ln = (a as f64) * 2f64.ln() - ln_gamma(a as f64 + 1.0) - ln_gamma(b as f64 + 1.0) - ln_gamma((m + b) as f64 + 1.0);
            let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * ln.exp();
        }
        *ck = acc;
    }
    c
}

/// Semigroup-integral weights κ_{1,j} for all 0 ≤ j_k ≤ jmax (dense table, row-major in 2D).
pub fn semigroup_table(sigma: f64, jmax: usize, dim: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma < 2.0) {
        return invalid(format!("sigma must lie in (0,2), got {sigma}"));
    }
    if !(dim == 1 || dim == 2) {
        return invalid("dimension must be 1 or 2");
    }
    let s = 0.5 * sigma;
    let n = jmax + 1;
    let size = if dim == 1 { n } else { n * n };
    let norm = 1.0 / gamma(-s).abs();
    let t0: f64 = 1.0 / 64.0;
    const DEG: usize = 16;

    // Small times: integrate the power series exactly on (0, t0].
    let series: Vec<Vec<f64>> = (0..n).map(|m| heat_series(m, DEG)).collect();
    let mut table = vec![0.0; size];
    let mut small = |flat: usize, degs: &[usize]| {
        let p: usize = degs.iter().sum();
        if p == 0 {
            return;
        }
        // Product of the per-axis series.
        let mut prod = vec![0.0; DEG + 1];
        prod[0] = 1.0;
        for &m in degs {
            let mut next = vec![0.0; DEG + 1];
            for a in 0..=DEG {
                if prod[a] == 0.0 {
                    continue;
                }
                for b in 0..=(DEG - a) {
                    next[a + b] += prod[a] * series[m][b];
                }
            }
            prod = next;
        }
        let mut v = 0.0;
        for (k, c) in prod.iter().enumerate() {
            let e = (p + k) as f64 - s;
            v += c * t0.powf(e) / e;
        }
        table[flat] += v;
    };
    if dim == 1 {
        for j in 0..n {
            small(j, &[j]);
        }
    } else {
        for a in 0..n {
            for b in 0..n {
                small(a * n + b, &[a, b, 0][..2]);
            }
        }
    }

    // Quadrature nodes: t in [t0, 1] on dyadic panels, and t > 1 through t = v^{-1/s}.
    let rule = gauss(20);
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    let mut a = t0;
    while a < 1.0 {
        let b = (2.0 * a).min(1.0);
        for (t, w) in rule.mapped(a, b) {
            nodes.push((t, w * t.powf(-1.0 - s)));
        }
        a = b;
    }
    // ∫_1^∞ G t^{-1-s} dt = (1/s) ∫_0^1 G(v^{-1/s}) dv, panels graded toward v = 0.
    let sub = 4;
    let ratio = 2f64.powf(1.0 / sub as f64);
    let vmin = {
        // G ≲ (4πt)^{-N/2} = (4π)^{-N/2} v^{N/(2s)}; stop where the rest is below 1e-18.
        let p = dim as f64 / (2.0 * s) + 1.0;
        (1e-18f64 * p).powf(1.0 / p).max(1e-300)
    };
    let mut hi = 1.0;
    while hi > vmin {
        let lo = hi / ratio;
        for (v, w) in rule.mapped(lo, hi) {
            nodes.push((v.powf(-1.0 / s), w / s));
        }
        hi = lo;
    }

    let contributions: Vec<Vec<f64>> = nodes
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = vec![0.0; size];
            for &(t, w) in chunk {
                let b = bessel_i_scaled(2.0 * t, jmax);
                if dim == 1 {
                    for j in 1..n {
                        acc[j] += w * b[j];
                    }
                } else {
                    for i in 0..n {
                        let wi = w * b[i];
                        for j in 0..n {
                            acc[i * n + j] += wi * b[j];
                        }
                    }
                }
            }
            acc
        })
        .collect();
    for c in contributions {
        for (t, v) in table.iter_mut().zip(c) {
            *t += v;
        }
    }
    table[0] = 0.0;
    for v in table.iter_mut() {
        *v *= norm;
        if !v.is_finite() {
            return Err(Error::Quadrature { achieved: f64::INFINITY, budget: 0.0, context: "semigroup weights".into() });
        }
    }
    Ok(table)
}

/// One-dimensional weights κ_{h,j} for 0 < |j| ≤ J.
pub fn weights_1d(sigma: f64, h: f64, max_offset: i64) -> Result<FracLapWeights> {
    weights_1d_with(sigma, h, max_offset, WeightMethod::GammaRatio)
}

pub fn weights_1d_with(sigma: f64, h: f64, max_offset: i64, method: WeightMethod) -> Result<FracLapWeights> {
    check(sigma, h)?;
    if max_offset < 1 {
        return invalid("max_offset must be at least 1");
    }
    let j = max_offset as usize;
    let base = match method {
        WeightMethod::GammaRatio => gamma_ratio_table(sigma, j),
        WeightMethod::Semigroup => semigroup_table(sigma, j, 1)?,
    };
    let scale = h.powf(-sigma);
    let mut entries = Vec::with_capacity(2 * j);
    for k in (1..=j).rev() {
        entries.push(([-(k as i64), 0], scale * base[k]));
    }
    for (k, v) in base.iter().enumerate().skip(1) {
        entries.push(([k as i64, 0], scale * v));
    }
    // Neglected: 2 Σ_{j>J} κ ≈ 2A ζ(1+σ, J+1).
    let neglected = 2.0 * scale * tail_constant(sigma) * hurwitz_zeta(1.0 + sigma, j as f64 + 1.0);
    let mut w = FracLapWeights {
        sigma,
        h,
        dim: 1,
        max_offset,
        entries,
        neglected_mass: neglected,
        clamp_defect: 0.0,
        period: None,
    };
    w.clamp();
    Ok(w)
}

/// N-dimensional weights from the tensor-product heat kernel, offsets with |j|_∞ ≤ J.
pub fn weights_nd(sigma: f64, h: f64, max_offset: i64, dim: usize) -> Result<FracLapWeights> {
    check(sigma, h)?;
    if max_offset < 1 {
        return invalid("max_offset must be at least 1");
    }
    if dim == 1 {
        return weights_1d_with(sigma, h, max_offset, WeightMethod::Semigroup);
    }
    if dim != 2 {
        return invalid("dimension must be 1 or 2");
    }
    let j = max_offset as usize;
    let n = j + 1;
    let base = semigroup_table(sigma, j, 2)?;
    let scale = h.powf(-sigma);
    let mut entries = Vec::with_capacity((2 * j + 1) * (2 * j + 1));
    let jj = max_offset;
    for a in -jj..=jj {
        for b in -jj..=jj {
            if a == 0 && b == 0 {
                continue;
            }
            let (lo, hi) = {
                let (x, y) = (a.unsigned_abs() as usize, b.unsigned_abs() as usize);
                (x.min(y), x.max(y))
            };
            let v = base[lo * n + hi];
            entries.push(([a, b], scale * v));
        }
    }
    // Dropped mass: 2D weights decay like |j|^{-2-σ}; estimate from the outermost shell.
    let shell: f64 = entries.iter().filter(|(o, _)| o[0].abs().max(o[1].abs()) == jj).map(|e| e.1).sum();
    let neglected = shell * jj as f64 / sigma;
    let mut w = FracLapWeights { sigma, h, dim: 2, max_offset, entries, neglected_mass: neglected, clamp_defect: 0.0, period: None };
    w.clamp();
    Ok(w)
}

/// Weights folded exactly onto a periodic 1D lattice of period P: residues r = 1..P−1.
pub fn periodic_weights_1d(sigma: f64, h: f64, period: i64) -> Result<FracLapWeights> {
    check(sigma, h)?;
    if period < 2 {
        return invalid("period must be at least 2");
    }
    let p = period as usize;
    let j0 = (64 * p).max(1 << 16);
    let base = gamma_ratio_table(sigma, j0);
    let a = tail_constant(sigma);
    // S(m) = Σ_{l≥0} κ_{m + lP}, for m = 1..P.
    let mut partial = vec![0.0; p + 1];
    for (j, v) in base.iter().enumerate().skip(1) {
        let m = (j - 1) % p + 1;
        partial[m] += v;
    }
    for (m, pm) in partial.iter_mut().enumerate().skip(1) {
        // First index in the class above j0.
        let l0 = (j0 - m) / p + 1;
        let first = (m + l0 * p) as f64;
        *pm += a * (p as f64).powf(-1.0 - sigma) * hurwitz_zeta(1.0 + sigma, first / p as f64);
    }
    let scale = h.powf(-sigma);
    let entries: Vec<(Index, f64)> = (1..p).map(|r| ([r as i64, 0], scale * (partial[r] + partial[p - r]))).collect();
    let mut w = FracLapWeights {
        sigma,
        h,
        dim: 1,
        max_offset: period - 1,
        entries,
        neglected_mass: 0.0,
        clamp_defect: 0.0,
        period: Some(period),
    };
    w.clamp();
    Ok(w)
}

impl FracLapWeights {
    fn clamp(&mut self) {
        let mut defect = 0.0;
        for e in self.entries.iter_mut() {
            if e.1 < 0.0 {
                defect += -e.1;
                e.1 = 0.0;
            }
        }
        self.clamp_defect = defect;
    }

    pub fn get(&self, offset: Index) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == offset).map(|e| e.1)
    }

    /// Add the dropped tail mass to the outermost offsets (1D tables only).
    pub fn compensate_tail(&mut self) {
        if self.dim != 1 || self.period.is_some() {
            return;
        }
        let half = 0.5 * self.neglected_mass;
        for e in self.entries.iter_mut() {
            if e.0[0].abs() == self.max_offset {
                e.1 += half;
            }
        }
        self.neglected_mass = 0.0;
    }

    /// Stencil of `−coef·(−Δ_h)^{σ/2}` in difference-of-values form.
    pub fn to_stencil(&self, coef: f64) -> StencilOperator {
        let mut st = StencilOperator::new(self.dim, self.h);
        st.meta.parts.push("fraclap".into());
        st.meta.radius = Some(self.max_offset as f64 * self.h);
        for (o, w) in &self.entries {
            st.add(*o, coef * w);
        }
        st.meta.neglected_mass = coef * self.neglected_mass;
        st.meta.clamp_defect = coef * self.clamp_defect;
        st
    }

    /// CSV with columns `j,kappa` (1D) or `j0,j1,kappa` (2D).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.dim == 1 {
            out.push_str("j,kappa\n");
            for (o, w) in &self.entries {
                out.push_str(&format!("{},{}\n", o[0], crate::grid::fmt_f64(*w)));
            }
        } else {
            out.push_str("j0,j1,kappa\n");
            for (o, w) in &self.entries {
                out.push_str(&format!("{},{},{}\n", o[0], o[1], crate::grid::fmt_f64(*w)));
            }
        }
        out
    }
}

/// (−Δ_h)^{σ/2} u at every node.
pub fn apply_fraclap(weights: &FracLapWeights, u: &GridFunction) -> Result<GridFunction> {
    if let Some(p) = weights.period {
        if u.grid.period() != Some(p) {
            return Err(Error::GridMismatch("folded weights need a periodic grid with the same period".into()));
        }
    }
    let mut out = weights.to_stencil(1.0).apply(u)?;
    for v in out.values.iter_mut() {
        *v = -*v;
    }
    Ok(out)
}
