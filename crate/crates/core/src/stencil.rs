//! Monotone sparse stencils: nonlocal quadrature, semi-Lagrangian local term and upwind drift.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::correction::CorrectionData;
use crate::error::{invalid, Error, Result};
use crate::functions::Point;
use crate::grid::{Grid, GridFunction, Index, Resolved};
use crate::measure::density_mass;
use crate::model::{Density, JumpMap, LevyModel};
use crate::special::{gauss, hurwitz_zeta};

#[derive(Debug, Clone, Default, Serialize)]
pub struct StencilMeta {
    pub alpha: String,
    pub h: f64,
    pub k: Option<f64>,
    pub delta: Option<f64>,
    pub radius: Option<f64>,
    pub parts: Vec<String>,
    /// Smallest weight seen before clamping.
    pub min_weight_preclamp: f64,
    /// Total magnitude removed by clamping negative weights.
    pub clamp_defect: f64,
    /// |Σκ − expected mass| for quadrature-built parts.
    pub quadrature_error: f64,
    /// Mass of ν beyond the tail radius that was dropped.
    pub neglected_mass: f64,
}

/// Offset → weight map representing `Σ_j κ_j (u(x + j h) − u(x))`.
#[derive(Debug, Clone)]
pub struct StencilOperator {
    pub dim: usize,
    pub h: f64,
    pub entries: BTreeMap<Index, f64>,
    pub meta: StencilMeta,
}

impl StencilOperator {
    pub fn new(dim: usize, h: f64) -> Self {
        StencilOperator { dim, h, entries: BTreeMap::new(), meta: StencilMeta { h, ..Default::default() } }
    }

    /// Add weight at an offset; the zero offset contributes nothing and is skipped.
    pub fn add(&mut self, offset: Index, w: f64) {
        if offset == [0, 0] || w == 0.0 {
            return;
        }
        *self.entries.entry(offset).or_insert(0.0) += w;
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Diagonal of the difference-of-values form.
    pub fn diag(&self) -> f64 {
        -self.total_weight()
    }

    pub fn min_weight(&self) -> f64 {
        self.entries.values().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for w in self.entries.values_mut() {
            *w *= s;
        }
        self.meta.quadrature_error *= s.abs();
        self.meta.neglected_mass *= s.abs();
        self
    }

    pub fn merge(&mut self, other: &StencilOperator) {
        for (o, w) in &other.entries {
            self.add(*o, *w);
        }
        self.meta.parts.extend(other.meta.parts.iter().cloned());
        self.meta.min_weight_preclamp = self.meta.min_weight_preclamp.min(other.meta.min_weight_preclamp);
        self.meta.clamp_defect += other.meta.clamp_defect;
        self.meta.quadrature_error += other.meta.quadrature_error;
        self.meta.neglected_mass += other.meta.neglected_mass;
        if other.meta.k.is_some() {
            self.meta.k = other.meta.k;
        }
        if other.meta.delta.is_some() {
            self.meta.delta = other.meta.delta;
        }
        if other.meta.radius.is_some() {
            self.meta.radius = other.meta.radius;
        }
    }

    /// Record the smallest weight, then clamp negatives to zero.
    pub fn clamp_negative(&mut self) {
        let m = self.min_weight();
        if m.is_finite() {
            self.meta.min_weight_preclamp = self.meta.min_weight_preclamp.min(m);
        }
        let mut defect = 0.0;
        self.entries.retain(|_, w| {
            if *w < 0.0 {
                defect += -*w;
                false
            } else {
                *w != 0.0
            }
        });
        self.meta.clamp_defect += defect;
    }

    /// Largest |κ_j − κ_{−j}| relative to the largest weight.
    pub fn symmetry_defect(&self) -> f64 {
        let top = self.entries.values().cloned().fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for (o, w) in &self.entries {
            let m = [-o[0], -o[1]];
            let v = self.entries.get(&m).cloned().unwrap_or(0.0);
            worst = worst.max((w - v).abs());
        }
        if top > 0.0 {
            worst / top
        } else {
            0.0
        }
    }

    /// `Σ_j κ_j (u(x + offset_j) − u(x))` at every node.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        let g = &u.grid;
        if g.dim != self.dim || (g.h - self.h).abs() > 1e-12 * self.h {
            return Err(Error::GridMismatch("stencil and grid function use different lattices".into()));
        }
        let vals: Result<Vec<f64>> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                let idx = g.index_of(i);
                let ui = u.values[i];
                let mut s = 0.0;
                for (o, w) in &self.entries {
                    let v = u.value_at(&[idx[0] + o[0], idx[1] + o[1]])?;
                    s += w * (v - ui);
                }
                Ok(s)
            })
            .collect();
        Ok(GridFunction { grid: u.grid.clone(), values: vals? })
    }

    /// Dump as `{meta, diag, entries}` with entries in lexicographic offset order.
    pub fn to_json(&self) -> Value {
        let entries: Vec<Value> = self
            .entries
            .iter()
            .map(|(o, w)| json!({"offset": &o[..self.dim], "weight": w}))
            .collect();
        json!({
            "meta": {
                "alpha": self.meta.alpha,
                "h": self.meta.h,
                "k": self.meta.k,
                "delta": self.meta.delta,
                "R": self.meta.radius,
            },
            "diag": self.diag(),
            "entries": entries,
        })
    }
}

/// Semi-Lagrangian second differences along the columns of √a_δ, interpolated to the grid.
/// Each of the 2N interpolated points carries weight ω/k², so the stencil approximates tr[a_δ D²].
pub fn build_sl_local_stencil(corr: &CorrectionData, grid: &Grid, k: f64) -> Result<StencilOperator> {
    if !(k > 0.0 && k.is_finite()) {
        return invalid(format!("k must be positive, got {k}"));
    }
    let mut st = StencilOperator::new(grid.dim, grid.h);
    st.meta.k = Some(k);
    st.meta.delta = Some(corr.delta);
    st.meta.parts.push("sl_local".into());
    let inv = 1.0 / (k * k);
    for col in corr.sqrt_a.iter().take(grid.dim) {
        if col[0] == 0.0 && col[1] == 0.0 {
            continue;
        }
        for s in [1.0, -1.0] {
            let p = [s * k * col[0], s * k * col[1]];
            for (idx, w) in grid.interp_weights(&p) {
                st.add(idx, w * inv);
            }
        }
    }
    st.clamp_negative();
    Ok(st)
}

/// Upwind first differences for a constant drift.
pub fn build_upwind_drift_stencil(b_delta: &Point, grid: &Grid) -> StencilOperator {
    let mut st = StencilOperator::new(grid.dim, grid.h);
    st.meta.parts.push("upwind_drift".into());
    for axis in 0..grid.dim {
        let b = b_delta[axis];
        let mut e = [0i64, 0];
        if b > 0.0 {
            e[axis] = 1;
        } else if b < 0.0 {
            e[axis] = -1;
        }
        if b != 0.0 {
            st.add(e, b.abs() / grid.h);
        }
    }
    st
}

#[derive(Debug, Clone, Copy)]
pub struct NonlocalOptions {
    /// Neglected mass beyond R allowed, relative to ν(|z| > 1).
    pub tail_tol: f64,
    /// Gauss order per quadrature piece.
    pub order: usize,
    /// Fold power-law tails exactly onto periodic 1D grids.
    pub fold_periodic_tail: bool,
}

impl Default for NonlocalOptions {
    fn default() -> Self {
        NonlocalOptions { tail_tol: 1e-8, order: 10, fold_periodic_tail: true }
    }
}

/// κ_j = ∫_{δ<|z|<R} ω_j(η(z)) ν(dz) plus all atoms, with the far field folded or checked.
pub fn build_nonlocal_stencil(
    model: &LevyModel,
    jump: &JumpMap,
    grid: &Grid,
    delta: f64,
    radius: f64,
    opts: &NonlocalOptions,
) -> Result<StencilOperator> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0,1), got {delta}"));
    }
    if !(radius >= 1.0) {
        return invalid(format!("tail radius must be at least 1, got {radius}"));
    }
    if model.dim != grid.dim {
        return Err(Error::GridMismatch("measure and grid dimensions differ".into()));
    }
    let mut st = StencilOperator::new(grid.dim, grid.h);
    st.meta.delta = Some(delta);
    st.meta.radius = Some(radius);
    st.meta.parts.push("nonlocal".into());

    // Weight landing on the zero offset has no action but belongs to the mass balance.
    let mut self_weight = 0.0;
    let mut push = |st: &mut StencilOperator, o: Index, w: f64| {
        if o == [0, 0] {
            self_weight += w;
        } else {
            st.add(o, w);
        }
    };
    let mut expected = 0.0;
    let mut direct_hi = radius;
    let mut fold = false;
    if model.has_density() {
        let support = model.density_support_radius().unwrap_or(f64::INFINITY);
        let lin = jump.matrix(1).map(|m| m[0][0]);
        let can_fold = opts.fold_periodic_tail
            && grid.dim == 1
            && grid.is_periodic()
            && matches!(model.density, Density::PowerLaw { .. })
            && lin.is_some_and(|m| m != 0.0)
            && matches!(jump.kind, crate::model::JumpKind::Identity | crate::model::JumpKind::Linear(_));
        if can_fold {
            let m = lin.unwrap().abs();
            // Start the fold on a node so every folded piece is a whole cell.
            let y0 = ((m * radius / grid.h) - 1e-9).ceil() * grid.h;
            direct_hi = y0 / m;
            fold = true;
        } else if support > radius {
            let neglected = density_mass(model, radius, f64::INFINITY);
            let tail_total = density_mass(model, 1.0, f64::INFINITY)
                + model.atoms.iter().filter(|a| model.norm(&a.z.0) >= 1.0).map(|a| a.mass).sum::<f64>();
            let tol = opts.tail_tol * tail_total.max(f64::MIN_POSITIVE);
            if neglected > tol {
                return Err(Error::TailMass { radius, mass: neglected, tol });
            }
            st.meta.neglected_mass = neglected;
        }
        let hi = direct_hi.min(support);
        if hi > delta {
            expected += density_mass(model, delta, hi);
            let pts = if grid.dim == 1 {
                nonlocal_points_1d(model, jump, grid, delta, hi, opts.order)
            } else {
                nonlocal_points_2d(model, jump, grid, delta, hi)
            };
            for (o, w) in pts {
                push(&mut st, o, w);
            }
        }
        if fold {
            let (pts, mass) = folded_tail_1d(model, jump, grid, direct_hi, opts.order);
            expected += mass;
            for (o, w) in pts {
                push(&mut st, o, w);
            }
        }
    }
    for at in &model.atoms {
        expected += at.mass;
        let y = jump.apply(&at.z.0);
        for (idx, w) in grid.interp_weights(&y) {
            push(&mut st, idx, w * at.mass);
        }
    }
    st.meta.quadrature_error = (st.total_weight() + self_weight - expected).abs();
    st.clamp_negative();
    Ok(st)
}

fn breakpoints_1d(jump: &JumpMap, grid: &Grid, lo: f64, hi: f64) -> Vec<f64> {
    let mut br = vec![lo, hi];
    let mut r = lo;
    while 2.0 * r < hi {
        r *= 2.0;
        br.push(r);
    }
    if lo < 1.0 && hi > 1.0 {
        br.push(1.0);
    }
    match jump.matrix(1) {
        Some(m) if m[0][0] != 0.0 => {
            let step = grid.h / m[0][0].abs();
            let j0 = (lo / step).ceil() as i64;
            let j1 = (hi / step).floor() as i64;
            for j in j0..=j1 {
                br.push(j as f64 * step);
            }
        }
        Some(_) => {}
        None => {
            let step = 0.5 * grid.h / jump.lipschitz_const.max(1e-12);
            let n = ((hi - lo) / step).ceil() as i64;
            for j in 1..n {
                br.push(lo + j as f64 * step);
            }
        }
    }
    br.retain(|x| *x >= lo && *x <= hi);
    br.sort_by(|a, b| a.partial_cmp(b).unwrap());
    br.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
    br
}

fn nonlocal_points_1d(model: &LevyModel, jump: &JumpMap, grid: &Grid, lo: f64, hi: f64, order: usize) -> Vec<(Index, f64)> {
    let br = breakpoints_1d(jump, grid, lo, hi);
    let rule = gauss(order);
    let pieces: Vec<Vec<(Index, f64)>> = br
        .par_windows(2)
        .map(|w| {
            let mut out = Vec::with_capacity(4 * order);
            for (r, qw) in rule.mapped(w[0], w[1]) {
                for s in [1.0, -1.0] {
                    let z = [s * r, 0.0];
                    let d = model.density(&z);
                    if d == 0.0 {
                        continue;
                    }
                    for (idx, iw) in grid.interp_weights(&jump.apply(&z)) {
                        out.push((idx, qw * d * iw));
                    }
                }
            }
            out
        })
        .collect();
    pieces.into_iter().flatten().collect()
}

fn nonlocal_points_2d_raw(model: &LevyModel, jump: &JumpMap, grid: &Grid, lo: f64, hi: f64) -> Vec<(Index, f64)> {
    let lip = jump.lipschitz_const.max(1e-12);
    let target = 0.25 * grid.h / lip;
    let mut rings = Vec::new();
    let mut a = lo;
    while a < hi {
        let b = (2.0 * a).min(hi);
        let n = ((b - a) / target).ceil().max(1.0) as usize;
        for i in 0..n {
            rings.push((a + (b - a) * i as f64 / n as f64, a + (b - a) * (i + 1) as f64 / n as f64));
        }
        a = b;
    }
    let rule = gauss(4);
    let per_ring: Vec<Vec<(Index, f64)>> = rings
        .par_iter()
        .map(|&(r0, r1)| {
            let nth = (((2.0 * PI * r1 / target).ceil() as usize).max(16)).div_ceil(4) * 4;
            let dth = 2.0 * PI / nth as f64;
            let mut out = Vec::new();
            for t in 0..nth {
                let t0 = t as f64 * dth;
                for (r, wr) in rule.mapped(r0, r1) {
                    for (th, wt) in rule.mapped(t0, t0 + dth) {
                        let z = [r * th.cos(), r * th.sin()];
                        let d = model.density(&z);
                        if d == 0.0 {
                            continue;
                        }
                        let w = wr * wt * r * d;
                        for (idx, iw) in grid.interp_weights(&jump.apply(&z)) {
                            out.push((idx, w * iw));
                        }
                    }
                }
            }
            out
        })
        .collect();
    per_ring.into_iter().flatten().collect()
}

fn nonlocal_points_2d(model: &LevyModel, jump: &JumpMap, grid: &Grid, lo: f64, hi: f64) -> Vec<(Index, f64)> {
    let raw = nonlocal_points_2d_raw(model, jump, grid, lo, hi);
    let mut acc: HashMap<Index, f64> = HashMap::new();
    let mut order: Vec<Index> = Vec::new();
    for (o, w) in raw {
        match acc.get_mut(&o) {
            Some(v) => *v += w,
            None => {
                acc.insert(o, w);
                order.push(o);
            }
        }
    }
    order.into_iter().map(|o| (o, acc[&o])).collect()
}

/// Exact contribution of the power-law density beyond `r_start` on a periodic 1D grid:
/// ∫_{r>R} Ω(m z) s z^{-1-σ} dz = s |m|^σ Π^{-1-σ} ∫_Y^{Y+Π} Ω(y) ζ(1+σ, y/Π) dy per side,
/// with Π the period and Ω the periodized hat function. Entries are placed on the first
/// period beyond the fold start, which the periodic wrap maps to the right residues.
fn folded_tail_1d(model: &LevyModel, jump: &JumpMap, grid: &Grid, r_start: f64, order: usize) -> (Vec<(Index, f64)>, f64) {
    let scale = match model.density {
        Density::PowerLaw { scale } => scale,
        _ => unreachable!(),
    };
    let m = jump.matrix(1).unwrap()[0][0];
    let sigma = model.sigma;
    let p = grid.period().unwrap();
    let period = p as f64 * grid.h;
    let y0 = m.abs() * r_start;
    let j0 = (y0 / grid.h).round() as i64;
    let c = scale * m.abs().powf(sigma) * period.powf(-1.0 - sigma);
    let rule = gauss(order);
    let mut out = Vec::with_capacity(4 * p as usize);
    for cell in 0..p {
        let j = j0 + cell;
        let a = j as f64 * grid.h;
        let b = a + grid.h;
        let (mut wl, mut wr) = (0.0, 0.0);
        for (y, qw) in rule.mapped(a, b) {
            let t = (y - a) / grid.h;
            let g = qw * c * hurwitz_zeta(1.0 + sigma, y / period);
            wl += g * (1.0 - t);
            wr += g * t;
        }
        out.push((j, wl, wr));
    }
    let mut pts = Vec::with_capacity(4 * p as usize);
    for side in [1i64, -1] {
        let sg = side * m.signum() as i64;
        for &(j, wl, wr) in &out {
            pts.push(([sg * j, 0], wl));
            pts.push(([sg * (j + 1), 0], wr));
        }
    }
    let mass = 2.0 * scale * r_start.powf(-sigma) / sigma;
    (pts, mass)
}

/// Row-compressed form of one stencil on a concrete grid:
/// `L u_i = Σ_e w_e u[col_e] + constant_i − diag_i u_i`.
#[derive(Debug, Clone)]
pub struct CompiledOperator {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub weights: Vec<f64>,
    pub constant: Vec<f64>,
    pub diag: Vec<f64>,
}

impl CompiledOperator {
    pub fn compile(st: &StencilOperator, grid: &Grid) -> Result<Self> {
        if st.dim != grid.dim {
            return Err(Error::GridMismatch("stencil and grid dimensions differ".into()));
        }
        // Periodic grids: fold offsets onto residues first.
        let entries: Vec<(Index, f64)> = if let Some(p) = grid.period() {
            let mut folded: BTreeMap<Index, f64> = BTreeMap::new();
            for (o, w) in &st.entries {
                let mut r = *o;
                for v in r.iter_mut().take(grid.dim) {
                    *v = v.rem_euclid(p);
                }
                *folded.entry(r).or_insert(0.0) += w;
            }
            folded.into_iter().collect()
        } else {
            st.entries.iter().map(|(o, w)| (*o, *w)).collect()
        };
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        let n = grid.len();
        // (off-diagonal entries, constant, self weight) per node.
        type Row = (Vec<(u32, f64)>, f64, f64);
        let rows: Result<Vec<Row>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let idx = grid.index_of(i);
                let mut row: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
                let mut constant = 0.0;
                let mut selfw = 0.0;
                for (o, w) in &entries {
                    match grid.resolve(&[idx[0] + o[0], idx[1] + o[1]])? {
                        Resolved::Node(t) if t == i => selfw += w,
                        Resolved::Node(t) => row.push((t as u32, *w)),
                        Resolved::Value(v) => constant += w * v,
                    }
                }
                row.sort_unstable_by_key(|e| e.0);
                let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
                for (c, w) in row {
                    match merged.last_mut() {
                        Some(last) if last.0 == c => last.1 += w,
                        _ => merged.push((c, w)),
                    }
                }
                Ok((merged, constant, total - selfw))
            })
            .collect();
        let rows = rows?;
        let nnz: usize = rows.iter().map(|r| r.0.len()).sum();
        let mut op = CompiledOperator {
            row_ptr: Vec::with_capacity(n + 1),
            cols: Vec::with_capacity(nnz),
            weights: Vec::with_capacity(nnz),
            constant: Vec::with_capacity(n),
            diag: Vec::with_capacity(n),
        };
        op.row_ptr.push(0);
        for (row, c, d) in rows {
            for (col, w) in row {
                op.cols.push(col);
                op.weights.push(w);
            }
            op.row_ptr.push(op.cols.len());
            op.constant.push(c);
            op.diag.push(d);
        }
        Ok(op)
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Σ_e w_e u[col_e] + constant_i for one row.
    #[inline]
    pub fn off_diag(&self, i: usize, u: &[f64]) -> f64 {
        let mut s = self.constant[i];
        for e in self.row_ptr[i]..self.row_ptr[i + 1] {
            s += self.weights[e] * u[self.cols[e] as usize];
        }
        s
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.len()).into_par_iter().map(|i| self.off_diag(i, u) - self.diag[i] * u[i]).collect()
    }
}
