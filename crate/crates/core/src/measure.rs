//! Radial quadrature of integrals against the density part of a Lévy measure.

use std::f64::consts::PI;

use crate::functions::Point;
use crate::model::LevyModel;
use crate::special::gauss;

/// Quadrature resolution: Gauss order per radial panel and angular points in 2D.
#[derive(Debug, Clone, Copy)]
pub struct MeasureQuad {
    pub order: usize,
    pub angular: usize,
    /// Relative size below which trailing panels are considered negligible.
    pub rel: f64,
}

impl Default for MeasureQuad {
    fn default() -> Self {
        MeasureQuad { order: 16, angular: 64, rel: 1e-17 }
    }
}

/// Result of a radial integral with a crude estimate of the neglected remainder.
#[derive(Debug, Clone, Copy)]
pub struct Integral<T> {
    pub value: T,
    pub remainder: f64,
}

/// ∫_{r0<|z|<r1} f(z) ν(dz) over the density part, for vector-valued integrands of width `W`.
/// `r0 = 0` grades panels toward the origin; `r1 = ∞` extends panels outward.
/// Both unbounded directions stop once three consecutive panels fall below `q.rel`.
pub fn radial_integral<const W: usize, F>(model: &LevyModel, r0: f64, r1: f64, q: &MeasureQuad, f: F) -> Integral<[f64; W]>
where
    F: Fn(&Point) -> [f64; W],
{
    let mut total = [0.0; W];
    if !model.has_density() || r1 <= r0 {
        return Integral { value: total, remainder: 0.0 };
    }
    let mut r1 = r1;
    if let Some(s) = model.density_support_radius() {
        r1 = r1.min(s);
        if r1 <= r0 {
            return Integral { value: total, remainder: 0.0 };
        }
    }
    let panel = |a: f64, b: f64| -> [f64; W] {
        let mut acc = [0.0; W];
        // Split at |z| = 1 where builtin densities may jump.
        let pieces: Vec<(f64, f64)> = if a < 1.0 && b > 1.0 { vec![(a, 1.0), (1.0, b)] } else { vec![(a, b)] };
        for (pa, pb) in pieces {
            for (r, w) in gauss(q.order).mapped(pa, pb) {
                if model.dim == 1 {
                    for s in [1.0, -1.0] {
                        let z = [s * r, 0.0];
                        let d = model.density(&z);
                        if d != 0.0 {
                            let v = f(&z);
                            for k in 0..W {
                                acc[k] += w * d * v[k];
                            }
                        }
                    }
                } else {
                    let m = q.angular;
                    let dth = 2.0 * PI / m as f64;
                    for t in 0..m {
                        let th = (t as f64 + 0.5) * dth;
                        let z = [r * th.cos(), r * th.sin()];
                        let d = model.density(&z);
                        if d != 0.0 {
                            let v = f(&z);
                            for k in 0..W {
                                acc[k] += w * r * dth * d * v[k];
                            }
                        }
                    }
                }
            }
        }
        acc
    };
    let size = |v: &[f64; W]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut remainder = 0.0;
    let add_until_quiet = |total: &mut [f64; W], next: &mut dyn FnMut() -> Option<(f64, f64)>| {
        let mut quiet = 0;
        let mut last = 0.0;
        while let Some((a, b)) = next() {
            let p = panel(a, b);
            for k in 0..W {
                total[k] += p[k];
            }
            last = size(&p);
            if last <= q.rel * size(total) {
                quiet += 1;
                if quiet >= 3 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        last
    };
    if r0 == 0.0 {
        // Dyadic panels toward 0. Near the origin the panels of a power-law integrand shrink
        // by a fixed ratio; once that ratio settles the rest is summed as a geometric series.
        let mut hi = r1;
        let mut quiet = 0;
        let mut prev = [0.0f64; W];
        let mut prev_ratio = [f64::NAN; W];
        let mut last = f64::INFINITY;
        for _ in 0..4000 {
            let lo = 0.5 * hi;
            let p = panel(lo, hi);
            hi = lo;
            if !p.iter().all(|v| v.is_finite()) {
                last = f64::INFINITY;
                break;
            }
            for k in 0..W {
                total[k] += p[k];
            }
            let s = size(&p);
            last = s;
            if s <= q.rel * size(&total) {
                quiet += 1;
                if quiet >= 3 {
                    break;
                }
                continue;
            }
            quiet = 0;
            let mut ratio = [0.0f64; W];
            let mut settled = true;
            let mut drift = 0.0f64;
            for k in 0..W {
                // Components that cancel (e.g. odd moments) carry no usable ratio.
                if p[k].abs() <= 1e-12 * s {
                    continue;
                }
                ratio[k] = p[k] / prev[k];
                let change = (ratio[k] - prev_ratio[k]).abs();
                settled &= ratio[k] > 0.0 && ratio[k] < 1.0 && change <= 1e-12 * ratio[k];
                drift = drift.max(change / (1.0 - ratio[k]));
            }
            if settled {
                let mut tail = 0.0f64;
                for k in 0..W {
                    if ratio[k] > 0.0 {
                        let t = p[k] * ratio[k] / (1.0 - ratio[k]);
                        total[k] += t;
                        tail = tail.max(t.abs());
                    }
                }
                last = tail * drift.max(1e-16);
                break;
            }
            prev = p;
            prev_ratio = ratio;
        }
        remainder += last;
    } else if r1.is_infinite() {
        let mut lo = r0;
        let mut count = 0;
        let last = add_until_quiet(&mut total, &mut || {
            count += 1;
            if count > 4000 {
                return None;
            }
            let hi = 2.0 * lo;
            let out = (lo, hi);
            lo = hi;
            Some(out)
        });
        remainder += last;
    } else {
        let mut lo = r0;
        while lo < r1 {
            let hi = (2.0 * lo).min(r1);
            let p = panel(lo, hi);
            for k in 0..W {
                total[k] += p[k];
            }
            lo = hi;
        }
    }
    Integral { value: total, remainder }
}

/// ν_density({r0 < |z| < r1}), by closed form where available.
pub fn density_mass(model: &LevyModel, r0: f64, r1: f64) -> f64 {
    if let Some(v) = model.radial_mass_closed(r0, r1) {
        return v;
    }
    radial_integral::<1, _>(model, r0, r1, &MeasureQuad::default(), |_| [1.0]).value[0]
}
