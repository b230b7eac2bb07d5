//! Sampled checks of the standing assumptions on a problem.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use crate::functions::Point;
use crate::measure::{density_mass, radial_integral, MeasureQuad};
use crate::model::{Forcing, HJBProblem, LevyModel};
use crate::reference::forcing_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionResult {
    pub name: &'static str,
    pub status: Status,
    /// The headline measured quantity.
    pub value: f64,
    pub details: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub seed: u64,
    pub samples: usize,
    pub results: Vec<AssumptionResult>,
}

impl AssumptionReport {
    pub fn get(&self, name: &str) -> Option<&AssumptionResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.status != Status::Fail)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let s = match r.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::NotApplicable => "n/a",
            };
            out.push_str(&format!("{:<4} {:<5} {:.6e}", r.name, s, r.value));
            if !r.note.is_empty() {
                out.push_str(&format!("  {}", r.note));
            }
            out.push('\n');
        }
        out
    }
}

const REL: f64 = 1e-12;

struct Builder {
    name: &'static str,
    value: f64,
    details: BTreeMap<String, f64>,
    note: String,
}

impl Builder {
    fn new(name: &'static str) -> Self {
        Builder { name, value: 0.0, details: BTreeMap::new(), note: String::new() }
    }
    fn detail(mut self, k: &str, v: f64) -> Self {
        self.details.insert(k.into(), v);
        self
    }
    fn value(mut self, v: f64) -> Self {
        self.value = v;
        self
    }
    fn note(mut self, n: impl Into<String>) -> Self {
        self.note = n.into();
        self
    }
    fn finish(self, status: Status) -> AssumptionResult {
        AssumptionResult { name: self.name, status, value: self.value, details: self.details, note: self.note }
    }
    fn pass_if(self, ok: bool) -> AssumptionResult {
        self.finish(if ok { Status::Pass } else { Status::Fail })
    }
}

/// Sample points for the jump variable: log-uniform radius in (1e-6, 1), random direction.
fn sample_jump(rng: &mut ChaCha8Rng, dim: usize) -> Point {
    let r = 10f64.powf(rng.random_range(-6.0..0.0));
    if dim == 1 {
        if rng.random_bool(0.5) {
            [r, 0.0]
        } else {
            [-r, 0.0]
        }
    } else {
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        [r * t.cos(), r * t.sin()]
    }
}

fn sample_x(rng: &mut ChaCha8Rng, dim: usize, half: f64) -> Point {
    let a = rng.random_range(-half..half);
    if dim == 1 {
        [a, 0.0]
    } else {
        [a, rng.random_range(-half..half)]
    }
}

fn neg(z: &Point) -> Point {
    [-z[0], -z[1]]
}

fn norm(z: &Point) -> f64 {
    z[0].hypot(z[1])
}

/// ∫_{|z|<1}|z|²ν and the tail mass; None for the first when the quadrature does not settle.
fn a4_terms(m: &LevyModel) -> (Option<f64>, f64) {
    let q = MeasureQuad::default();
    let sing = radial_integral::<1, _>(m, 0.0, 1.0, &q, |z| [z[0] * z[0] + z[1] * z[1]]);
    let coarse = radial_integral::<1, _>(m, 0.0, 1.0, &MeasureQuad { order: q.order / 2, ..q }, |z| [z[0] * z[0] + z[1] * z[1]]);
    let v = sing.value[0];
    let settled = v.is_finite() && (v - coarse.value[0]).abs() <= 1e-6 * (1.0 + v.abs()) && sing.remainder <= 1e-6 * (1.0 + v.abs());
    let tail = density_mass(m, 1.0, f64::INFINITY) + m.atoms.iter().map(|a| a.mass).sum::<f64>();
    (if settled { Some(v) } else { None }, tail)
}

/// Checks A1–A8, C1 and C3 by sampling; deterministic in `seed`.
pub fn check_assumptions(problem: &HJBProblem, samples: usize, seed: u64) -> AssumptionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = problem.dim;
    let half = problem.domain.as_ref().map(|d| d.half_width).unwrap_or(1.0);
    let xs: Vec<Point> = (0..samples).map(|_| sample_x(&mut rng, dim, half)).collect();
    let zs: Vec<Point> = (0..samples).map(|_| sample_jump(&mut rng, dim)).collect();
    let mut results = Vec::new();

    // A1
    let mut min_c = f64::INFINITY;
    for c in &problem.controls {
        for x in &xs {
            min_c = min_c.min(c.c.eval(x));
        }
    }
    results.push(Builder::new("A1").value(min_c - problem.lambda).detail("min_c", min_c).detail("lambda", problem.lambda).pass_if(min_c >= problem.lambda));

    // A2: sup norms and Lipschitz estimates of f and c, and |b|.
    let mut bound = 0.0f64;
    let mut a2_err = String::new();
    let fd = 1e-5;
    for c in &problem.controls {
        let f_at = |x: &Point| -> crate::Result<f64> {
            match &c.f {
                Forcing::Manufactured { u_star } => forcing_value(c, u_star, x),
                Forcing::Function(f) => Ok(f.eval(x)),
            }
        };
        let mut sup_f = 0.0f64;
        let mut lip_f = 0.0f64;
        let mut sup_c = 0.0f64;
        let mut lip_c = 0.0f64;
        for x in xs.iter().take(samples.min(64)) {
            match f_at(x) {
                Ok(v) => sup_f = sup_f.max(v.abs()),
                Err(e) => a2_err = e.to_string(),
            }
            for axis in 0..dim {
                let mut xp = *x;
                let mut xm = *x;
                xp[axis] += fd;
                xm[axis] -= fd;
                if let (Ok(a), Ok(b)) = (f_at(&xp), f_at(&xm)) {
                    lip_f = lip_f.max(((a - b) / (2.0 * fd)).abs());
                }
            }
            sup_c = sup_c.max(c.c.eval(x).abs());
            let g = c.c.grad(x);
            lip_c = lip_c.max(norm(&g));
        }
        bound = bound.max(sup_f + lip_f + sup_c + lip_c + norm(&c.b));
    }
    let a2 = Builder::new("A2").value(bound);
    let a2 = match problem.bound_k {
        Some(k) => a2.detail("declared", k).pass_if(bound.is_finite() && bound <= k && a2_err.is_empty()),
        None => a2.note("no declared bound; finiteness only").pass_if(bound.is_finite() && a2_err.is_empty()),
    };
    results.push(if a2_err.is_empty() { a2 } else { AssumptionResult { note: a2_err, ..a2 } });

    // A3 and A7, A8 on the jump maps.
    let mut a3_ratio = 0.0f64;
    let mut a3_ok = true;
    let mut odd_defect = 0.0f64;
    let mut a8_ratio = 0.0f64;
    let mut a8_ok = true;
    let mut c1_ratio = 0.0f64;
    let mut c1_ii_ok = true;
    for c in &problem.controls {
        let j = &c.jump;
        let e0 = norm(&j.apply(&[0.0, 0.0]));
        a3_ok &= e0 == 0.0;
        for z in &zs {
            let r = norm(z);
            let ez = j.apply(z);
            let em = j.apply(&neg(z));
            let ratio = norm(&ez) / r;
            a3_ratio = a3_ratio.max(ratio);
            a3_ok &= ratio <= j.lipschitz_const * (1.0 + REL) + REL;
            odd_defect = odd_defect.max(norm(&[ez[0] + em[0], ez[1] + em[1]]));
            let second = norm(&[ez[0] + em[0], ez[1] + em[1]]) / (r * r);
            a8_ratio = a8_ratio.max(second);
            a8_ok &= second <= j.c11_const * (1.0 + REL) + REL;
            let dev = norm(&[ez[0] - z[0], ez[1] - z[1]]) / (r * r);
            c1_ratio = c1_ratio.max(dev);
            c1_ii_ok &= dev <= j.c11_const * (1.0 + REL) + REL;
        }
    }
    results.push(Builder::new("A3").value(a3_ratio).pass_if(a3_ok));

    // A4
    let mut a4_sing = 0.0f64;
    let mut a4_tail = 0.0f64;
    let mut a4_fail = false;
    for c in &problem.controls {
        let (s, t) = a4_terms(&c.levy);
        match s {
            Some(s) => a4_sing = a4_sing.max(s),
            None => a4_fail = true,
        }
        a4_tail = a4_tail.max(t);
    }
    let a4 = Builder::new("A4").value(a4_sing).detail("singular_term", a4_sing).detail("tail_term", a4_tail);
    results.push(if a4_fail {
        a4.note("second moment on |z|<1 does not converge").finish(Status::Fail)
    } else {
        a4.pass_if(a4_tail.is_finite())
    });

    // A5: symmetric measures.
    let mut sym = 0.0f64;
    for c in &problem.controls {
        let m = &c.levy;
        for z in &zs {
            sym = sym.max((m.density(z) - m.density(&neg(z))).abs());
        }
        for a in &m.atoms {
            let partner: f64 = m.atoms.iter().filter(|b| b.z.0 == neg(&a.z.0)).map(|b| b.mass).sum();
            let same: f64 = m.atoms.iter().filter(|b| b.z.0 == a.z.0).map(|b| b.mass).sum();
            sym = sym.max((partner - same).abs());
        }
    }
    results.push(Builder::new("A5").value(sym).pass_if(sym == 0.0));

    // A6: density bound on |z| < 1.
    let mut worst = 0.0f64;
    let mut a6_ok = true;
    for c in &problem.controls {
        let m = &c.levy;
        let n = dim as f64;
        for z in &zs {
            let scaled = m.density(z) * norm(z).powf(n + m.sigma);
            worst = worst.max(scaled - m.density_upper_const);
            a6_ok &= scaled <= m.density_upper_const * (1.0 + REL) + REL;
        }
        a6_ok &= m.sigma > 0.0 && m.sigma < 2.0;
    }
    results.push(Builder::new("A6").value(worst.max(0.0)).detail("worst_excess", worst).pass_if(a6_ok));

    results.push(Builder::new("A7").value(odd_defect).pass_if(odd_defect <= REL));
    results.push(Builder::new("A8").value(a8_ratio).pass_if(a8_ok));

    // C1: some control uniformly elliptic of order σ.
    let mut best: Option<(f64, bool)> = None;
    for c in &problem.controls {
        if let Some(c0) = c.levy.nondegeneracy_const {
            let n = dim as f64;
            let mut lower = f64::INFINITY;
            for z in &zs {
                lower = lower.min(c.levy.density(z) * norm(z).powf(n + c.levy.sigma));
            }
            let ok = lower >= c0 * (1.0 - REL);
            if best.is_none_or(|(v, _)| lower > v) {
                best = Some((lower, ok));
            }
        }
    }
    results.push(match best {
        Some((lower, ok)) => Builder::new("C1").value(lower).detail("jump_deviation", c1_ratio).pass_if(ok && c1_ii_ok),
        None => Builder::new("C1").note("no control declares a nondegeneracy constant").finish(Status::NotApplicable),
    });

    // C3
    let sigma = problem.order();
    let need = (sigma - 1.0).max(0.0);
    results.push(match problem.beta {
        Some(b) => Builder::new("C3").value(b).detail("required_above", need).pass_if(b > need),
        None => Builder::new("C3").note("no smoothness exponent declared").finish(Status::NotApplicable),
    });

    AssumptionReport { seed, samples, results }
}
