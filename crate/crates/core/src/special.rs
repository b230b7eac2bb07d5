//! Special functions and quadrature rules shared by the builders.

use std::f64::consts::PI;
use std::sync::OnceLock;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }

    /// Integrate `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + r * x);
        }
        s * r
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + r * x, w * r))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached rule of a common order.
pub fn gauss(n: usize) -> &'static GaussRule {
    static RULES: OnceLock<Vec<GaussRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (1..=40).map(GaussRule::new).collect());
    assert!((1..=40).contains(&n), "cached Gauss rules cover orders 1..=40");
    &rules[n - 1]
}

/// Integral over [a, b] of a function with an integrable power-type singularity at `a`:
/// geometric panels toward `a`, finishing once a panel falls below `rel` of the running sum.
pub fn integrate_graded<F: FnMut(f64) -> f64>(a: f64, b: f64, order: usize, rel: f64, mut f: F) -> f64 {
    let rule = gauss(order);
    let mut total = 0.0;
    let mut hi = b;
    let mut quiet = 0;
    for _ in 0..400 {
        let lo = a + 0.5 * (hi - a);
        let part = rule.integrate(lo, hi, &mut f);
        total += part;
        if part.abs() <= rel * total.abs() {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
        hi = lo;
        if hi - a <= f64::MIN_POSITIVE * 1e10 {
            break;
        }
    }
    total
}

const BERNOULLI_2K: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Hurwitz zeta function ζ(s, a) = Σ_{n≥0} (n + a)^{-s} for s > 1, a > 0.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(s > 1.0 && a > 0.0, "hurwitz_zeta needs s > 1 and a > 0");
    const N: usize = 12;
    let mut sum = 0.0;
    for n in 0..N {
        sum += (n as f64 + a).powf(-s);
    }
    let x = N as f64 + a;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // Euler–Maclaurin correction terms B_{2k}/(2k)! * s(s+1)...(s+2k-2) x^{-s-2k+1}
    let mut rising = s;
    let mut fact = 2.0;
    let mut xp = x.powf(-s - 1.0);
    for (k, b) in BERNOULLI_2K.iter().enumerate() {
        let term = b / fact * rising * xp;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        let kk = 2.0 * (k as f64 + 1.0);
        rising *= (s + kk - 1.0) * (s + kk);
        fact *= (kk + 1.0) * (kk + 2.0);
        xp /= x * x;
    }
    sum
}

/// Scaled modified Bessel values e^{-x} I_m(x) for m = 0..=nmax, x ≥ 0.
pub fn bessel_i_scaled(x: f64, nmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let nu2 = (nmax * nmax) as f64;
    if x > 50.0 && x >= 25.0 * (nu2 + 1.0) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = bessel_i_scaled_asymptotic(x, m as f64);
        }
        return out;
    }
    // Miller backward recurrence normalized by e^{-x}(I_0 + 2 Σ I_k) = 1.
    let start = nmax + 30 + (9.0 * x.sqrt()) as usize;
    let mut next = 0.0f64;
    let mut cur = 1e-300f64;
    let mut norm = 0.0f64;
    for m in (1..=start).rev() {
        let prev = 2.0 * m as f64 / x * cur + next;
        next = cur;
        cur = prev;
        // cur is now I_{m-1}, next is I_m
        if m <= nmax {
            out[m] = next;
        }
        norm += 2.0 * next;
        if cur.abs() > 1e250 {
            let sc = 1e-250;
            cur *= sc;
            next *= sc;
            norm *= sc;
            for o in out.iter_mut() {
                *o *= sc;
            }
        }
    }
    out[0] = cur;
    norm += cur;
    for o in out.iter_mut() {
        *o /= norm;
    }
    out
}

fn bessel_i_scaled_asymptotic(x: f64, nu: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        let next = -term * (mu - odd * odd) / (kf * 8.0 * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

/// The normalizing constant c_{N,σ} of the fractional Laplacian kernel.
pub fn frac_lap_constant(dim: usize, sigma: f64) -> f64 {
    let n = dim as f64;
    sigma * 2f64.powf(sigma - 1.0) * gamma((n + sigma) / 2.0)
        / (PI.powf(n / 2.0) * gamma(1.0 - sigma / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        for n in 1..=20 {
            let r = GaussRule::new(n);
            for p in 0..(2 * n) {
                let v = r.integrate(0.0, 1.0, |x| x.powi(p as i32));
                assert!((v - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p} v={v}");
            }
        }
    }

    #[test]
    fn graded_handles_endpoint_singularity() {
        let v = integrate_graded(0.0, 1.0, 16, 1e-17, |x| x.powf(-0.5));
        assert!((v - 2.0).abs() < 1e-13, "{v}");
    }

    #[test]
    fn zeta_matches_riemann_values() {
        assert!((hurwitz_zeta(2.0, 1.0) - PI * PI / 6.0).abs() < 1e-15);
        assert!((hurwitz_zeta(4.0, 1.0) - PI.powi(4) / 90.0).abs() < 1e-15);
        // ζ(s, 1/2) = (2^s - 1) ζ(s)
        assert!((hurwitz_zeta(2.0, 0.5) - 3.0 * PI * PI / 6.0).abs() < 1e-14);
    }

    #[test]
    fn zeta_matches_brute_force_sum() {
        let (s, a) = (1.5, 0.3);
        let n = 2_000_000usize;
        let mut direct: f64 = (0..n).map(|k| (k as f64 + a).powf(-s)).sum();
        let x = n as f64 + a;
        direct += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
        assert!((hurwitz_zeta(s, a) - direct).abs() < 1e-12);
    }

    #[test]
    fn bessel_small_argument_series() {
        let x = 0.3;
        let t = bessel_i_scaled(x, 5);
        for (m, v) in t.iter().enumerate() {
            let mut s = 0.0;
            let mut term = (x / 2.0f64).powi(m as i32) / gamma(m as f64 + 1.0);
            for k in 0..30 {
                s += term;
                term *= (x / 2.0) * (x / 2.0) / ((k as f64 + 1.0) * (k as f64 + 1.0 + m as f64));
            }
            let exact = s * (-x).exp();
            assert!((v - exact).abs() <= 1e-14 * exact.abs().max(1e-300), "m={m}");
        }
    }

    #[test]
    fn bessel_branches_agree() {
        // Just below and above the asymptotic switch for order 1.
        let a = bessel_i_scaled(49.9, 1);
        let b = bessel_i_scaled_asymptotic(49.9, 1.0);
        assert!((a[1] - b).abs() < 1e-13 * b);
        let c = bessel_i_scaled(300.0, 2);
        for (m, cm) in c.iter().enumerate().take(3) {
            let d = bessel_i_scaled_asymptotic(300.0, m as f64);
            assert!((cm - d).abs() < 1e-14, "m={m}");
        }
    }

    #[test]
    fn gamma_handles_negative_arguments() {
        assert!((gamma(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn frac_lap_constant_one_dimension() {
        for s in [0.5, 1.0, 1.5] {
            let c1 = gamma(1.0 + s) * (PI * s / 2.0).sin() / PI;
            assert!((frac_lap_constant(1, s) - c1).abs() < 1e-14);
        }
        assert!((frac_lap_constant(1, 1.0) - 1.0 / PI).abs() < 1e-15);
    }
}
