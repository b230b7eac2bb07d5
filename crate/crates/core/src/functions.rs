//! Closed-form scalar functions on R^N used for coefficients, forcings and
//! manufactured solutions.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A point or vector in R^N stored with two slots; the second is zero when N = 1.
pub type Point = [f64; 2];

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Vector parameter that accepts either a bare number (1D) or an array in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coords(pub Point);

impl<'de> Deserialize<'de> for Coords {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Scalar(f64),
            Seq(Vec<f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Scalar(v) => Ok(Coords([v, 0.0])),
            Raw::Seq(v) => match v.len() {
                1 => Ok(Coords([v[0], 0.0])),
                2 => Ok(Coords([v[0], v[1]])),
                n => Err(serde::de::Error::custom(format!("expected 1 or 2 components, got {n}"))),
            },
        }
    }
}

impl Serialize for Coords {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0[1] == 0.0 {
            s.serialize_f64(self.0[0])
        } else {
            self.0.serialize(s)
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Builtin function families. `Cos` is `amp·cos(freq·x + phase) + offset`,
/// `Gaussian` is `amp·exp(-|x - center|²/width²)`, `AbsSin` is `amp·|sin(freq·x)| + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFn {
    Const {
        value: f64,
    },
    Cos {
        #[serde(default = "one")]
        amp: f64,
        freq: Coords,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    Sin {
        #[serde(default = "one")]
        amp: f64,
        freq: Coords,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    Gaussian {
        #[serde(default = "one")]
        amp: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        center: Coords,
    },
    AbsSin {
        #[serde(default = "one")]
        amp: f64,
        freq: Coords,
        #[serde(default)]
        offset: f64,
    },
    Sum {
        terms: Vec<ScalarFn>,
    },
}

/// Sum of plane waves `Σ amp·cos(k·x + phase) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaves {
    pub waves: Vec<(f64, Point, f64)>,
    pub offset: f64,
}

impl ScalarFn {
    pub fn constant(value: f64) -> Self {
        ScalarFn::Const { value }
    }

    pub fn cos(amp: f64, freq: f64, offset: f64) -> Self {
        ScalarFn::Cos { amp, freq: Coords([freq, 0.0]), phase: 0.0, offset }
    }

    pub fn gaussian(amp: f64, width: f64) -> Self {
        ScalarFn::Gaussian { amp, width, center: Coords::default() }
    }

    fn as_cos(&self) -> Option<(f64, Point, f64, f64)> {
        match *self {
            ScalarFn::Cos { amp, freq, phase, offset } => Some((amp, freq.0, phase, offset)),
            ScalarFn::Sin { amp, freq, phase, offset } => {
                Some((amp, freq.0, phase - std::f64::consts::FRAC_PI_2, offset))
            }
            _ => None,
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        if let Some((amp, k, ph, off)) = self.as_cos() {
            return amp * (dot(&k, x) + ph).cos() + off;
        }
        match self {
            ScalarFn::Const { value } => *value,
            ScalarFn::Gaussian { amp, width, center } => {
                let r2 = sq_dist(x, &center.0);
                amp * (-r2 / (width * width)).exp()
            }
            ScalarFn::AbsSin { amp, freq, offset } => amp * dot(&freq.0, x).sin().abs() + offset,
            ScalarFn::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
            _ => unreachable!(),
        }
    }

    pub fn grad(&self, x: &Point) -> Point {
        if let Some((amp, k, ph, _)) = self.as_cos() {
            let s = -amp * (dot(&k, x) + ph).sin();
            return [s * k[0], s * k[1]];
        }
        match self {
            ScalarFn::Const { .. } => [0.0, 0.0],
            ScalarFn::Gaussian { amp, width, center } => {
                let w2 = width * width;
                let g = amp * (-sq_dist(x, &center.0) / w2).exp();
                [-2.0 * (x[0] - center.0[0]) / w2 * g, -2.0 * (x[1] - center.0[1]) / w2 * g]
            }
            ScalarFn::AbsSin { amp, freq, .. } => {
                let t = dot(&freq.0, x);
                let s = amp * t.sin().signum() * t.cos();
                [s * freq.0[0], s * freq.0[1]]
            }
            ScalarFn::Sum { terms } => terms.iter().fold([0.0, 0.0], |acc, t| {
                let g = t.grad(x);
                [acc[0] + g[0], acc[1] + g[1]]
            }),
            _ => unreachable!(),
        }
    }

    pub fn hessian(&self, x: &Point) -> [[f64; 2]; 2] {
        if let Some((amp, k, ph, _)) = self.as_cos() {
            let c = -amp * (dot(&k, x) + ph).cos();
            return [[c * k[0] * k[0], c * k[0] * k[1]], [c * k[1] * k[0], c * k[1] * k[1]]];
        }
        match self {
            ScalarFn::Const { .. } => [[0.0; 2]; 2],
            ScalarFn::Gaussian { amp, width, center } => {
                let w2 = width * width;
                let g = amp * (-sq_dist(x, &center.0) / w2).exp();
                let d = [x[0] - center.0[0], x[1] - center.0[1]];
                let mut h = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        let id = if i == j { 1.0 } else { 0.0 };
                        h[i][j] = g * (4.0 * d[i] * d[j] / (w2 * w2) - 2.0 * id / w2);
                    }
                }
                h
            }
            ScalarFn::AbsSin { amp, freq, .. } => {
                let c = -amp * dot(&freq.0, x).sin().abs();
                let k = freq.0;
                [[c * k[0] * k[0], c * k[0] * k[1]], [c * k[1] * k[0], c * k[1] * k[1]]]
            }
            ScalarFn::Sum { terms } => {
                let mut h = [[0.0; 2]; 2];
                for t in terms {
                    let th = t.hessian(x);
                    for i in 0..2 {
                        for j in 0..2 {
                            h[i][j] += th[i][j];
                        }
                    }
                }
                h
            }
            _ => unreachable!(),
        }
    }

    /// φ(x + y) − φ(x), evaluated without cancellation for small y where possible.
    pub fn increment(&self, x: &Point, y: &Point) -> f64 {
        let g = self.grad(x);
        self.remainder(x, y) + dot(&g, y)
    }

    /// φ(x + y) − φ(x) − y·∇φ(x), accurate for small |y| on the smooth families.
    pub fn remainder(&self, x: &Point, y: &Point) -> f64 {
        if let Some((amp, k, ph, _)) = self.as_cos() {
            let th = dot(&k, x) + ph;
            let t = dot(&k, y);
            let half = (0.5 * t).sin();
            return amp * (-2.0 * half * half * th.cos() - sin_minus_id(t) * th.sin());
        }
        match self {
            ScalarFn::Const { .. } => 0.0,
            ScalarFn::Gaussian { amp, width, center } => {
                let w2 = width * width;
                let d = [x[0] - center.0[0], x[1] - center.0[1]];
                let g = amp * (-(d[0] * d[0] + d[1] * d[1]) / w2).exp();
                let y2 = (y[0] * y[0] + y[1] * y[1]) / w2;
                let u = -2.0 * dot(&d, y) / w2 - y2;
                g * (expm1_minus_id(u) - y2)
            }
            ScalarFn::AbsSin { .. } => {
                let xy = [x[0] + y[0], x[1] + y[1]];
                self.eval(&xy) - self.eval(x) - dot(&self.grad(x), y)
            }
            ScalarFn::Sum { terms } => terms.iter().map(|t| t.remainder(x, y)).sum(),
            _ => unreachable!(),
        }
    }

    /// Decomposition into plane waves when the function is a finite trigonometric sum.
    pub fn plane_waves(&self) -> Option<PlaneWaves> {
        if let Some((amp, k, ph, off)) = self.as_cos() {
            return Some(PlaneWaves { waves: vec![(amp, k, ph)], offset: off });
        }
        match self {
            ScalarFn::Const { value } => Some(PlaneWaves { waves: vec![], offset: *value }),
            ScalarFn::Sum { terms } => {
                let mut out = PlaneWaves { waves: vec![], offset: 0.0 };
                for t in terms {
                    let p = t.plane_waves()?;
                    out.waves.extend(p.waves);
                    out.offset += p.offset;
                }
                Some(out)
            }
            _ => None,
        }
    }

    /// Smooth in the sense needed by the reference quadrature (no kinks).
    pub fn is_smooth(&self) -> bool {
        match self {
            ScalarFn::AbsSin { .. } => false,
            ScalarFn::Sum { terms } => terms.iter().all(|t| t.is_smooth()),
            _ => true,
        }
    }
}

fn sq_dist(a: &Point, b: &Point) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    d0 * d0 + d1 * d1
}

fn sin_minus_id(t: f64) -> f64 {
    if t.abs() < 0.1 {
        let t2 = t * t;
        -t * t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0 * (1.0 - t2 / 110.0))))
    } else {
        t.sin() - t
    }
}

fn expm1_minus_id(u: f64) -> f64 {
    if u.abs() < 0.1 {
        let mut term = u * u / 2.0;
        let mut s = term;
        for k in 3..16 {
            term *= u / k as f64;
            s += term;
        }
        s
    } else {
        u.exp_m1() - u
    }
}
