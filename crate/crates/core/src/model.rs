//! Lévy measures, jump maps and the control problem.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functions::{Point, ScalarFn};
use crate::special::frac_lap_constant;

pub type DensityFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type JumpFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

/// Absolutely continuous part of a Lévy measure, as a density on R^N \ {0}.
#[derive(Clone)]
pub enum Density {
    Zero,
    /// `scale·|z|^{-N-σ}` everywhere.
    PowerLaw { scale: f64 },
    /// `scale·e^{-rate|z|}·|z|^{-N-σ}`.
    Tempered { scale: f64, rate: f64 },
    /// 1D only: `scale·z^{-1-σ}` on 0 < z < 1, zero elsewhere.
    OneSided { scale: f64 },
    Custom(DensityFn),
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Zero => write!(f, "Zero"),
            Density::PowerLaw { scale } => write!(f, "PowerLaw {{ scale: {scale} }}"),
            Density::Tempered { scale, rate } => write!(f, "Tempered {{ scale: {scale}, rate: {rate} }}"),
            Density::OneSided { scale } => write!(f, "OneSided {{ scale: {scale} }}"),
            Density::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mass: f64,
    pub z: crate::functions::Coords,
}

impl Atom {
    pub fn new(mass: f64, z: Point) -> Self {
        Atom { mass, z: crate::functions::Coords(z) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    FracLaplacian,
    Tempered,
    CompoundPoisson,
    OneSided,
    Zero,
    Custom,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::FracLaplacian => "frac_laplacian",
            Family::Tempered => "tempered",
            Family::CompoundPoisson => "compound_poisson",
            Family::OneSided => "one_sided",
            Family::Zero => "zero",
            Family::Custom => "custom",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "frac_laplacian" => Family::FracLaplacian,
            "tempered" => Family::Tempered,
            "compound_poisson" => Family::CompoundPoisson,
            "one_sided" => Family::OneSided,
            "zero" => Family::Zero,
            other => return Err(Error::UnknownFamily(other.to_string())),
        })
    }
}

/// A Lévy measure: density part plus finitely many atoms, with declared flags.
#[derive(Debug, Clone)]
pub struct LevyModel {
    pub dim: usize,
    pub sigma: f64,
    pub family: Family,
    pub density: Density,
    pub atoms: Vec<Atom>,
    /// C in `density(z) ≤ C |z|^{-N-σ}` on |z| < 1.
    pub density_upper_const: f64,
    /// c in `density(z) ≥ c |z|^{-N-σ}` on |z| < 1, if the model is non-degenerate.
    pub nondegeneracy_const: Option<f64>,
    pub symmetric: bool,
}

/// Parameters accepted by [`builtin_model`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Raw density constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Coefficient of (−Δ)^{σ/2}; the density constant becomes `coef·c_{N,σ}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coef: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<Atom>,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma < 2.0) {
        return invalid(format!("sigma must lie in (0,2), got {sigma}"));
    }
    Ok(())
}

/// Build one of the catalogued measure families.
pub fn builtin_model(name: &str, sigma: f64, dim: usize, params: &ModelParams) -> Result<LevyModel> {
    let family = Family::parse(name)?;
    check_sigma(sigma)?;
    if !(dim == 1 || dim == 2) {
        return invalid(format!("dimension must be 1 or 2, got {dim}"));
    }
    let scale = || -> Result<f64> {
        let s = match (params.a, params.coef) {
            (Some(_), Some(_)) => return invalid("give at most one of `a` and `coef`"),
            (Some(a), None) => a,
            (None, Some(c)) => c * frac_lap_constant(dim, sigma),
            (None, None) => 1.0,
        };
        if !(s > 0.0 && s.is_finite()) {
            return invalid(format!("density scale must be positive, got {s}"));
        }
        Ok(s)
    };
    let no_atoms = || -> Result<()> {
        if params.atoms.is_empty() {
            Ok(())
        } else {
            invalid(format!("family {name} takes no atoms"))
        }
    };
    let model = match family {
        Family::FracLaplacian => {
            no_atoms()?;
            let s = scale()?;
            LevyModel {
                dim,
                sigma,
                family,
                density: Density::PowerLaw { scale: s },
                atoms: vec![],
                density_upper_const: s,
                nondegeneracy_const: Some(s),
                symmetric: true,
            }
        }
        Family::Tempered => {
            no_atoms()?;
            let s = scale()?;
            let rate = params.rate.unwrap_or(1.0);
            if !(rate > 0.0 && rate.is_finite()) {
                return invalid(format!("tempering rate must be positive, got {rate}"));
            }
            LevyModel {
                dim,
                sigma,
                family,
                density: Density::Tempered { scale: s, rate },
                atoms: vec![],
                density_upper_const: s,
                nondegeneracy_const: Some(s * (-rate).exp()),
                symmetric: true,
            }
        }
        Family::OneSided => {
            no_atoms()?;
            if dim != 1 {
                return invalid("one_sided family is one-dimensional");
            }
            let s = scale()?;
            LevyModel {
                dim,
                sigma,
                family,
                density: Density::OneSided { scale: s },
                atoms: vec![],
                density_upper_const: s,
                nondegeneracy_const: None,
                symmetric: false,
            }
        }
        Family::CompoundPoisson | Family::Zero => {
            if params.a.is_some() || params.coef.is_some() || params.rate.is_some() {
                return invalid(format!("family {name} takes only atoms"));
            }
            if family == Family::Zero {
                no_atoms()?;
            }
            for at in &params.atoms {
                if !(at.mass >= 0.0 && at.mass.is_finite()) {
                    return invalid(format!("atom mass must be nonnegative, got {}", at.mass));
                }
                if !(at.z.0[0].is_finite() && at.z.0[1].is_finite()) || (dim == 1 && at.z.0[1] != 0.0) {
                    return invalid("atom location must be finite and match the dimension");
                }
                if at.z.0 == [0.0, 0.0] {
                    return invalid("atoms at the origin carry no jump");
                }
            }
            let symmetric = atoms_symmetric(&params.atoms);
            LevyModel {
                dim,
                sigma,
                family,
                density: Density::Zero,
                atoms: params.atoms.clone(),
                density_upper_const: 0.0,
                nondegeneracy_const: None,
                symmetric,
            }
        }
        Family::Custom => unreachable!(),
    };
    Ok(model)
}

fn atoms_symmetric(atoms: &[Atom]) -> bool {
    atoms.iter().all(|a| {
        atoms
            .iter()
            .any(|b| b.z.0[0] == -a.z.0[0] && b.z.0[1] == -a.z.0[1] && b.mass == a.mass)
    })
}

impl LevyModel {
    /// The measure with no jumps at all.
    pub fn zero(dim: usize, sigma: f64) -> Self {
        builtin_model("zero", sigma, dim, &ModelParams::default()).expect("valid zero model")
    }

    /// User-defined density with declared flags.
    pub fn custom(
        dim: usize,
        sigma: f64,
        density: DensityFn,
        density_upper_const: f64,
        nondegeneracy_const: Option<f64>,
        symmetric: bool,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(LevyModel {
            dim,
            sigma,
            family: Family::Custom,
            density: Density::Custom(density),
            atoms: vec![],
            density_upper_const,
            nondegeneracy_const,
            symmetric,
        })
    }

    pub fn norm(&self, z: &Point) -> f64 {
        if self.dim == 1 {
            z[0].abs()
        } else {
            z[0].hypot(z[1])
        }
    }

    /// Density of the absolutely continuous part at z ≠ 0.
    pub fn density(&self, z: &Point) -> f64 {
        let r = self.norm(z);
        let n = self.dim as f64;
        match &self.density {
            Density::Zero => 0.0,
            Density::PowerLaw { scale } => scale * r.powf(-n - self.sigma),
            Density::Tempered { scale, rate } => scale * (-rate * r).exp() * r.powf(-n - self.sigma),
            Density::OneSided { scale } => {
                if z[0] > 0.0 && z[0] < 1.0 {
                    scale * z[0].powf(-1.0 - self.sigma)
                } else {
                    0.0
                }
            }
            Density::Custom(f) => f(z),
        }
    }

    /// Density restricted to |z| < 1.
    pub fn singular_density(&self, z: &Point) -> f64 {
        if self.norm(z) < 1.0 {
            self.density(z)
        } else {
            0.0
        }
    }

    /// Density restricted to |z| ≥ 1.
    pub fn tail_density(&self, z: &Point) -> f64 {
        if self.norm(z) >= 1.0 {
            self.density(z)
        } else {
            0.0
        }
    }

    pub fn has_density(&self) -> bool {
        !matches!(self.density, Density::Zero)
    }

    pub fn is_zero(&self) -> bool {
        !self.has_density() && self.atoms.iter().all(|a| a.mass == 0.0)
    }

    /// Radius beyond which the density vanishes, if known.
    pub fn density_support_radius(&self) -> Option<f64> {
        match self.density {
            Density::Zero => Some(0.0),
            Density::OneSided { .. } => Some(1.0),
            _ => None,
        }
    }

    /// Closed form for ν_density({r0 < |z| < r1}) where available.
    pub fn radial_mass_closed(&self, r0: f64, r1: f64) -> Option<f64> {
        let s = self.sigma;
        let pw = |a: f64, b: f64| (a.powf(-s) - if b.is_infinite() { 0.0 } else { b.powf(-s) }) / s;
        match self.density {
            Density::Zero => Some(0.0),
            Density::PowerLaw { scale } => {
                let surface = if self.dim == 1 { 2.0 } else { 2.0 * PI };
                Some(scale * surface * pw(r0, r1))
            }
            Density::OneSided { scale } => {
                if r0 >= 1.0 {
                    Some(0.0)
                } else {
                    Some(scale * pw(r0, r1.min(1.0)))
                }
            }
            _ => None,
        }
    }

    /// Coefficient a^α with ν = a^α c_{N,σ}|z|^{-N-σ}, for the fractional Laplacian family.
    pub fn frac_lap_coefficient(&self) -> Option<f64> {
        match (self.family, &self.density) {
            (Family::FracLaplacian, Density::PowerLaw { scale }) => {
                Some(scale / frac_lap_constant(self.dim, self.sigma))
            }
            (Family::Zero, _) => Some(0.0),
            (Family::CompoundPoisson, _) if self.atoms.iter().all(|a| a.mass == 0.0) => Some(0.0),
            _ => None,
        }
    }
}

#[derive(Clone)]
pub enum JumpKind {
    Identity,
    /// Row-major matrix; only the leading N×N block is used.
    Linear([[f64; 2]; 2]),
    Custom(JumpFn),
}

impl fmt::Debug for JumpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpKind::Identity => write!(f, "Identity"),
            JumpKind::Linear(m) => write!(f, "Linear({m:?})"),
            JumpKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Jump map z ↦ η(z) with declared constants.
#[derive(Debug, Clone)]
pub struct JumpMap {
    pub kind: JumpKind,
    pub lipschitz_const: f64,
    pub odd: bool,
    /// K in |η(z) − η(−z) − 2η(0)| ≤ K|z|² and in |η(z) − z| ≤ K|z|².
    pub c11_const: f64,
}

impl JumpMap {
    pub fn identity() -> Self {
        JumpMap { kind: JumpKind::Identity, lipschitz_const: 1.0, odd: true, c11_const: 0.0 }
    }

    pub fn linear(m: [[f64; 2]; 2], dim: usize) -> Self {
        let mut mm = m;
        if dim == 1 {
            mm[0][1] = 0.0;
            mm[1] = [0.0, 0.0];
        }
        let fro = mm.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        JumpMap { kind: JumpKind::Linear(mm), lipschitz_const: fro, odd: true, c11_const: 0.0 }
    }

    pub fn custom(f: JumpFn, lipschitz_const: f64, odd: bool, c11_const: f64) -> Self {
        JumpMap { kind: JumpKind::Custom(f), lipschitz_const, odd, c11_const }
    }

    pub fn apply(&self, z: &Point) -> Point {
        match &self.kind {
            JumpKind::Identity => *z,
            JumpKind::Linear(m) => [m[0][0] * z[0] + m[0][1] * z[1], m[1][0] * z[0] + m[1][1] * z[1]],
            JumpKind::Custom(f) => f(z),
        }
    }

    /// The matrix when the map is linear (identity included).
    pub fn matrix(&self, dim: usize) -> Option<[[f64; 2]; 2]> {
        match &self.kind {
            JumpKind::Identity => Some(if dim == 1 {
                [[1.0, 0.0], [0.0, 0.0]]
            } else {
                [[1.0, 0.0], [0.0, 1.0]]
            }),
            JumpKind::Linear(m) => Some(*m),
            JumpKind::Custom(_) => None,
        }
    }
}

/// Forcing term of one control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Forcing {
    Manufactured { u_star: ScalarFn },
    Function(ScalarFn),
}

#[derive(Debug, Clone)]
pub struct Control {
    pub name: String,
    pub f: Forcing,
    pub c: ScalarFn,
    pub b: Point,
    pub levy: LevyModel,
    pub jump: JumpMap,
}

/// Exterior-data policies for truncated domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExteriorSpec {
    Periodic,
    Constant,
    Function { g: ScalarFn },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub half_width: f64,
    pub exterior: ExteriorSpec,
}

#[derive(Debug, Clone)]
pub struct HJBProblem {
    pub dim: usize,
    pub lambda: f64,
    pub controls: Vec<Control>,
    /// Declared Hölder exponent for the gradient of the forcings.
    pub beta: Option<f64>,
    /// Declared uniform bound K on the data.
    pub bound_k: Option<f64>,
    pub domain: Option<DomainSpec>,
}

impl HJBProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.dim == 1 || self.dim == 2) {
            return invalid(format!("dimension must be 1 or 2, got {}", self.dim));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return invalid(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.controls.is_empty() {
            return invalid("at least one control is required");
        }
        for c in &self.controls {
            if c.levy.dim != self.dim {
                return invalid(format!("control {} has a {}-dimensional measure", c.name, c.levy.dim));
            }
            if self.dim == 1 && c.b[1] != 0.0 {
                return invalid(format!("control {} has a 2D drift in a 1D problem", c.name));
            }
        }
        if let Some(d) = &self.domain {
            if !(d.half_width > 0.0 && d.half_width.is_finite()) {
                return invalid("domain half_width must be positive");
            }
        }
        Ok(())
    }

    /// Largest order among the controls carrying a singular density, else the largest declared order.
    pub fn order(&self) -> f64 {
        let singular = self
            .controls
            .iter()
            .filter(|c| c.levy.has_density())
            .map(|c| c.levy.sigma)
            .fold(f64::NAN, f64::max);
        if singular.is_nan() {
            self.controls.iter().map(|c| c.levy.sigma).fold(0.0, f64::max)
        } else {
            singular
        }
    }

    /// The shared manufactured solution, if every control is manufactured from the same one.
    pub fn manufactured_solution(&self) -> Option<&ScalarFn> {
        let mut found: Option<&ScalarFn> = None;
        for c in &self.controls {
            match &c.f {
                Forcing::Manufactured { u_star } => match found {
                    None => found = Some(u_star),
                    Some(prev) if prev == u_star => {}
                    Some(_) => return None,
                },
                Forcing::Function(_) => return None,
            }
        }
        found
    }
}
