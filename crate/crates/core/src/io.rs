//! Declarative problem files (JSON).
//!
//! ```json
//! {"dimension": 1, "lambda": 1.0,
//!  "controls": [{"name": "a", "f": {"u_star": {"type": "cos", "freq": 3.14159}},
//!                "c": 1.0, "b": 0.0,
//!                "levy": {"family": "frac_laplacian", "sigma": 1.5, "params": {"coef": 1.0}},
//!                "jump": {"kind": "identity"}}]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::functions::{Coords, ScalarFn};
use crate::model::{builtin_model, Control, DomainSpec, Forcing, HJBProblem, JumpMap, ModelParams};

/// A coefficient given either as a bare number or as a function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Number(f64),
    Function(ScalarFn),
}

impl Coefficient {
    pub fn to_fn(&self) -> ScalarFn {
        match self {
            Coefficient::Number(v) => ScalarFn::constant(*v),
            Coefficient::Function(f) => f.clone(),
        }
    }
}

impl Default for Coefficient {
    fn default() -> Self {
        Coefficient::Number(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySpec {
    pub family: String,
    pub sigma: f64,
    #[serde(default)]
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct JumpParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub kind: String,
    #[serde(default)]
    pub params: JumpParams,
}

impl Default for JumpSpec {
    fn default() -> Self {
        JumpSpec { kind: "identity".into(), params: JumpParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub name: String,
    pub f: Forcing,
    #[serde(default)]
    pub c: Coefficient,
    #[serde(default)]
    pub b: Coords,
    pub levy: LevySpec,
    #[serde(default)]
    pub jump: JumpSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dimension: usize,
    pub lambda: f64,
    pub controls: Vec<ControlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
}

fn jump_map(spec: &JumpSpec, dim: usize) -> Result<JumpMap> {
    match spec.kind.as_str() {
        "identity" => Ok(JumpMap::identity()),
        "linear" => {
            let m = spec.params.matrix.as_ref().ok_or_else(|| crate::Error::InvalidParameter("linear jump needs params.matrix".into()))?;
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return invalid(format!("jump matrix must be {dim}x{dim}"));
            }
            let mut mm = [[0.0; 2]; 2];
            for i in 0..dim {
                for j in 0..dim {
                    mm[i][j] = m[i][j];
                }
            }
            Ok(JumpMap::linear(mm, dim))
        }
        "custom" => invalid("custom jump maps cannot be given in a problem file"),
        other => invalid(format!("unknown jump kind `{other}`")),
    }
}

impl ProblemFile {
    pub fn build(&self) -> Result<HJBProblem> {
        let dim = self.dimension;
        let mut controls = Vec::with_capacity(self.controls.len());
        for c in &self.controls {
            if c.levy.family == "custom" {
                return invalid("custom densities cannot be given in a problem file");
            }
            let levy = builtin_model(&c.levy.family, c.levy.sigma, dim, &c.levy.params)?;
            controls.push(Control {
                name: c.name.clone(),
                f: c.f.clone(),
                c: c.c.to_fn(),
                b: c.b.0,
                levy,
                jump: jump_map(&c.jump, dim)?,
            });
        }
        let p = HJBProblem { dim, lambda: self.lambda, controls, beta: self.beta, bound_k: self.bound_k, domain: self.domain.clone() };
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }
}
