//! JSON problem configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditions::{recommend, Recommendation};
use crate::invariant::Tolerances;
use crate::odeint::Controls;
use crate::problem::{DeclaredLimits, ForcingProfile, Parameters, Side, Sides, VectorFieldDef};
use crate::transform::{Transform, TransformSpec};

use super::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    #[default]
    Auto,
}

/// `"auto"` or an explicit transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransformChoice {
    Auto(Auto),
    Spec(TransformSpec),
}

impl Default for TransformChoice {
    fn default() -> Self {
        TransformChoice::Auto(Auto::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub x0: Vec<f64>,
    pub s0: f64,
}

fn default_grid() -> usize {
    11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaBlock {
    #[serde(default = "future")]
    pub side: Side,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn future() -> Side {
    Side::Future
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullbackBlock {
    /// Guess of the past sink; the unique past sink in the box when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub past: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_bisect_tol() -> f64 {
    crate::connect::BISECT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TipBlock {
    pub r_lo: f64,
    pub r_hi: f64,
    #[serde(default = "default_bisect_tol")]
    pub tol: f64,
    pub past: Vec<f64>,
    pub target: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Probes per round for concurrent bracket refinement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub d: usize,
    pub field: Vec<String>,
    pub forcing: Vec<String>,
    #[serde(default)]
    pub declared_limits: DeclaredLimits,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub sides: Sides,
    #[serde(default)]
    pub transform: TransformChoice,
    #[serde(default)]
    pub controls: Controls,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<EquilibriaBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pullback: Option<PullbackBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tip: Option<TipBlock>,
}

/// A config with its expressions parsed and checked.
pub struct Loaded {
    pub config: ProblemConfig,
    pub field: VectorFieldDef,
    pub forcing: ForcingProfile,
}

pub enum Resolved {
    Recommended(Box<Recommendation>),
    Given(Transform),
}

impl Resolved {
    pub fn transform(&self) -> &Transform {
        match self {
            Resolved::Recommended(r) => &r.transform,
            Resolved::Given(t) => t,
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), Failure> {
    if got != want {
        return Err(Failure::usage(format!("{what} has {got} entries, expected {want}")));
    }
    Ok(())
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::usage(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn load(self) -> Result<Loaded, Failure> {
        let c = &self;
        check_len("field", c.field.len(), c.n)?;
        check_len("forcing", c.forcing.len(), c.d)?;
        if c.n == 0 {
            return Err(Failure::usage("n must be at least 1"));
        }
        if let Some(b) = &c.simulate {
            check_len("simulate.x0", b.x0.len(), c.n)?;
        }
        if let Some(b) = &c.equilibria {
            check_len("equilibria.box", b.bounds.len(), c.n)?;
        }
        if let Some(b) = &c.pullback {
            check_len("pullback.box", b.bounds.len(), c.n)?;
            if let Some(p) = &b.past {
                check_len("pullback.past", p.len(), c.n)?;
            }
        }
        if let Some(b) = &c.tip {
            check_len("tip.past", b.past.len(), c.n)?;
            check_len("tip.target", b.target.len(), c.n)?;
        }
        let field_src: Vec<&str> = c.field.iter().map(String::as_str).collect();
        let forcing_src: Vec<&str> = c.forcing.iter().map(String::as_str).collect();
        let field = VectorFieldDef::parse(&field_src, c.d, &c.parameters)?;
        let forcing = ForcingProfile::parse(&forcing_src, &c.parameters, c.sides, c.declared_limits.clone())?;
        Ok(Loaded {
            config: self,
            field,
            forcing,
        })
    }
}

impl Loaded {
    pub fn resolve_transform(&self) -> Result<Resolved, Failure> {
        match &self.config.transform {
            TransformChoice::Auto(_) => Ok(Resolved::Recommended(Box::new(recommend(&self.forcing)?))),
            TransformChoice::Spec(spec) => Ok(Resolved::Given(spec.build(&self.forcing)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ProblemConfig::from_json(r#"{"n":1,"d":1,"field":["-x1+Gamma1"],"forcing":["tanh(t)"]}"#).unwrap();
        assert_eq!(c.transform, TransformChoice::Auto(Auto::Auto));
        assert_eq!(c.controls, Controls::default());
        assert!(c.load().is_ok());
    }

    #[test]
    fn explicit_transform_and_blocks() {
        let c = ProblemConfig::from_json(
            r#"{"n":1,"d":1,"field":["-x1+Gamma1"],"forcing":["tanh(t)"],
                "transform":{"kind":"exp-two-sided","alpha":1.0},
                "equilibria":{"box":[[-3,3]]}}"#,
        )
        .unwrap();
        assert!(matches!(c.transform, TransformChoice::Spec(_)));
        assert_eq!(c.equilibria.as_ref().unwrap().side, Side::Future);
        assert_eq!(c.equilibria.as_ref().unwrap().grid, 11);
    }

    #[test]
    fn load_rejects_mismatches() {
        let bad_len = ProblemConfig::from_json(r#"{"n":2,"d":1,"field":["-x1"],"forcing":["tanh(t)"]}"#).unwrap();
        assert_eq!(bad_len.load().err().unwrap().code, 1);
        let bad_var = ProblemConfig::from_json(r#"{"n":1,"d":1,"field":["-x1+Gamma2"],"forcing":["tanh(t)"]}"#).unwrap();
        assert_eq!(bad_var.load().err().unwrap().code, 1);
        assert!(ProblemConfig::from_json(r#"{"n":1,"d":1,"field":["x1"],"forcing":["t"],"bogus":1}"#).is_err());
        assert!(ProblemConfig::from_json(r#"{"n":1,"d":1,"field":["x1"],"forcing":["t"],"transform":"manual"}"#).is_err());
    }
}
