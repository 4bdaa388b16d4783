//! The autonomous compactified system on `U × [s_lo, s_hi]`.
//!
//! In the interior `ẋ = f(x, Γ(h(s)))` and `ṡ = γ(s)`; on a compact end the
//! forcing is frozen at its limit and `ṡ = 0` exactly, so the end subspaces
//! are invariant and carry the limit systems.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::conditions::{check_condition_one, check_condition_two, ConditionError, LimitReport};
use crate::expr::EvalError;
use crate::problem::{ForcingProfile, LimitSystem, ProblemError, Side, VectorFieldDef};
use crate::transform::{Transform, TransformError};

/// Largest overshoot of `s` past the domain that is silently clamped.
pub const S_CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtendedError {
    #[error("transformation condition {condition} fails on the {} side: {:?}", report.side.name(), report.verdict)]
    ConditionsViolated {
        condition: u8,
        report: Box<LimitReport>,
    },
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("s = {s} lies outside [{lo}, {hi}]")]
    OutOfDomain { s: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Cached data of one compact end.
#[derive(Debug, Clone, Serialize)]
pub struct EndData {
    pub side: Side,
    /// Frozen forcing `Γ^±`.
    pub gamma: Vec<f64>,
    /// `lim Γ̇/ġ`, the `dΓ/ds` column used at the end.
    pub condition_limit: Vec<f64>,
    /// `γ'` at the end.
    pub l_s: f64,
}

/// A point `(x, s)` of the extended phase space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtendedState {
    pub x: Vec<f64>,
    pub s: f64,
}

impl ExtendedState {
    /// Validates against the system and clamps tiny overshoots of `s`.
    pub fn new(x: Vec<f64>, s: f64, sys: &CompactifiedSystem) -> Result<Self, ExtendedError> {
        if x.len() != sys.dim() {
            return Err(ExtendedError::Invalid(format!(
                "state has {} components, system has {}",
                x.len(),
                sys.dim()
            )));
        }
        let s = sys.clamp_s(s)?;
        Ok(Self { x, s })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.push(self.s);
        v
    }
}

#[derive(Debug, Clone)]
pub struct CompactifiedSystem {
    field: VectorFieldDef,
    forcing: ForcingProfile,
    transform: Transform,
    ends: [Option<EndData>; 2],
}

fn end_index(side: Side) -> usize {
    match side {
        Side::Past => 0,
        Side::Future => 1,
    }
}

/// Build the compactified system, re-running both transformation conditions
/// on every compact side.
pub fn assemble(
    field: &VectorFieldDef,
    forcing: &ForcingProfile,
    transform: &Transform,
) -> Result<CompactifiedSystem, ExtendedError> {
    if field.forcing_dim() != forcing.dim() {
        return Err(ExtendedError::Invalid(format!(
            "vector field expects {} forcing components, profile has {}",
            field.forcing_dim(),
            forcing.dim()
        )));
    }
    let mut ends = [None, None];
    for &side in transform.compact_sides() {
        if !forcing.sides().allows(side) {
            return Err(ExtendedError::Invalid(format!(
                "transform compactifies the {} side but the forcing is not defined there",
                side.name()
            )));
        }
        let gamma = forcing.estimate_limits(side)?;
        let one = check_condition_one(forcing, transform, side)?;
        if !one.converged {
            return Err(ExtendedError::ConditionsViolated {
                condition: 1,
                report: Box::new(one),
            });
        }
        let two = check_condition_two(transform, side)?;
        if !two.converged {
            return Err(ExtendedError::ConditionsViolated {
                condition: 2,
                report: Box::new(two),
            });
        }
        ends[end_index(side)] = Some(EndData {
            side,
            gamma,
            condition_limit: one.value,
            l_s: two.value[0],
        });
    }
    Ok(CompactifiedSystem {
        field: field.clone(),
        forcing: forcing.clone(),
        transform: transform.clone(),
        ends,
    })
}

impl CompactifiedSystem {
    pub fn dim(&self) -> usize {
        self.field.state_dim()
    }

    pub fn field(&self) -> &VectorFieldDef {
        &self.field
    }

    pub fn forcing(&self) -> &ForcingProfile {
        &self.forcing
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn s_domain(&self) -> (f64, f64) {
        self.transform.s_domain()
    }

    pub fn end(&self, side: Side) -> Option<&EndData> {
        self.ends[end_index(side)].as_ref()
    }

    /// The frozen limit system carried by a compact end.
    pub fn limit_system(&self, side: Side) -> Option<LimitSystem> {
        self.end(side)
            .map(|e| LimitSystem::frozen(self.field.clone(), e.gamma.clone(), side))
    }

    pub fn clamp_s(&self, s: f64) -> Result<f64, ExtendedError> {
        let (lo, hi) = self.s_domain();
        if s >= lo && s <= hi {
            Ok(s)
        } else if s > hi && s - hi <= S_CLAMP_TOL {
            Ok(hi)
        } else if s < lo && lo - s <= S_CLAMP_TOL {
            Ok(lo)
        } else {
            Err(ExtendedError::OutOfDomain { s, lo, hi })
        }
    }

    fn end_at(&self, s: f64) -> Option<&EndData> {
        self.transform.is_compact_end(s).and_then(|side| self.end(side))
    }

    /// Forcing seen at `s`: `Γ(h(s))` inside, the frozen limit at an end.
    pub fn gamma_at(&self, s: f64) -> Result<Vec<f64>, ExtendedError> {
        match self.end_at(s) {
            Some(e) => Ok(e.gamma.clone()),
            None => Ok(self.forcing.value(self.transform.h(s)?)?),
        }
    }

    /// `(ẋ, ṡ)` written into `dx`; returns `ṡ`.
    pub fn rhs_into(&self, x: &[f64], s: f64, dx: &mut [f64]) -> Result<f64, ExtendedError> {
        let (lo, hi) = self.s_domain();
        if !(s >= lo && s <= hi) {
            return Err(ExtendedError::OutOfDomain { s, lo, hi });
        }
        match self.end_at(s) {
            Some(e) => {
                self.field.eval_into(x, &e.gamma, dx)?;
                Ok(0.0)
            }
            None => {
                let t = self.transform.h(s)?;
                let gamma = self.forcing.value(t)?;
                self.field.eval_into(x, &gamma, dx)?;
                Ok(self.transform.gamma(s))
            }
        }
    }

    pub fn rhs(&self, state: &ExtendedState) -> Result<(Vec<f64>, f64), ExtendedError> {
        let mut dx = vec![0.0; self.dim()];
        let ds = self.rhs_into(&state.x, state.s, &mut dx)?;
        Ok((dx, ds))
    }

    /// `dΓ/ds` along the compactified clock.
    pub fn gamma_s_derivative(&self, s: f64) -> Result<Vec<f64>, ExtendedError> {
        match self.end_at(s) {
            Some(e) => Ok(e.condition_limit.clone()),
            None => {
                let t = self.transform.h(s)?;
                let speed = self.transform.gamma(s);
                Ok(self.forcing.rate(t)?.into_iter().map(|r| r / speed).collect())
            }
        }
    }

    /// `∂f/∂s = ∂f/∂Γ · dΓ/ds` at `(x, s)`.
    pub fn f_s_column(&self, x: &[f64], s: f64) -> Result<Vec<f64>, ExtendedError> {
        let gamma = self.gamma_at(s)?;
        let dg = self.gamma_s_derivative(s)?;
        let jg = self.field.jac_gamma(x, &gamma)?;
        let col = &jg * nalgebra::DVector::from_vec(dg);
        Ok(col.iter().copied().collect())
    }

    /// `(n+1) × (n+1)` Jacobian of the extended field.
    pub fn jacobian(&self, state: &ExtendedState) -> Result<DMatrix<f64>, ExtendedError> {
        let n = self.dim();
        let gamma = self.gamma_at(state.s)?;
        let jx = self.field.jac_x(&state.x, &gamma)?;
        let col = self.f_s_column(&state.x, state.s)?;
        let mut j = DMatrix::zeros(n + 1, n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(&jx);
        for (i, c) in col.into_iter().enumerate() {
            j[(i, n)] = c;
        }
        j[(n, n)] = self.transform.gamma_prime(state.s);
        Ok(j)
    }

    /// Extra Lyapunov exponent `γ'(±1)` gained at a compact end.
    pub fn s_lyapunov(&self, side: Side) -> Option<f64> {
        self.end(side).map(|e| e.l_s)
    }
}
