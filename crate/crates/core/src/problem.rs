//! Nonautonomous problem definition: the vector field `f(x, Γ)`, the forcing
//! `Γ(t)` with its asymptotic limits, and the frozen limit systems.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{BoundExpr, Dual, EvalError, Expr, Jet, Scalar};

/// Absolute tolerance for declaring that sampled forcing values have settled.
pub const TOL_LIMIT: f64 = 1e-8;
/// Smallest and largest exponent of the `t = ±2^k` sampling grid.
pub const LIMIT_K0: i32 = 4;
pub const LIMIT_K_MAX: i32 = 40;
const OSCILLATION_WINDOW: usize = 8;

pub type Parameters = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Past,
    Future,
}

impl Side {
    /// `-1` for the past, `+1` for the future.
    pub fn sign(self) -> f64 {
        match self {
            Side::Past => -1.0,
            Side::Future => 1.0,
        }
    }

    pub fn endpoint(self) -> f64 {
        self.sign()
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Past => "past",
            Side::Future => "future",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sides {
    #[default]
    TwoSided,
    FutureOnly,
    PastOnly,
}

impl Sides {
    pub fn allows(self, side: Side) -> bool {
        matches!(
            (self, side),
            (Sides::TwoSided, _) | (Sides::FutureOnly, Side::Future) | (Sides::PastOnly, Side::Past)
        )
    }

    pub fn list(self) -> &'static [Side] {
        match self {
            Sides::TwoSided => &[Side::Past, Side::Future],
            Sides::FutureOnly => &[Side::Future],
            Sides::PastOnly => &[Side::Past],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoLimitReason {
    Diverges,
    Oscillates,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("invalid definition: {0}")]
    Invalid(String),
    #[error("expression `{expr}`: {source}")]
    Expr { expr: String, source: EvalError },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("side `{}` is not available for this forcing", .0.name())]
    SideUnavailable(Side),
    #[error("forcing has no {} limit ({reason:?}); last samples {last:?}", side.name())]
    NoLimit {
        side: Side,
        reason: NoLimitReason,
        last: Vec<f64>,
    },
    #[error("declared {} limit {declared:?} disagrees with estimate {estimated:?}", side.name())]
    Disagreement {
        side: Side,
        declared: Vec<f64>,
        estimated: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeclaredLimits {
    #[serde(default)]
    pub past: Option<Vec<f64>>,
    #[serde(default)]
    pub future: Option<Vec<f64>>,
}

impl DeclaredLimits {
    pub fn get(&self, side: Side) -> Option<&[f64]> {
        match side {
            Side::Past => self.past.as_deref(),
            Side::Future => self.future.as_deref(),
        }
    }
}

fn check_names(
    exprs: &[Expr],
    allowed: &[String],
    what: &str,
) -> Result<Vec<BoundExpr>, ProblemError> {
    exprs
        .iter()
        .map(|e| {
            e.bind(allowed).map_err(|err| match err {
                EvalError::Unbound(v) => ProblemError::Invalid(format!(
                    "{what} expression `{e}` uses undeclared variable `{v}`"
                )),
                other => ProblemError::Expr {
                    expr: e.to_string(),
                    source: other,
                },
            })
        })
        .collect()
}

fn check_param_names(params: &Parameters) -> Result<(), ProblemError> {
    for name in params.keys() {
        let reserved = name == "t"
            || name == "s"
            || name == "pi"
            || name
                .strip_prefix('x')
                .or_else(|| name.strip_prefix("Gamma"))
                .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()));
        if reserved {
            return Err(ProblemError::Invalid(format!(
                "parameter name `{name}` collides with a reserved variable"
            )));
        }
    }
    Ok(())
}

/// The `d`-component forcing `Γ(t)`.
///
/// A time scale `r` makes the profile evaluate `Λ(r t)`; the expressions
/// themselves describe `Λ`.
#[derive(Debug, Clone)]
pub struct ForcingProfile {
    components: Vec<Expr>,
    bound: Vec<BoundExpr>,
    template: Vec<f64>,
    declared: DeclaredLimits,
    sides: Sides,
    time_scale: f64,
}

impl ForcingProfile {
    pub fn new(
        components: Vec<Expr>,
        params: &Parameters,
        sides: Sides,
        declared: DeclaredLimits,
    ) -> Result<Self, ProblemError> {
        if components.is_empty() {
            return Err(ProblemError::Invalid("forcing needs at least one component".into()));
        }
        check_param_names(params)?;
        let mut layout = vec!["t".to_string()];
        layout.extend(params.keys().cloned());
        let bound = check_names(&components, &layout, "forcing")?;
        let d = components.len();
        for side in [Side::Past, Side::Future] {
            if let Some(l) = declared.get(side) {
                if l.len() != d || l.iter().any(|v| !v.is_finite()) {
                    return Err(ProblemError::Invalid(format!(
                        "declared {} limit must be {d} finite values",
                        side.name()
                    )));
                }
            }
        }
        let mut template = vec![0.0];
        template.extend(params.values().copied());
        Ok(Self {
            components,
            bound,
            template,
            declared,
            sides,
            time_scale: 1.0,
        })
    }

    /// Convenience constructor from expression source strings.
    pub fn parse(
        sources: &[&str],
        params: &Parameters,
        sides: Sides,
        declared: DeclaredLimits,
    ) -> Result<Self, ProblemError> {
        let exprs = sources
            .iter()
            .map(|s| Expr::parse(s).map_err(|e| ProblemError::Invalid(format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(exprs, params, sides, declared)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn sides(&self) -> Sides {
        self.sides
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn declared(&self) -> &DeclaredLimits {
        &self.declared
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Same profile evaluated as `Λ(r t)`.
    pub fn with_time_scale(&self, r: f64) -> Self {
        let mut out = self.clone();
        out.time_scale = r;
        out
    }

    fn eval_component<S: Scalar>(&self, i: usize, tau: S) -> Result<S, EvalError> {
        let mut vals: Vec<S> = self.template.iter().map(|&v| S::constant(v)).collect();
        vals[0] = tau;
        self.bound[i].eval(&vals)
    }

    /// `(Γ1(t), …, Γd(t))`.
    pub fn value(&self, t: f64) -> Result<Vec<f64>, EvalError> {
        let tau = self.time_scale * t;
        (0..self.dim()).map(|i| self.eval_component(i, tau)).collect()
    }

    /// Componentwise `dΓ/dt`.
    pub fn rate(&self, t: f64) -> Result<Vec<f64>, EvalError> {
        let tau = self.time_scale * t;
        (0..self.dim())
            .map(|i| Ok(self.time_scale * self.eval_component(i, Dual::var(tau))?.d))
            .collect()
    }

    /// Value and first two time derivatives of component `i`.
    pub fn jet(&self, i: usize, t: f64) -> Result<Jet, EvalError> {
        let r = self.time_scale;
        let j = self.eval_component(i, Jet::var(r * t))?;
        Ok(Jet::new(j.v, r * j.d1, r * r * j.d2))
    }

    /// Sample `Γ(±2^k)` and decide whether the profile has settled.
    pub fn estimate_limits(&self, side: Side) -> Result<Vec<f64>, ProblemError> {
        if !self.sides.allows(side) {
            return Err(ProblemError::SideUnavailable(side));
        }
        let samples = (LIMIT_K0..=LIMIT_K_MAX)
            .map(|k| self.value(side.sign() * 2f64.powi(k)))
            .collect::<Result<Vec<_>, _>>()?;
        let last = samples.last().unwrap().clone();
        let tail = &samples[samples.len() - 3..];
        let settled = (0..self.dim()).all(|c| {
            tail.iter().all(|s| s[c].is_finite())
                && (0..3).all(|a| (0..3).all(|b| (tail[a][c] - tail[b][c]).abs() <= TOL_LIMIT))
        });
        if !settled {
            let window = &samples[samples.len() - OSCILLATION_WINDOW..];
            let oscillates = (0..self.dim()).all(|c| {
                let diffs: Vec<f64> = window.windows(2).map(|w| w[1][c] - w[0][c]).collect();
                let monotone = diffs.iter().all(|&d| d >= 0.0) || diffs.iter().all(|&d| d <= 0.0);
                let (lo, hi) = window
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                        (lo.min(s[c]), hi.max(s[c]))
                    });
                !monotone && hi - lo > TOL_LIMIT
            });
            return Err(ProblemError::NoLimit {
                side,
                reason: if oscillates {
                    NoLimitReason::Oscillates
                } else {
                    NoLimitReason::Diverges
                },
                last,
            });
        }
        let last = aitken(tail);
        match self.declared.get(side) {
            Some(decl) => {
                if decl.iter().zip(&last).any(|(a, b)| (a - b).abs() > TOL_LIMIT) {
                    return Err(ProblemError::Disagreement {
                        side,
                        declared: decl.to_vec(),
                        estimated: last,
                    });
                }
                Ok(decl.to_vec())
            }
            None => Ok(last),
        }
    }
}

/// Aitken extrapolation of three settled samples at doubling times; exact
/// for power-law tails. Falls back to the last sample.
fn aitken(tail: &[Vec<f64>]) -> Vec<f64> {
    (0..tail[2].len())
        .map(|c| {
            let (a, b, x) = (tail[0][c], tail[1][c], tail[2][c]);
            let (d1, d2) = (b - a, x - b);
            let den = d2 - d1;
            if den == 0.0 || d1 * d2 <= 0.0 || d2.abs() >= d1.abs() {
                return x;
            }
            let corr = d2 * d2 / den;
            if corr.is_finite() && corr.abs() <= 2.0 * d2.abs() {
                x - corr
            } else {
                x
            }
        })
        .collect()
}

/// The vector field `f(x, Γ)` of the nonautonomous system.
#[derive(Debug, Clone)]
pub struct VectorFieldDef {
    exprs: Vec<Expr>,
    bound: Vec<BoundExpr>,
    n: usize,
    d: usize,
    params: Vec<f64>,
}

impl VectorFieldDef {
    pub fn new(exprs: Vec<Expr>, d: usize, params: &Parameters) -> Result<Self, ProblemError> {
        let n = exprs.len();
        if n == 0 {
            return Err(ProblemError::Invalid("vector field needs at least one component".into()));
        }
        check_param_names(params)?;
        let mut layout: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        layout.extend((1..=d).map(|i| format!("Gamma{i}")));
        layout.extend(params.keys().cloned());
        let bound = check_names(&exprs, &layout, "vector field")?;
        Ok(Self {
            exprs,
            bound,
            n,
            d,
            params: params.values().copied().collect(),
        })
    }

    pub fn parse(sources: &[&str], d: usize, params: &Parameters) -> Result<Self, ProblemError> {
        let exprs = sources
            .iter()
            .map(|s| Expr::parse(s).map_err(|e| ProblemError::Invalid(format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(exprs, d, params)
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn forcing_dim(&self) -> usize {
        self.d
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    fn slots<S: Scalar>(&self, x: &[S], gamma: &[S]) -> Vec<S> {
        let mut v = Vec::with_capacity(self.n + self.d + self.params.len());
        v.extend_from_slice(x);
        v.extend_from_slice(gamma);
        v.extend(self.params.iter().map(|&p| S::constant(p)));
        v
    }

    pub fn eval_into(&self, x: &[f64], gamma: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let vals = self.slots(x, gamma);
        for (o, b) in out.iter_mut().zip(&self.bound) {
            *o = b.eval(&vals)?;
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], gamma: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.n];
        self.eval_into(x, gamma, &mut out)?;
        Ok(out)
    }

    /// Column `j` of the Jacobian with respect to the concatenated `(x, Γ)`.
    fn jac_column(&self, x: &[f64], gamma: &[f64], j: usize) -> Result<Vec<f64>, EvalError> {
        let mut vals: Vec<Dual> = self.slots(
            &x.iter().map(|&v| Dual::constant(v)).collect::<Vec<_>>(),
            &gamma.iter().map(|&v| Dual::constant(v)).collect::<Vec<_>>(),
        );
        vals[j].d = 1.0;
        self.bound
            .iter()
            .map(|b| {
                if b.uses_slot(j) {
                    Ok(b.eval(&vals)?.d)
                } else {
                    Ok(0.0)
                }
            })
            .collect()
    }

    /// `∂f/∂x`, `n × n`.
    pub fn jac_x(&self, x: &[f64], gamma: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            let col = self.jac_column(x, gamma, j)?;
            m.column_mut(j).copy_from_slice(&col);
        }
        Ok(m)
    }

    /// `∂f/∂Γ`, `n × d`.
    pub fn jac_gamma(&self, x: &[f64], gamma: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut m = DMatrix::zeros(self.n, self.d);
        for j in 0..self.d {
            let col = self.jac_column(x, gamma, self.n + j)?;
            m.column_mut(j).copy_from_slice(&col);
        }
        Ok(m)
    }
}

/// `x ↦ f(x, Γ^side)` with the forcing frozen at one of its limits.
#[derive(Debug, Clone)]
pub struct LimitSystem {
    field: VectorFieldDef,
    gamma: Vec<f64>,
    side: Side,
}

impl LimitSystem {
    pub fn frozen(field: VectorFieldDef, gamma: Vec<f64>, side: Side) -> Self {
        Self { field, gamma, side }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn dim(&self) -> usize {
        self.field.state_dim()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.field.eval(x, &self.gamma)
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        self.field.jac_x(x, &self.gamma)
    }
}

/// The autonomous limit system on `side`.
pub fn limit_system(
    field: &VectorFieldDef,
    forcing: &ForcingProfile,
    side: Side,
) -> Result<LimitSystem, ProblemError> {
    let gamma = forcing.estimate_limits(side)?;
    Ok(LimitSystem::frozen(field.clone(), gamma, side))
}
