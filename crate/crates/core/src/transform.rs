//! Compactification transforms `s = g(t)`, their inverses `t = h(s)` and the
//! induced autonomous clock `ṡ = γ(s) = ġ(h(s)) = 1/h'(s)`.
//!
//! Built-in families (exponential, algebraic, their one-sided and two-rate
//! variants) use closed forms for `γ` and `γ'`, including exact endpoint
//! values. Far-field quantities such as `ġ(t)` for huge `|t|` are computed
//! from the end gaps `1 - s` and `1 + s` directly, since `s` itself rounds
//! to `±1` long before `ġ` underflows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::{assess, far_field_samples, Verdict};
use crate::expr::{BoundExpr, Dual, EvalError, Expr, Jet};
use crate::problem::{ForcingProfile, ProblemError, Side, Sides};

/// Target accuracy in `s` for numeric inversion of `h`.
pub const INVERSION_TOL: f64 = 1e-12;
/// `ġ` values below this are treated as underflowed.
pub(crate) const SPEED_FLOOR: f64 = 1e-280;
const LN_MIN: f64 = -745.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    ExpTwoSided,
    AlgTwoSided,
    ExpRight,
    ExpLeft,
    AlgRight,
    AlgLeft,
    ExpTwoRate,
    AlgTwoRate,
    GammaBased,
    Custom,
}

impl TransformKind {
    pub fn name(self) -> &'static str {
        match self {
            TransformKind::ExpTwoSided => "exp-two-sided",
            TransformKind::AlgTwoSided => "alg-two-sided",
            TransformKind::ExpRight => "exp-right",
            TransformKind::ExpLeft => "exp-left",
            TransformKind::AlgRight => "alg-right",
            TransformKind::AlgLeft => "alg-left",
            TransformKind::ExpTwoRate => "exp-two-rate",
            TransformKind::AlgTwoRate => "alg-two-rate",
            TransformKind::GammaBased => "gamma-based",
            TransformKind::Custom => "custom",
        }
    }

    pub fn is_exponential(self) -> bool {
        matches!(
            self,
            TransformKind::ExpTwoSided
                | TransformKind::ExpRight
                | TransformKind::ExpLeft
                | TransformKind::ExpTwoRate
        )
    }

    pub fn is_algebraic(self) -> bool {
        matches!(
            self,
            TransformKind::AlgTwoSided
                | TransformKind::AlgRight
                | TransformKind::AlgLeft
                | TransformKind::AlgTwoRate
        )
    }
}

/// Which end(s) of the time line are compactified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    Right,
    Left,
}

impl Sidedness {
    pub fn sides(self) -> Sides {
        match self {
            Sidedness::TwoSided => Sides::TwoSided,
            Sidedness::Right => Sides::FutureOnly,
            Sidedness::Left => Sides::PastOnly,
        }
    }

    pub fn from_sides(sides: Sides) -> Self {
        match sides {
            Sides::TwoSided => Sidedness::TwoSided,
            Sides::FutureOnly => Sidedness::Right,
            Sides::PastOnly => Sidedness::Left,
        }
    }

    fn domain(self) -> (f64, f64) {
        match self {
            Sidedness::TwoSided => (-1.0, 1.0),
            Sidedness::Right => (0.0, 1.0),
            Sidedness::Left => (-1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("exponential rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("algebraic order must be positive, got {0}")]
    NonPositiveOrder(f64),
    #[error("forcing component {component} is not monotone")]
    NotMonotone { component: usize },
    #[error("forcing component {component} has equal limits; it cannot drive a transform")]
    DegenerateLimits { component: usize },
    #[error("s = {0} has no finite image under h")]
    OutOfDomain(f64),
    #[error("invalid transform: {0}")]
    Invalid(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `g(t) = a·Γ_c(t) + b` built from one forcing component.
#[derive(Debug, Clone)]
pub struct GammaNormalization {
    forcing: ForcingProfile,
    component: usize,
    scale: f64,
    offset: f64,
}

impl GammaNormalization {
    fn g(&self, t: f64) -> Result<f64, EvalError> {
        Ok(self.scale * self.forcing.jet(self.component, t)?.v + self.offset)
    }

    fn g_jet(&self, t: f64) -> Result<Jet, EvalError> {
        let j = self.forcing.jet(self.component, t)?;
        Ok(Jet::new(
            self.scale * j.v + self.offset,
            self.scale * j.d1,
            self.scale * j.d2,
        ))
    }

    pub fn component(&self) -> usize {
        self.component
    }
}

/// User-supplied inverse transform `h(s)` with an optional far-field speed
/// `ln ġ(t)` used where `s = g(t)` is no longer representable.
#[derive(Debug, Clone)]
pub struct CustomTransform {
    h_src: String,
    h: BoundExpr,
    log_speed_src: Option<String>,
    log_speed: Option<BoundExpr>,
}

impl CustomTransform {
    fn h_jet(&self, s: f64) -> Result<Jet, EvalError> {
        self.h.eval(&[Jet::var(s)])
    }

    pub fn h_source(&self) -> &str {
        &self.h_src
    }

    pub fn log_speed_source(&self) -> Option<&str> {
        self.log_speed_src.as_deref()
    }
}

#[derive(Debug, Clone)]
enum Family {
    Builtin,
    Gamma(Box<GammaNormalization>),
    Custom(Box<CustomTransform>),
}

/// Accurate representation of a point `s` with both end gaps.
#[derive(Debug, Clone, Copy)]
struct Gaps {
    s: f64,
    /// `1 + s`
    gm: f64,
    /// `1 - s`
    gp: f64,
}

impl Gaps {
    fn from_s(s: f64) -> Self {
        Self {
            s,
            gm: 1.0 + s,
            gp: 1.0 - s,
        }
    }
    fn from_gp(gp: f64) -> Self {
        Self {
            s: 1.0 - gp,
            gm: 2.0 - gp,
            gp,
        }
    }
    fn from_gm(gm: f64) -> Self {
        Self {
            s: gm - 1.0,
            gm,
            gp: 2.0 - gm,
        }
    }
    fn mirrored(self) -> Self {
        Self {
            s: -self.s,
            gm: self.gp,
            gp: self.gm,
        }
    }
}

/// A compactification transform.
#[derive(Debug, Clone)]
pub struct Transform {
    kind: TransformKind,
    alpha_minus: f64,
    alpha_plus: f64,
    sidedness: Sidedness,
    s_lo: f64,
    s_hi: f64,
    family: Family,
    /// `γ'` at the compact ends for sampled families (past, future).
    sampled_end_slopes: [Option<f64>; 2],
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Past => 0,
        Side::Future => 1,
    }
}

/// Root of a decreasing function on `[lo, hi]` by bisection.
fn bisect_decreasing(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl Transform {
    fn builtin(kind: TransformKind, am: f64, ap: f64, sidedness: Sidedness) -> Self {
        let (s_lo, s_hi) = sidedness.domain();
        Self {
            kind,
            alpha_minus: am,
            alpha_plus: ap,
            sidedness,
            s_lo,
            s_hi,
            family: Family::Builtin,
            sampled_end_slopes: [None, None],
        }
    }

    /// Exponential family `g(t) = tanh(αt/2)` and its one-sided forms.
    pub fn exponential(alpha: f64, sidedness: Sidedness) -> Result<Self, TransformError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(TransformError::NonPositiveRate(alpha));
        }
        let kind = match sidedness {
            Sidedness::TwoSided => TransformKind::ExpTwoSided,
            Sidedness::Right => TransformKind::ExpRight,
            Sidedness::Left => TransformKind::ExpLeft,
        };
        Ok(Self::builtin(kind, alpha, alpha, sidedness))
    }

    /// Exponential transform with distinct past and future rates.
    pub fn exponential_two_rate(alpha_minus: f64, alpha_plus: f64) -> Result<Self, TransformError> {
        for a in [alpha_minus, alpha_plus] {
            if !(a > 0.0 && a.is_finite()) {
                return Err(TransformError::NonPositiveRate(a));
            }
        }
        Ok(Self::builtin(
            TransformKind::ExpTwoRate,
            alpha_minus,
            alpha_plus,
            Sidedness::TwoSided,
        ))
    }

    /// Algebraic family `h(s) = s / (1 - s²)^{1/α}` and its one-sided forms.
    pub fn algebraic(alpha: f64, sidedness: Sidedness) -> Result<Self, TransformError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(TransformError::NonPositiveOrder(alpha));
        }
        let kind = match sidedness {
            Sidedness::TwoSided => TransformKind::AlgTwoSided,
            Sidedness::Right => TransformKind::AlgRight,
            Sidedness::Left => TransformKind::AlgLeft,
        };
        Ok(Self::builtin(kind, alpha, alpha, sidedness))
    }

    pub fn algebraic_two_rate(alpha_minus: f64, alpha_plus: f64) -> Result<Self, TransformError> {
        for a in [alpha_minus, alpha_plus] {
            if !(a > 0.0 && a.is_finite()) {
                return Err(TransformError::NonPositiveOrder(a));
            }
        }
        Ok(Self::builtin(
            TransformKind::AlgTwoRate,
            alpha_minus,
            alpha_plus,
            Sidedness::TwoSided,
        ))
    }

    /// Transform driven by forcing component `component`, normalized to the
    /// compact interval. Sidedness follows the forcing.
    pub fn gamma_based(forcing: &ForcingProfile, component: usize) -> Result<Self, TransformError> {
        if component >= forcing.dim() {
            return Err(TransformError::Invalid(format!(
                "forcing has {} components, index {component} requested",
                forcing.dim()
            )));
        }
        let sidedness = Sidedness::from_sides(forcing.sides());
        // sign pattern of the component's derivative over the sampling grid
        let mut grid = vec![0.0];
        for k in -4..=crate::problem::LIMIT_K_MAX {
            let t = 2f64.powi(k);
            if sidedness != Sidedness::Left {
                grid.push(t);
            }
            if sidedness != Sidedness::Right {
                grid.push(-t);
            }
        }
        let (mut pos, mut neg) = (false, false);
        for &t in &grid {
            let rate = forcing.jet(component, t)?.d1;
            pos |= rate > 0.0;
            neg |= rate < 0.0;
        }
        if pos && neg {
            return Err(TransformError::NotMonotone { component });
        }
        let degenerate = TransformError::DegenerateLimits { component };
        let at_zero = forcing.jet(component, 0.0)?.v;
        let (scale, offset) = match sidedness {
            Sidedness::TwoSided => {
                let lp = forcing.estimate_limits(Side::Future)?[component];
                let lm = forcing.estimate_limits(Side::Past)?[component];
                let delta = lp - lm;
                if delta.abs() <= crate::problem::TOL_LIMIT {
                    return Err(degenerate);
                }
                (2.0 / delta, -(lp + lm) / delta)
            }
            Sidedness::Right => {
                let lp = forcing.estimate_limits(Side::Future)?[component];
                let delta = lp - at_zero;
                if delta.abs() <= crate::problem::TOL_LIMIT {
                    return Err(degenerate);
                }
                (1.0 / delta, -at_zero / delta)
            }
            Sidedness::Left => {
                let lm = forcing.estimate_limits(Side::Past)?[component];
                let delta = lm - at_zero;
                if delta.abs() <= crate::problem::TOL_LIMIT {
                    return Err(degenerate);
                }
                (-1.0 / delta, at_zero / delta)
            }
        };
        if !pos && !neg {
            return Err(degenerate);
        }
        // increasing g needs the derivative sign to match the normalization
        if (pos && scale < 0.0) || (neg && scale > 0.0) {
            return Err(TransformError::NotMonotone { component });
        }
        let (s_lo, s_hi) = sidedness.domain();
        let mut tr = Self {
            kind: TransformKind::GammaBased,
            alpha_minus: f64::NAN,
            alpha_plus: f64::NAN,
            sidedness,
            s_lo,
            s_hi,
            family: Family::Gamma(Box::new(GammaNormalization {
                forcing: forcing.clone(),
                component,
                scale,
                offset,
            })),
            sampled_end_slopes: [None, None],
        };
        tr.sample_end_slopes();
        Ok(tr)
    }

    /// User-supplied `h(s)` (variable `s`) with optional `ln ġ(t)` (variable `t`).
    pub fn custom(
        h: &str,
        log_speed: Option<&str>,
        sidedness: Sidedness,
    ) -> Result<Self, TransformError> {
        let parse = |src: &str, var: &str| -> Result<BoundExpr, TransformError> {
            let e = Expr::parse(src).map_err(|e| TransformError::Invalid(format!("`{src}`: {e}")))?;
            e.bind(&[var.to_string()]).map_err(|_| {
                TransformError::Invalid(format!("`{src}` may only use the variable `{var}`"))
            })
        };
        let custom = CustomTransform {
            h_src: h.to_string(),
            h: parse(h, "s")?,
            log_speed_src: log_speed.map(str::to_string),
            log_speed: log_speed.map(|src| parse(src, "t")).transpose()?,
        };
        let (s_lo, s_hi) = sidedness.domain();
        let mut tr = Self {
            kind: TransformKind::Custom,
            alpha_minus: f64::NAN,
            alpha_plus: f64::NAN,
            sidedness,
            s_lo,
            s_hi,
            family: Family::Custom(Box::new(custom)),
            sampled_end_slopes: [None, None],
        };
        tr.validate_custom()?;
        tr.sample_end_slopes();
        Ok(tr)
    }

    fn validate_custom(&self) -> Result<(), TransformError> {
        let Family::Custom(c) = &self.family else {
            return Ok(());
        };
        let n = 1000;
        let mut prev = f64::NEG_INFINITY;
        for i in 1..n {
            let s = self.s_lo + (self.s_hi - self.s_lo) * i as f64 / n as f64;
            let j = c.h_jet(s)?;
            if !(j.v > prev && j.d1 > 0.0) {
                return Err(TransformError::Invalid(format!(
                    "h(s) = {} is not strictly increasing near s = {s}",
                    c.h_src
                )));
            }
            prev = j.v;
        }
        for side in self.compact_sides() {
            let end = side.endpoint();
            let near = |gap: f64| c.h_jet(end - side.sign() * gap).map(|j| 1.0 / j.d1);
            let (far, close) = (near(1e-3)?, near(1e-9)?);
            if !(close >= 0.0 && close < far && close < 1e-3) {
                return Err(TransformError::Invalid(format!(
                    "1/h'(s) does not vanish at s = {end}"
                )));
            }
        }
        Ok(())
    }

    fn sample_end_slopes(&mut self) {
        for &side in self.compact_sides() {
            let samples = far_field_samples(side, |t| self.speed_log_slope(t).map(|v| vec![v]));
            let report = assess(&samples);
            self.sampled_end_slopes[side_index(side)] = match report.verdict {
                Verdict::Finite => Some(report.value[0]),
                _ => None,
            };
        }
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn sidedness(&self) -> Sidedness {
        self.sidedness
    }

    /// Single rate/order for symmetric families.
    pub fn alpha(&self) -> f64 {
        self.alpha_plus
    }

    pub fn alpha_minus(&self) -> f64 {
        self.alpha_minus
    }

    pub fn alpha_plus(&self) -> f64 {
        self.alpha_plus
    }

    pub fn s_domain(&self) -> (f64, f64) {
        (self.s_lo, self.s_hi)
    }

    pub fn gamma_normalization(&self) -> Option<&GammaNormalization> {
        match &self.family {
            Family::Gamma(g) => Some(g),
            _ => None,
        }
    }

    pub fn custom_parts(&self) -> Option<&CustomTransform> {
        match &self.family {
            Family::Custom(c) => Some(c),
            _ => None,
        }
    }

    pub fn compact_sides(&self) -> &'static [Side] {
        self.sidedness.sides().list()
    }

    pub fn is_compact_end(&self, s: f64) -> Option<Side> {
        self.compact_sides()
            .iter()
            .copied()
            .find(|side| s == side.endpoint())
    }

    /// Copy with every exponential rate multiplied by `r` (algebraic orders
    /// are invariant under time scaling).
    pub fn rate_scaled(&self, r: f64) -> Self {
        let mut out = self.clone();
        if self.kind.is_exponential() {
            out.alpha_minus *= r;
            out.alpha_plus *= r;
        }
        out
    }

    fn in_domain(&self, s: f64) -> bool {
        s >= self.s_lo && s <= self.s_hi
    }

    /// `t = h(s)` on the interior of the domain.
    pub fn h(&self, s: f64) -> Result<f64, TransformError> {
        if !self.in_domain(s) || self.is_compact_end(s).is_some() || s.is_nan() {
            return Err(TransformError::OutOfDomain(s));
        }
        let (am, ap) = (self.alpha_minus, self.alpha_plus);
        let t = match self.kind {
            TransformKind::ExpTwoSided => (s.ln_1p() - (-s).ln_1p()) / ap,
            TransformKind::ExpRight => -(-s).ln_1p() / ap,
            TransformKind::ExpLeft => s.ln_1p() / am,
            TransformKind::ExpTwoRate => s.ln_1p() / am - (-s).ln_1p() / ap,
            TransformKind::AlgTwoSided => s * ((1.0 + s) * (1.0 - s)).powf(-1.0 / ap),
            TransformKind::AlgRight => s * (1.0 - s).powf(-1.0 / ap),
            TransformKind::AlgLeft => s * (1.0 + s).powf(-1.0 / am),
            TransformKind::AlgTwoRate => s * (1.0 + s).powf(-1.0 / am) * (1.0 - s).powf(-1.0 / ap),
            TransformKind::GammaBased => self.invert_gamma(s)?,
            TransformKind::Custom => match &self.family {
                Family::Custom(c) => c.h.eval(&[s])?,
                _ => unreachable!(),
            },
        };
        Ok(t)
    }

    /// `h'(s)` on the interior.
    pub fn h_prime(&self, s: f64) -> Result<f64, TransformError> {
        if !self.in_domain(s) || self.is_compact_end(s).is_some() || s.is_nan() {
            return Err(TransformError::OutOfDomain(s));
        }
        match &self.family {
            Family::Custom(c) => Ok(c.h.eval(&[Dual::var(s)])?.d),
            _ => Ok(1.0 / self.gamma(s)),
        }
    }

    fn invert_gamma(&self, s: f64) -> Result<f64, TransformError> {
        let Family::Gamma(gn) = &self.family else {
            unreachable!()
        };
        let (mut lo, mut hi) = match self.sidedness {
            Sidedness::TwoSided => (-1.0, 1.0),
            Sidedness::Right => (0.0, 1.0),
            Sidedness::Left => (-1.0, 0.0),
        };
        while self.sidedness != Sidedness::Right && gn.g(lo)? > s {
            lo *= 2.0;
            if lo < -1e300 {
                return Err(TransformError::OutOfDomain(s));
            }
        }
        while self.sidedness != Sidedness::Left && gn.g(hi)? < s {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(TransformError::OutOfDomain(s));
            }
        }
        let mut err = None;
        let t = bisect_decreasing(
            |t| match gn.g(t) {
                Ok(v) => s - v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            },
            lo,
            hi,
        );
        match err {
            Some(e) => Err(e.into()),
            None => Ok(t),
        }
    }

    /// `s = g(t)`; times outside a one-sided domain clamp to its finite end.
    pub fn g(&self, t: f64) -> f64 {
        self.gaps(t).s.clamp(self.s_lo, self.s_hi)
    }

    fn gaps(&self, t: f64) -> Gaps {
        if t.is_nan() {
            return Gaps::from_s(f64::NAN);
        }
        let (am, ap) = (self.alpha_minus, self.alpha_plus);
        match self.kind {
            TransformKind::ExpTwoSided => {
                let x = ap * t.abs();
                let e = (-x).exp();
                let g = Gaps::from_gp(2.0 * e / (1.0 + e));
                let g = Gaps {
                    s: -(-x).exp_m1() / (1.0 + e),
                    gm: 2.0 / (1.0 + e),
                    gp: g.gp,
                };
                if t < 0.0 {
                    g.mirrored()
                } else {
                    g
                }
            }
            TransformKind::ExpRight => {
                let gp = (-ap * t).exp();
                Gaps {
                    s: -(-ap * t).exp_m1(),
                    gm: 2.0 - gp,
                    gp,
                }
            }
            TransformKind::ExpLeft => {
                let gm = (am * t).exp();
                Gaps {
                    s: (am * t).exp_m1(),
                    gm,
                    gp: 2.0 - gm,
                }
            }
            TransformKind::AlgTwoSided if ap == 1.0 => {
                let x = t.abs();
                let r = 1f64.hypot(2.0 * x);
                let g = Gaps {
                    s: 2.0 * x / (1.0 + r),
                    gm: (1.0 + r + 2.0 * x) / (1.0 + r),
                    gp: (1.0 + 1.0 / (r + 2.0 * x)) / (1.0 + r),
                };
                if t < 0.0 {
                    g.mirrored()
                } else {
                    g
                }
            }
            TransformKind::ExpTwoRate
            | TransformKind::AlgTwoSided
            | TransformKind::AlgTwoRate
            | TransformKind::AlgRight
            | TransformKind::AlgLeft => self.gaps_by_inversion(t),
            TransformKind::GammaBased => {
                let Family::Gamma(gn) = &self.family else {
                    unreachable!()
                };
                Gaps::from_s(gn.g(t).unwrap_or(f64::NAN))
            }
            TransformKind::Custom => Gaps::from_s(self.invert_custom(t)),
        }
    }

    /// Solve `h = t` in the log of the small gap.
    fn gaps_by_inversion(&self, t: f64) -> Gaps {
        if t == 0.0 {
            return Gaps::from_s(0.0);
        }
        let (am, ap) = (self.alpha_minus, self.alpha_plus);
        let future = t > 0.0;
        match (self.kind, future) {
            (TransformKind::AlgRight, false) => return Gaps::from_s(self.s_lo),
            (TransformKind::AlgLeft, true) => return Gaps::from_s(self.s_hi),
            _ => {}
        }
        // w = ln(small gap); residual(w) is decreasing in w
        let residual = |w: f64| -> f64 {
            let small = w.exp();
            let g = if future {
                Gaps::from_gp(small)
            } else {
                Gaps::from_gm(small)
            };
            match self.kind {
                TransformKind::ExpTwoRate => {
                    let h = g.gm.ln() / am - g.gp.ln() / ap;
                    if future {
                        h - t
                    } else {
                        t - h
                    }
                }
                _ => {
                    let (e_m, e_p) = match self.kind {
                        TransformKind::AlgTwoSided | TransformKind::AlgTwoRate => (am, ap),
                        TransformKind::AlgRight => (f64::INFINITY, ap),
                        TransformKind::AlgLeft => (am, f64::INFINITY),
                        _ => unreachable!(),
                    };
                    let ln_h = g.s.abs().ln() - g.gm.ln() / e_m - g.gp.ln() / e_p;
                    ln_h - t.abs().ln()
                }
            }
        };
        let a = if future { ap } else { am };
        let lo = match self.kind {
            TransformKind::ExpTwoRate => -a * t.abs() - 1.0,
            _ => -a * (t.abs().ln().max(0.0) + 0.46 + std::f64::consts::LN_2 * 2.0 / a.min(1.0)) - 1.0,
        }
        .max(LN_MIN)
        .min(-1.0);
        let w = if residual(lo) <= 0.0 {
            LN_MIN
        } else {
            bisect_decreasing(residual, lo, 0.0)
        };
        let small = w.exp();
        if future {
            Gaps::from_gp(small)
        } else {
            Gaps::from_gm(small)
        }
    }

    fn invert_custom(&self, t: f64) -> f64 {
        let Family::Custom(c) = &self.family else {
            unreachable!()
        };
        let h = |s: f64| c.h.eval(&[s]).unwrap_or(f64::NAN);
        let (mut lo, mut hi) = (self.s_lo, self.s_hi);
        if self.sidedness == Sidedness::Right && t <= h(lo) {
            return lo;
        }
        if self.sidedness == Sidedness::Left && t >= h(hi) {
            return hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if h(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn gamma_from_gaps(&self, g: Gaps) -> f64 {
        let (am, ap) = (self.alpha_minus, self.alpha_plus);
        match self.kind {
            TransformKind::ExpTwoSided => 0.5 * ap * g.gm * g.gp,
            TransformKind::ExpRight => ap * g.gp,
            TransformKind::ExpLeft => am * g.gm,
            TransformKind::ExpTwoRate => am * ap * g.gm * g.gp / (ap * g.gp + am * g.gm),
            TransformKind::AlgTwoSided => {
                let q = g.gm * g.gp;
                ap * q.powf(1.0 + 1.0 / ap) / (ap * q + 2.0 * g.s * g.s)
            }
            TransformKind::AlgRight => {
                let u = g.gp;
                ap * u.powf(1.0 + 1.0 / ap) / ((ap - 1.0) * u + 1.0)
            }
            TransformKind::AlgLeft => {
                let v = g.gm;
                am * v.powf(1.0 + 1.0 / am) / ((am - 1.0) * v + 1.0)
            }
            TransformKind::AlgTwoRate => {
                let e = am * ap * g.gm * g.gp - ap * g.s * g.gp + am * g.s * g.gm;
                am * ap * g.gm.powf(1.0 + 1.0 / am) * g.gp.powf(1.0 + 1.0 / ap) / e
            }
            TransformKind::GammaBased | TransformKind::Custom => unreachable!(),
        }
    }

    /// `γ(s)`; exactly zero at compact ends.
    pub fn gamma(&self, s: f64) -> f64 {
        if self.is_compact_end(s).is_some() {
            return 0.0;
        }
        match &self.family {
            Family::Builtin => self.gamma_from_gaps(Gaps::from_s(s)),
            Family::Gamma(gn) => match self.h(s) {
                Ok(t) => gn.g_jet(t).map(|j| j.d1).unwrap_or(f64::NAN),
                Err(_) => f64::NAN,
            },
            Family::Custom(c) => c.h.eval(&[Dual::var(s)]).map(|d| 1.0 / d.d).unwrap_or(f64::NAN),
        }
    }

    /// `γ'(s)`, including the endpoint limits (`∓α` exponential, `0` algebraic).
    pub fn gamma_prime(&self, s: f64) -> f64 {
        if let Some(side) = self.is_compact_end(s) {
            return self.end_slope(side).unwrap_or(f64::NAN);
        }
        let (am, ap) = (self.alpha_minus, self.alpha_plus);
        match self.kind {
            TransformKind::ExpTwoSided => -ap * s,
            TransformKind::ExpRight => -ap,
            TransformKind::ExpLeft => am,
            TransformKind::ExpTwoRate => {
                let n = am * ap * (1.0 - s) * (1.0 + s);
                let d = ap * (1.0 - s) + am * (1.0 + s);
                (-2.0 * am * ap * s * d - n * (am - ap)) / (d * d)
            }
            TransformKind::AlgTwoSided => {
                let q = (1.0 - s) * (1.0 + s);
                let p = 1.0 + 1.0 / ap;
                let n = ap * q.powf(p);
                let dn = -2.0 * s * ap * p * q.powf(p - 1.0);
                let d = ap + (2.0 - ap) * s * s;
                let dd = 2.0 * (2.0 - ap) * s;
                (dn * d - n * dd) / (d * d)
            }
            TransformKind::AlgRight | TransformKind::AlgLeft => {
                let (a, u, sign) = if self.kind == TransformKind::AlgRight {
                    (ap, 1.0 - s, -1.0)
                } else {
                    (am, 1.0 + s, 1.0)
                };
                let p = 1.0 + 1.0 / a;
                let n = a * u.powf(p);
                let d = (a - 1.0) * u + 1.0;
                sign * (a * p * u.powf(p - 1.0) * d - n * (a - 1.0)) / (d * d)
            }
            TransformKind::AlgTwoRate => {
                let g = Gaps::from_s(s);
                let e = am * ap * g.gm * g.gp - ap * s * g.gp + am * s * g.gm;
                let de = -2.0 * am * ap * s - ap * g.gp + ap * s + am * g.gm + am * s;
                let gamma = self.gamma_from_gaps(g);
                gamma * ((1.0 + 1.0 / am) / g.gm - (1.0 + 1.0 / ap) / g.gp - de / e)
            }
            TransformKind::GammaBased => match (&self.family, self.h(s)) {
                (Family::Gamma(gn), Ok(t)) => gn
                    .g_jet(t)
                    .map(|j| j.d2 / j.d1)
                    .unwrap_or(f64::NAN),
                _ => f64::NAN,
            },
            TransformKind::Custom => match &self.family {
                Family::Custom(c) => c
                    .h_jet(s)
                    .map(|j| -j.d2 / (j.d1 * j.d1))
                    .unwrap_or(f64::NAN),
                _ => unreachable!(),
            },
        }
    }

    /// Limit of `γ'` at a compact end; analytic for built-in families.
    pub fn end_slope(&self, side: Side) -> Option<f64> {
        if !self.compact_sides().contains(&side) {
            return None;
        }
        match self.kind {
            TransformKind::ExpTwoSided
            | TransformKind::ExpRight
            | TransformKind::ExpLeft
            | TransformKind::ExpTwoRate => Some(match side {
                Side::Future => -self.alpha_plus,
                Side::Past => self.alpha_minus,
            }),
            k if k.is_algebraic() => Some(0.0),
            _ => self.sampled_end_slopes[side_index(side)],
        }
    }

    /// `ġ(t)`, accurate in the far field where `g(t)` rounds to `±1`.
    pub fn g_dot(&self, t: f64) -> f64 {
        match &self.family {
            Family::Builtin => self.gamma_from_gaps(self.gaps(t)),
            Family::Gamma(gn) => gn.g_jet(t).map(|j| j.d1).unwrap_or(f64::NAN),
            Family::Custom(c) => match &c.log_speed {
                Some(ls) => ls.eval(&[t]).map(f64::exp).unwrap_or(f64::NAN),
                None => {
                    let s = self.g(t);
                    if self.is_compact_end(s).is_some() {
                        0.0
                    } else {
                        self.gamma(s)
                    }
                }
            },
        }
    }

    /// `g̈(t)/ġ(t)` where it can be resolved in floating point.
    pub fn speed_log_slope(&self, t: f64) -> Option<f64> {
        let v = match &self.family {
            Family::Gamma(gn) => {
                let j = gn.g_jet(t).ok()?;
                if j.d1.abs() < SPEED_FLOOR {
                    return None;
                }
                j.d2 / j.d1
            }
            Family::Custom(c) => match &c.log_speed {
                Some(ls) => ls.eval(&[Dual::var(t)]).ok()?.d,
                None => {
                    let s = self.g(t);
                    if self.is_compact_end(s).is_some() || s == self.s_lo || s == self.s_hi {
                        return None;
                    }
                    self.gamma_prime(s)
                }
            },
            Family::Builtin => {
                let s = self.g(t);
                if self.is_compact_end(s).is_some() {
                    return None;
                }
                self.gamma_prime(s)
            }
        };
        v.is_finite().then_some(v)
    }
}

/// Serializable transform description used by configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_speed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidedness: Option<Sidedness>,
}

impl TransformSpec {
    pub fn build(&self, forcing: &ForcingProfile) -> Result<Transform, TransformError> {
        let alpha = || {
            self.alpha
                .ok_or_else(|| TransformError::Invalid(format!("`{}` needs `alpha`", self.kind.name())))
        };
        let rates = || match (self.alpha_minus, self.alpha_plus) {
            (Some(m), Some(p)) => Ok((m, p)),
            _ => Err(TransformError::Invalid(format!(
                "`{}` needs `alpha_minus` and `alpha_plus`",
                self.kind.name()
            ))),
        };
        match self.kind {
            TransformKind::ExpTwoSided => Transform::exponential(alpha()?, Sidedness::TwoSided),
            TransformKind::ExpRight => Transform::exponential(alpha()?, Sidedness::Right),
            TransformKind::ExpLeft => Transform::exponential(alpha()?, Sidedness::Left),
            TransformKind::AlgTwoSided => Transform::algebraic(alpha()?, Sidedness::TwoSided),
            TransformKind::AlgRight => Transform::algebraic(alpha()?, Sidedness::Right),
            TransformKind::AlgLeft => Transform::algebraic(alpha()?, Sidedness::Left),
            TransformKind::ExpTwoRate => {
                let (m, p) = rates()?;
                Transform::exponential_two_rate(m, p)
            }
            TransformKind::AlgTwoRate => {
                let (m, p) = rates()?;
                Transform::algebraic_two_rate(m, p)
            }
            TransformKind::GammaBased => Transform::gamma_based(forcing, self.component.unwrap_or(0)),
            TransformKind::Custom => {
                let h = self
                    .h
                    .as_deref()
                    .ok_or_else(|| TransformError::Invalid("`custom` needs `h`".into()))?;
                Transform::custom(
                    h,
                    self.log_speed.as_deref(),
                    self.sidedness
                        .unwrap_or_else(|| Sidedness::from_sides(forcing.sides())),
                )
            }
        }
    }

    pub fn describe(tr: &Transform) -> TransformSpec {
        let mut spec = TransformSpec {
            kind: tr.kind(),
            alpha: None,
            alpha_minus: None,
            alpha_plus: None,
            component: None,
            h: None,
            log_speed: None,
            sidedness: None,
        };
        match tr.kind() {
            TransformKind::ExpTwoRate | TransformKind::AlgTwoRate => {
                spec.alpha_minus = Some(tr.alpha_minus());
                spec.alpha_plus = Some(tr.alpha_plus());
            }
            TransformKind::GammaBased => {
                spec.component = tr.gamma_normalization().map(|g| g.component());
            }
            TransformKind::Custom => {
                let c = tr.custom_parts().unwrap();
                spec.h = Some(c.h_source().to_string());
                spec.log_speed = c.log_speed_source().map(str::to_string);
                spec.sidedness = Some(tr.sidedness());
            }
            _ => spec.alpha = Some(tr.alpha()),
        }
        spec
    }
}
