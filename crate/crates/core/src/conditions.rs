//! Numerical checks of the two transformation conditions, decay
//! classification of the forcing and transform recommendation.
//!
//! Far-field quantities are sampled on the grid `t = ±2^{j/4}` from
//! `|t| = 2^4` until the sampled quantity can no longer be resolved in
//! double precision (or `|t|` reaches `2^1000`).

use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::problem::{ForcingProfile, ProblemError, Side, Sides, LIMIT_K0};
use crate::transform::{Sidedness, Transform, TransformError, TransformSpec, SPEED_FLOOR};

/// Relative agreement required of the last three samples.
pub const TOL_COND: f64 = 1e-6;
/// Acceptance threshold on normalized regression residuals.
pub const FIT_TOL: f64 = 0.05;
/// Largest envelope index searched.
pub const M_MAX: u32 = 4;
/// Ratios above this are reported as diverging.
pub const RATIO_OVERFLOW: f64 = 1e12;
/// Fraction of the admissible bound used when recommending a transform.
pub const SAFETY: f64 = 0.9;

const GRID_STEPS_PER_OCTAVE: i32 = 4;
const K_FAR: i32 = 1000;
const OSC_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Finite,
    Diverges,
    Oscillates,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionError {
    #[error("side {0} is not available for this problem and transform")]
    SideUnavailable(&'static str),
    #[error("fewer than three resolvable samples on the {0} side")]
    InsufficientSamples(&'static str),
    #[error("forcing derivative underflows before enough samples on the {0} side")]
    InsufficientDecayWindow(&'static str),
    #[error("|t| = {t} is outside the envelope domain |t| > {threshold}")]
    OutOfDomain { t: f64, threshold: f64 },
    #[error("no transform can be recommended: {0}")]
    Unrecommendable(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Outcome of sampling a far-field limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub side: Side,
    pub converged: bool,
    pub verdict: Verdict,
    /// Last sample (the limit estimate when converged).
    pub value: Vec<f64>,
    /// Component with the largest spread over the last three samples.
    pub worst_component: usize,
    pub samples: Vec<(f64, Vec<f64>)>,
}

impl LimitReport {
    fn analytic(side: Side, value: f64) -> Self {
        Self {
            side,
            converged: true,
            verdict: Verdict::Finite,
            value: vec![value],
            worst_component: 0,
            samples: Vec::new(),
        }
    }
}

pub(crate) struct Assessment {
    pub verdict: Verdict,
    pub value: Vec<f64>,
    pub worst: usize,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

/// Sample `f` on the far-field grid of `side`. Sampling stops at the first
/// unresolvable point after a resolvable one, or right after a sample that
/// is non-finite or exceeds [`RATIO_OVERFLOW`].
pub(crate) fn far_field_samples(
    side: Side,
    mut f: impl FnMut(f64) -> Option<Vec<f64>>,
) -> Vec<(f64, Vec<f64>)> {
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for j in GRID_STEPS_PER_OCTAVE * LIMIT_K0..=GRID_STEPS_PER_OCTAVE * K_FAR {
        let t = side.sign() * 2f64.powf(j as f64 / GRID_STEPS_PER_OCTAVE as f64);
        match f(t) {
            Some(v) => {
                let blown = v.iter().any(|x| !x.is_finite() || x.abs() > RATIO_OVERFLOW);
                out.push((t, v));
                if blown {
                    break;
                }
            }
            None if out.is_empty() => continue,
            None => break,
        }
    }
    out
}

pub(crate) fn assess_with(samples: &[(f64, Vec<f64>)], tol: f64) -> Option<Assessment> {
    let (_, last) = samples.last()?;
    if last.iter().any(|x| !x.is_finite() || x.abs() > RATIO_OVERFLOW) {
        let worst = last
            .iter()
            .position(|x| !x.is_finite() || x.abs() > RATIO_OVERFLOW)
            .unwrap_or(0);
        return Some(Assessment {
            verdict: Verdict::Diverges,
            value: last.clone(),
            worst,
        });
    }
    if samples.len() < 3 {
        return None;
    }
    let tail = &samples[samples.len() - 3..];
    let dim = last.len();
    let spread = |i: usize| {
        let vals = tail.iter().map(|(_, v)| v[i]);
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
        (hi - lo) / 1f64.max(lo.abs()).max(hi.abs())
    };
    let worst = (0..dim)
        .max_by(|&a, &b| spread(a).total_cmp(&spread(b)))
        .unwrap_or(0);
    let converged = (0..dim).all(|i| {
        close(tail[0].1[i], tail[1].1[i], tol)
            && close(tail[1].1[i], tail[2].1[i], tol)
            && close(tail[0].1[i], tail[2].1[i], tol)
    });
    if converged {
        return Some(Assessment {
            verdict: Verdict::Finite,
            value: last.clone(),
            worst,
        });
    }
    let window = &samples[samples.len().saturating_sub(OSC_WINDOW)..];
    let growing = window
        .windows(2)
        .all(|w| w[1].1[worst].abs() > w[0].1[worst].abs());
    Some(Assessment {
        verdict: if growing {
            Verdict::Diverges
        } else {
            Verdict::Oscillates
        },
        value: last.clone(),
        worst,
    })
}

pub(crate) fn assess(samples: &[(f64, Vec<f64>)]) -> Assessment {
    assess_with(samples, TOL_COND).unwrap_or(Assessment {
        verdict: Verdict::Oscillates,
        value: Vec::new(),
        worst: 0,
    })
}

fn report(side: Side, samples: Vec<(f64, Vec<f64>)>) -> Result<LimitReport, ConditionError> {
    let a = assess_with(&samples, TOL_COND).ok_or(ConditionError::InsufficientSamples(side.name()))?;
    let converged = a.verdict == Verdict::Finite;
    let value = if converged {
        a.value
            .iter()
            .map(|&v| if v.abs() < TOL_COND { 0.0 } else { v })
            .collect()
    } else {
        a.value
    };
    Ok(LimitReport {
        side,
        converged,
        verdict: a.verdict,
        value,
        worst_component: a.worst,
        samples,
    })
}

fn require_side(allowed: bool, side: Side) -> Result<(), ConditionError> {
    if allowed {
        Ok(())
    } else {
        Err(ConditionError::SideUnavailable(side.name()))
    }
}

/// Sample `Γ̇(t)/ġ(t)` componentwise in the far field of `side`.
pub fn check_condition_one(
    forcing: &ForcingProfile,
    tr: &Transform,
    side: Side,
) -> Result<LimitReport, ConditionError> {
    require_side(
        forcing.sides().allows(side) && tr.compact_sides().contains(&side),
        side,
    )?;
    let samples = far_field_samples(side, |t| {
        let speed = tr.g_dot(t);
        if !(speed >= SPEED_FLOOR) {
            return None;
        }
        let rate = forcing.rate(t).ok()?;
        Some(rate.into_iter().map(|r| r / speed).collect())
    });
    report(side, samples)
}

/// Limit of `g̈/ġ` (equivalently `γ'` at the compact end). Built-in families
/// return their analytic endpoint value; others are sampled.
pub fn check_condition_two(tr: &Transform, side: Side) -> Result<LimitReport, ConditionError> {
    require_side(tr.compact_sides().contains(&side), side)?;
    if tr.kind().is_exponential() || tr.kind().is_algebraic() {
        let v = tr.end_slope(side).expect("built-in families have analytic end slopes");
        return Ok(LimitReport::analytic(side, v));
    }
    let samples = far_field_samples(side, |t| tr.speed_log_slope(t).map(|v| vec![v]));
    report(side, samples)
}

/// Nested-logarithm reference envelope `A(t, m) = -1/ln^m|t|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReferenceEnvelope {
    pub m: u32,
}

fn iterated_ln(x: f64, k: u32) -> f64 {
    (0..k).fold(x, |acc, _| acc.ln())
}

impl ReferenceEnvelope {
    pub fn new(m: u32) -> Self {
        Self { m }
    }

    /// `exp^{m-2}(e)`; the envelope is defined for `|t|` beyond this.
    pub fn threshold(&self) -> f64 {
        match self.m {
            0 => 0.0,
            1 => 1.0,
            m => (0..m - 2).fold(std::f64::consts::E, |acc, _| acc.exp()),
        }
    }

    fn check(&self, t: f64) -> Result<(), ConditionError> {
        let threshold = self.threshold();
        if t.abs() > threshold && t.is_finite() {
            Ok(())
        } else {
            Err(ConditionError::OutOfDomain { t, threshold })
        }
    }

    pub fn value(&self, t: f64) -> Result<f64, ConditionError> {
        self.check(t)?;
        Ok(-1.0 / iterated_ln(t.abs(), self.m))
    }

    /// `Ȧ(t, m) = 1 / (t · ln^m|t| · ∏_{k=1}^m ln^k|t|)`.
    pub fn rate(&self, t: f64) -> Result<f64, ConditionError> {
        self.check(t)?;
        let mut denom = t * iterated_ln(t.abs(), self.m);
        let mut l = t.abs();
        for _ in 0..self.m {
            l = l.ln();
            denom *= l;
        }
        Ok(1.0 / denom)
    }

    /// `Ä/Ȧ`, the logarithmic derivative of the envelope rate.
    pub fn log_slope(&self, t: f64) -> Result<f64, ConditionError> {
        self.check(t)?;
        // d/dt ln ln^k|t| = 1 / (t ∏_{j=1}^k ln^j|t|)
        let mut terms = Vec::with_capacity(self.m as usize + 1);
        let (mut l, mut prod) = (t.abs(), 1.0);
        terms.push(1.0 / t);
        for _ in 0..self.m {
            l = l.ln();
            prod *= l;
            terms.push(1.0 / (t * prod));
        }
        let outer = *terms.last().unwrap();
        Ok(-(terms[0] + outer + terms[1..].iter().sum::<f64>()))
    }

    /// Sampled second transformation condition for the asymptotic
    /// envelope transform `ġ = |Ȧ(·, m)|`.
    pub fn check_condition_two(&self, side: Side) -> Result<LimitReport, ConditionError> {
        let samples = far_field_samples(side, |t| self.log_slope(t).ok().map(|v| vec![v]));
        report(side, samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DecayKind {
    Exponential { rho: f64 },
    Algebraic { m: f64 },
    Envelope { m: u32 },
    Pathological,
    Nondecaying,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    /// Fitted `ρ` of `ln‖Γ̇‖ ≈ c - ρ|t|`.
    pub exp_rate: f64,
    pub exp_residual: f64,
    /// Fitted `m` of `ln‖Γ̇‖ ≈ c - m ln|t|`.
    pub alg_order: f64,
    pub alg_residual: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayClass {
    pub side: Side,
    pub class: DecayKind,
    pub fit: FitDiagnostics,
}

/// Least squares `y ≈ a + b x`; returns `(b, sqrt(1 - R²))`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let b = sxy / sxx;
    if syy == 0.0 {
        return (b, 0.0);
    }
    let r2 = sxy * sxy / (sxx * syy);
    (b, (1.0 - r2).max(0.0).sqrt())
}

fn rate_norm(forcing: &ForcingProfile, t: f64) -> Option<f64> {
    let r = forcing.rate(t).ok()?;
    let n = r.iter().fold(0.0, |acc: f64, &x| acc.hypot(x));
    (n.is_finite() && n >= SPEED_FLOOR).then_some(n)
}

/// Classify the decay of `‖Γ̇‖` on one side.
pub fn classify_decay(forcing: &ForcingProfile, side: Side) -> Result<DecayClass, ConditionError> {
    require_side(forcing.sides().allows(side), side)?;
    let mut all: Vec<(f64, f64)> = Vec::new();
    for j in -4 * GRID_STEPS_PER_OCTAVE..=GRID_STEPS_PER_OCTAVE * K_FAR {
        let t = 2f64.powf(j as f64 / GRID_STEPS_PER_OCTAVE as f64);
        match rate_norm(forcing, side.sign() * t) {
            Some(n) => all.push((t, n)),
            None if all.is_empty() => continue,
            None => break,
        }
    }
    let tail_start = 2f64.powi(LIMIT_K0);
    let tail: Vec<(f64, f64)> = all.iter().copied().filter(|(t, _)| *t >= tail_start).collect();
    let window = if tail.len() >= 6 {
        tail
    } else {
        all[all.len().saturating_sub(8)..].to_vec()
    };
    if window.len() < 4 {
        return Err(ConditionError::InsufficientDecayWindow(side.name()));
    }
    let ts: Vec<f64> = window.iter().map(|w| w.0).collect();
    let lts: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = window.iter().map(|w| w.1.ln()).collect();
    let (b_exp, r_exp) = linear_fit(&ts, &ys);
    let (b_alg, r_alg) = linear_fit(&lts, &ys);
    let fit = FitDiagnostics {
        exp_rate: -b_exp,
        exp_residual: r_exp,
        alg_order: -b_alg,
        alg_residual: r_alg,
        window: (side.sign() * ts[0], side.sign() * ts[ts.len() - 1]),
        samples: ts.len(),
    };
    let exp_ok = r_exp < FIT_TOL && -b_exp > 0.0;
    let alg_ok = r_alg < FIT_TOL && -b_alg > 0.0;
    let class = if exp_ok && (!alg_ok || r_exp <= r_alg) {
        DecayKind::Exponential { rho: -b_exp }
    } else if alg_ok && -b_alg > 1.0 + FIT_TOL {
        DecayKind::Algebraic { m: -b_alg }
    } else if alg_ok {
        // orders near 1 are indistinguishable from nested-log envelopes
        envelope_class(&window, side).unwrap_or(DecayKind::Algebraic { m: -b_alg })
    } else if let Some(rho) = superexponential_rate(&ts, &ys) {
        DecayKind::Exponential { rho }
    } else if -b_alg > 0.5 {
        envelope_class(&window, side).unwrap_or(DecayKind::Pathological)
    } else if forcing.estimate_limits(side).is_ok() {
        DecayKind::Pathological
    } else {
        DecayKind::Nondecaying
    };
    Ok(DecayClass { side, class, fit })
}

/// Smallest local exponential rate when the local rate keeps increasing,
/// i.e. the decay beats every exponential on the window.
fn superexponential_rate(ts: &[f64], ys: &[f64]) -> Option<f64> {
    let rates: Vec<f64> = ts
        .windows(2)
        .zip(ys.windows(2))
        .map(|(t, y)| -(y[1] - y[0]) / (t[1] - t[0]))
        .collect();
    let increasing = rates.windows(2).all(|w| w[1] >= w[0]);
    (increasing && rates[0] > 0.0 && rates.last()? > &(2.0 * rates[0])).then_some(rates[0])
}

/// Least `m` for which `‖Γ̇‖/|Ȧ(·, m)|` settles over the upper half of the
/// window: either flat within [`FIT_TOL`] or decreasing towards zero.
fn envelope_class(window: &[(f64, f64)], side: Side) -> Option<DecayKind> {
    for m in 0..=M_MAX {
        let env = ReferenceEnvelope::new(m);
        let ratios: Vec<f64> = window
            .iter()
            .filter_map(|&(t, n)| env.rate(side.sign() * t).ok().map(|a| n / a.abs()))
            .collect();
        let upper = &ratios[ratios.len() / 2..];
        if upper.len() < 3 || upper.iter().any(|r| !r.is_finite()) {
            continue;
        }
        let hi = upper.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = upper.iter().cloned().fold(f64::INFINITY, f64::min);
        let flat = hi - lo <= FIT_TOL * hi;
        let vanishing = upper.windows(2).all(|w| w[1] <= w[0])
            && *upper.last().unwrap() <= FIT_TOL * upper[0];
        if flat || vanishing {
            return Some(DecayKind::Envelope { m });
        }
    }
    None
}

/// A recommended transform with the evidence used to accept it.
#[derive(Debug, Clone, Serialize)]
pub struct Recommendation {
    #[serde(skip)]
    pub transform: Transform,
    pub spec: TransformSpec,
    pub classes: Vec<DecayClass>,
    pub rationale: String,
    pub condition_one: Vec<LimitReport>,
    pub condition_two: Vec<LimitReport>,
}

/// Admissible rate/order bound of one side.
enum Bound {
    Exp(f64),
    Alg(f64),
}

fn bound_of(class: &DecayClass) -> Result<Bound, ConditionError> {
    match class.class {
        DecayKind::Exponential { rho } => Ok(Bound::Exp(rho)),
        DecayKind::Algebraic { m } if m > 1.0 => Ok(Bound::Alg(m - 1.0)),
        DecayKind::Algebraic { m } => Err(ConditionError::Unrecommendable(format!(
            "{} side decays algebraically with order {m:.4} <= 1",
            class.side.name()
        ))),
        DecayKind::Envelope { m } => Err(ConditionError::Unrecommendable(format!(
            "{} side decays like the reference envelope with m = {m}; \
             no closed-form transform is constructed for this class",
            class.side.name()
        ))),
        DecayKind::Pathological => Err(ConditionError::Unrecommendable(format!(
            "{} side derivative does not decay although the forcing has a limit",
            class.side.name()
        ))),
        DecayKind::Nondecaying => Err(ConditionError::Unrecommendable(format!(
            "{} side derivative does not decay",
            class.side.name()
        ))),
    }
}

fn candidate(bounds: &[(Side, Bound)], sides: Sides, factor: f64) -> Result<Transform, TransformError> {
    let pick = |b: &Bound| match b {
        Bound::Exp(rho) => factor * rho,
        Bound::Alg(m1) => factor * m1,
    };
    match sides {
        Sides::FutureOnly | Sides::PastOnly => {
            let sidedness = Sidedness::from_sides(sides);
            match &bounds[0].1 {
                b @ Bound::Exp(_) => Transform::exponential(pick(b), sidedness),
                b @ Bound::Alg(_) => Transform::algebraic(pick(b), sidedness),
            }
        }
        Sides::TwoSided => {
            let past = &bounds.iter().find(|b| b.0 == Side::Past).unwrap().1;
            let future = &bounds.iter().find(|b| b.0 == Side::Future).unwrap().1;
            let (am, ap) = (pick(past), pick(future));
            let same = (am - ap).abs() <= FIT_TOL * am.max(ap);
            match (past, future) {
                (Bound::Exp(_), Bound::Exp(_)) if same => {
                    Transform::exponential(am.min(ap), Sidedness::TwoSided)
                }
                (Bound::Exp(_), Bound::Exp(_)) => Transform::exponential_two_rate(am, ap),
                (Bound::Alg(_), Bound::Alg(_)) if same => {
                    Transform::algebraic(am.min(ap), Sidedness::TwoSided)
                }
                (Bound::Alg(_), Bound::Alg(_)) => Transform::algebraic_two_rate(am, ap),
                // exponential decay satisfies condition one for every order
                (Bound::Exp(_), Bound::Alg(_)) => Transform::algebraic_two_rate(1.0, ap),
                (Bound::Alg(_), Bound::Exp(_)) => Transform::algebraic_two_rate(am, 1.0),
            }
        }
    }
}

/// Classify every side of `forcing` and return a transform satisfying both
/// conditions. The safety factor is halved (up to twice) if re-verification
/// of the first candidate fails.
pub fn recommend(forcing: &ForcingProfile) -> Result<Recommendation, ConditionError> {
    let sides = forcing.sides();
    let classes = sides
        .list()
        .iter()
        .map(|&side| classify_decay(forcing, side))
        .collect::<Result<Vec<_>, _>>()?;
    let bounds = classes
        .iter()
        .map(|c| bound_of(c).map(|b| (c.side, b)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut last_failure = String::new();
    for factor in [SAFETY, SAFETY / 2.0, SAFETY / 4.0] {
        let tr = candidate(&bounds, sides, factor)?;
        let mut one = Vec::new();
        let mut two = Vec::new();
        for &side in sides.list() {
            one.push(check_condition_one(forcing, &tr, side)?);
            two.push(check_condition_two(&tr, side)?);
        }
        if one.iter().chain(&two).all(|r| r.converged) {
            let spec = TransformSpec::describe(&tr);
            let rationale = format!(
                "{} with safety factor {factor} of the admissible bound; both conditions converge on every compact side",
                describe_classes(&classes)
            );
            return Ok(Recommendation {
                transform: tr,
                spec,
                classes,
                rationale,
                condition_one: one,
                condition_two: two,
            });
        }
        last_failure = format!("candidate {} failed re-verification", tr.kind().name());
    }
    Err(ConditionError::Unrecommendable(last_failure))
}

fn describe_classes(classes: &[DecayClass]) -> String {
    classes
        .iter()
        .map(|c| match c.class {
            DecayKind::Exponential { rho } => format!("{}: exponential decay, rho = {rho:.6}", c.side.name()),
            DecayKind::Algebraic { m } => format!("{}: algebraic decay, m = {m:.6}", c.side.name()),
            _ => format!("{}: {:?}", c.side.name(), c.class),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{DeclaredLimits, Parameters};

    fn forcing(src: &[&str], sides: Sides) -> ForcingProfile {
        ForcingProfile::parse(src, &Parameters::new(), sides, DeclaredLimits::default()).unwrap()
    }

    #[test]
    fn envelope_values() {
        let e = std::f64::consts::E;
        let env = ReferenceEnvelope::new(2);
        assert!((env.value(e.powf(e)).unwrap() + 1.0).abs() < 1e-12);
        let expected = (-(e + 1.0)).exp();
        assert!((env.rate(e.powf(e)).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(env.value(2.0), Err(ConditionError::OutOfDomain { .. })));
        assert!(env.rate(-100.0).unwrap() < 0.0);
        assert_eq!(ReferenceEnvelope::new(0).threshold(), 0.0);
        assert_eq!(ReferenceEnvelope::new(1).threshold(), 1.0);
        assert!((ReferenceEnvelope::new(3).threshold() - e.powf(e)).abs() < 1e-12);
    }

    #[test]
    fn envelope_log_slope_matches_finite_difference() {
        for m in 0..=3 {
            let env = ReferenceEnvelope::new(m);
            for t in [50.0f64, 1e3, -1e3] {
                let h = 1e-4 * t.abs();
                let fd = ((env.rate(t + h).unwrap().abs()).ln()
                    - (env.rate(t - h).unwrap().abs()).ln())
                    / (2.0 * h);
                let an = env.log_slope(t).unwrap();
                assert!((fd - an).abs() < 1e-7 * an.abs().max(1e-6), "m={m} t={t}");
            }
        }
    }

    #[test]
    fn condition_one_truth_table() {
        let p = forcing(&["tanh(t)"], Sides::TwoSided);
        let r2 = check_condition_one(&p, &Transform::exponential(2.0, Sidedness::TwoSided).unwrap(), Side::Future).unwrap();
        assert!(r2.converged);
        assert!((r2.value[0] - 1.0).abs() < 1e-12);
        let r1 = check_condition_one(&p, &Transform::exponential(1.0, Sidedness::TwoSided).unwrap(), Side::Past).unwrap();
        assert!(r1.converged);
        assert_eq!(r1.value[0], 0.0);
        let r3 = check_condition_one(&p, &Transform::exponential(3.0, Sidedness::TwoSided).unwrap(), Side::Future).unwrap();
        assert!(!r3.converged);
        assert_eq!(r3.verdict, Verdict::Diverges);
    }

    #[test]
    fn condition_two_builtin() {
        let e = Transform::exponential(1.5, Sidedness::TwoSided).unwrap();
        assert_eq!(check_condition_two(&e, Side::Future).unwrap().value, vec![-1.5]);
        let a = Transform::algebraic(1.0, Sidedness::TwoSided).unwrap();
        assert_eq!(check_condition_two(&a, Side::Past).unwrap().value, vec![0.0]);
        let r = Transform::algebraic(1.0, Sidedness::Right).unwrap();
        assert!(matches!(
            check_condition_two(&r, Side::Past),
            Err(ConditionError::SideUnavailable(_))
        ));
    }

    #[test]
    fn classify_tanh_and_radial() {
        let p = forcing(&["tanh(t)"], Sides::TwoSided);
        for side in [Side::Past, Side::Future] {
            match classify_decay(&p, side).unwrap().class {
                DecayKind::Exponential { rho } => assert!((rho - 2.0).abs() < 0.1, "{rho}"),
                other => panic!("{other:?}"),
            }
        }
        let radial = forcing(&["(1-3)/t", "-(2 + 1/(1+t^2))"], Sides::FutureOnly);
        match classify_decay(&radial, Side::Future).unwrap().class {
            DecayKind::Algebraic { m } => assert!((m - 2.0).abs() < 0.1, "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classify_pathological_and_envelope() {
        let p = forcing(&["sin(t^2)/t"], Sides::FutureOnly);
        assert_eq!(classify_decay(&p, Side::Future).unwrap().class, DecayKind::Pathological);
        let env = forcing(&["-1/ln(ln(t))"], Sides::FutureOnly);
        assert_eq!(
            classify_decay(&env, Side::Future).unwrap().class,
            DecayKind::Envelope { m: 2 }
        );
        let lin = forcing(&["t"], Sides::FutureOnly);
        assert_eq!(classify_decay(&lin, Side::Future).unwrap().class, DecayKind::Nondecaying);
    }

    #[test]
    fn recommend_tanh() {
        let p = forcing(&["tanh(t)"], Sides::TwoSided);
        let rec = recommend(&p).unwrap();
        assert_eq!(rec.transform.kind(), crate::transform::TransformKind::ExpTwoSided);
        assert!((rec.transform.alpha() - 1.8).abs() < 0.09);
    }

    #[test]
    fn recommend_two_rate() {
        let p = forcing(&["tanh(t + abs(t)/2)"], Sides::TwoSided);
        let rec = recommend(&p).unwrap();
        assert_eq!(rec.transform.kind(), crate::transform::TransformKind::ExpTwoRate);
        assert!((rec.transform.alpha_minus() - 0.9).abs() < 0.05);
        assert!((rec.transform.alpha_plus() - 2.7).abs() < 0.15);
    }

    #[test]
    fn recommend_refuses_pathological() {
        let p = forcing(&["sin(t^2)/t"], Sides::FutureOnly);
        assert!(matches!(recommend(&p), Err(ConditionError::Unrecommendable(_))));
    }

    fn custom_family(k: f64) -> Transform {
        let h = format!("s*(1 - ln(1 - s^2))^(1/{k})");
        let ls = format!("ln({k}) + ({k} - 1)*ln(abs(t)) - abs(t)^{k}");
        Transform::custom(&h, Some(&ls), Sidedness::TwoSided).unwrap()
    }

    #[test]
    fn speed_log_slope_of_stretched_exponentials() {
        let r1 = check_condition_two(&custom_family(1.0), Side::Future).unwrap();
        assert!(r1.converged);
        assert!((r1.value[0] + 1.0).abs() < 1e-12);
        let at = r1.samples.iter().find(|(t, _)| *t == 2f64.powi(30)).unwrap();
        assert!((at.1[0] + 1.0).abs() < 1e-3);
        let p1 = check_condition_two(&custom_family(1.0), Side::Past).unwrap();
        assert!((p1.value[0] - 1.0).abs() < 1e-12);
        let r05 = check_condition_two(&custom_family(0.5), Side::Future).unwrap();
        assert!(r05.converged);
        assert_eq!(r05.value[0], 0.0);
        let r2 = check_condition_two(&custom_family(2.0), Side::Future).unwrap();
        assert_eq!(r2.verdict, Verdict::Diverges);
    }

    #[test]
    fn superexponential_forcing_is_exponential_class() {
        let p = forcing(&["tanh(t^3)"], Sides::FutureOnly);
        let c = classify_decay(&p, Side::Future).unwrap();
        assert!(matches!(c.class, DecayKind::Exponential { .. }), "{c:?}");
    }

    #[test]
    fn assess_patterns() {
        let mk = |vals: &[f64]| -> Vec<(f64, Vec<f64>)> {
            vals.iter().enumerate().map(|(i, &v)| (i as f64, vec![v])).collect()
        };
        assert_eq!(assess(&mk(&[1.0, 2.0, 4.0, 8.0])).verdict, Verdict::Diverges);
        assert_eq!(assess(&mk(&[1.0, -1.0, 1.0, -1.0])).verdict, Verdict::Oscillates);
        assert_eq!(assess(&mk(&[0.5, 0.3, 0.3, 0.3])).verdict, Verdict::Finite);
        assert_eq!(assess(&mk(&[1.0, 1e13])).verdict, Verdict::Diverges);
    }
}
