//! Pullback traces and critical rates of rate-induced tipping.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::extended::{assemble, CompactifiedSystem, ExtendedError};
use crate::invariant::{
    embed, omega_classify, refine, settle, unstable_branch, EmbeddedSet, InvariantError, Tolerances,
};
use crate::odeint::{Controls, Termination, Trajectory};
use crate::problem::{ForcingProfile, Side, VectorFieldDef};
use crate::transform::{Transform, TransformError, TransformKind, TransformSpec};

pub const BISECT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConnectError {
    #[error("both ends of [{r_lo}, {r_hi}] classify as {verdict:?}")]
    NoSignChange { r_lo: f64, r_hi: f64, verdict: Verdict },
    #[error("probe at r = {r} is undecided")]
    UndecidedProbe { r: f64 },
    #[error("invalid rate problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
    #[error(transparent)]
    Extended(#[from] ExtendedError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Tracked,
    Tipped,
    Undecided,
}

/// Result of tracing the branch out of a past embedding.
#[derive(Debug, Clone)]
pub struct PullbackTrace {
    pub branch: Trajectory,
    /// Final state after settling on the frozen future subspace.
    pub terminus: Vec<f64>,
    pub termination: Termination,
    /// Index into the future embeddings, `None` if none was reached.
    pub omega: Option<usize>,
}

pub fn pullback_trace(
    sys: &CompactifiedSystem,
    past: &EmbeddedSet,
    futures: &[EmbeddedSet],
    delta: f64,
    controls: &Controls,
    tol: &Tolerances,
) -> Result<PullbackTrace, ConnectError> {
    let branch = unstable_branch(sys, past, delta, controls)?;
    let settled = settle(sys, &branch, tol.settle_time, controls)?;
    let omega = omega_classify(&settled, futures, tol.conv_tol)?;
    Ok(PullbackTrace {
        terminus: settled.final_state().to_vec(),
        termination: settled.termination,
        omega,
        branch,
    })
}

/// A family `ẋ = f(x, Γ(r t))` with a designated past sink and future target.
#[derive(Debug, Clone)]
pub struct RateProblem {
    pub field: VectorFieldDef,
    pub forcing: ForcingProfile,
    /// Transform at `r = 1`; exponential rates scale with `r`.
    pub transform: Transform,
    /// Guess of the past sink the trace starts from.
    pub past: Vec<f64>,
    /// Guess of the tracked future attractor.
    pub target: Vec<f64>,
    pub delta: f64,
    pub controls: Controls,
    pub tol: Tolerances,
}

/// Everything built for one value of `r`.
pub struct RateInstance {
    pub r: f64,
    pub system: CompactifiedSystem,
    pub past: EmbeddedSet,
    pub target: EmbeddedSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub r: f64,
    pub verdict: Verdict,
    pub termination: Termination,
    pub distance: f64,
}

impl RateProblem {
    pub fn transform_at(&self, forcing_r: &ForcingProfile, r: f64) -> Result<Transform, TransformError> {
        match self.transform.kind() {
            TransformKind::GammaBased => TransformSpec::describe(&self.transform).build(forcing_r),
            _ => Ok(self.transform.rate_scaled(r)),
        }
    }

    pub fn instance(&self, r: f64) -> Result<RateInstance, ConnectError> {
        if !(r.is_finite() && r > 0.0) {
            return Err(ConnectError::Invalid(format!("rate must be positive, got {r}")));
        }
        let forcing = self.forcing.with_time_scale(r);
        let tr = self.transform_at(&forcing, r)?;
        let system = assemble(&self.field, &forcing, &tr)?;
        let ls_p = system
            .limit_system(Side::Past)
            .ok_or_else(|| ConnectError::Invalid("the past end is not compactified".into()))?;
        let ls_f = system
            .limit_system(Side::Future)
            .ok_or_else(|| ConnectError::Invalid("the future end is not compactified".into()))?;
        let past = embed(&refine(&ls_p, &self.past, &self.tol)?, &system, Side::Past, &self.tol)?;
        let target = embed(&refine(&ls_f, &self.target, &self.tol)?, &system, Side::Future, &self.tol)?;
        Ok(RateInstance {
            r,
            system,
            past,
            target,
        })
    }

    /// Trace at rate `r` and classify against the target.
    pub fn probe(&self, r: f64) -> Result<(Probe, PullbackTrace), ConnectError> {
        let inst = self.instance(r)?;
        let trace = pullback_trace(
            &inst.system,
            &inst.past,
            std::slice::from_ref(&inst.target),
            self.delta,
            &self.controls,
            &self.tol,
        )?;
        let n = self.field.state_dim();
        let y = &trace.terminus;
        let dx = inst.target.base.x.iter().zip(&y[..n]).fold(0.0f64, |a, (p, q)| a.hypot(p - q));
        let at_end = (y[n] - inst.target.s_star).abs() <= self.tol.conv_tol;
        let verdict = if trace.omega.is_some() {
            Verdict::Tracked
        } else if trace.termination == Termination::Escaped || (at_end && dx > self.tol.divergence_radius) {
            Verdict::Tipped
        } else {
            Verdict::Undecided
        };
        let distance = if trace.termination == Termination::Escaped { f64::INFINITY } else { dx };
        Ok((
            Probe {
                r,
                verdict,
                termination: trace.termination,
                distance,
            },
            trace,
        ))
    }

    fn verdict(&self, r: f64, log: &mut Vec<Probe>) -> Result<Verdict, ConnectError> {
        let (p, _) = self.probe(r)?;
        log.push(p.clone());
        if p.verdict == Verdict::Undecided {
            return Err(ConnectError::UndecidedProbe { r });
        }
        Ok(p.verdict)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalRate {
    pub r_star: f64,
    pub bracket: (f64, f64),
    pub probes: Vec<Probe>,
    pub warnings: Vec<String>,
}

fn non_monotone(probes: &[Probe]) -> Option<String> {
    let mut sorted: Vec<&Probe> = probes.iter().collect();
    sorted.sort_by(|a, b| a.r.total_cmp(&b.r));
    let changes = sorted.windows(2).filter(|w| w[0].verdict != w[1].verdict).count();
    (changes > 1).then(|| format!("NonMonotoneFamily: probe verdicts change {changes} times along r"))
}

fn check_range(r_lo: f64, r_hi: f64, tol: f64) -> Result<(), ConnectError> {
    if !(r_lo > 0.0 && r_hi.is_finite() && r_lo <= r_hi) {
        return Err(ConnectError::Invalid(format!("need 0 < r_lo <= r_hi, got [{r_lo}, {r_hi}]")));
    }
    if !(tol > 0.0) {
        return Err(ConnectError::Invalid("bisection tolerance must be positive".into()));
    }
    Ok(())
}

/// Bisection on `r` until the bracket is narrower than `rel_tol` times its midpoint.
pub fn critical_rate(rp: &RateProblem, r_lo: f64, r_hi: f64, rel_tol: f64) -> Result<CriticalRate, ConnectError> {
    check_range(r_lo, r_hi, rel_tol)?;
    if r_lo == r_hi {
        return Ok(CriticalRate {
            r_star: r_lo,
            bracket: (r_lo, r_hi),
            probes: Vec::new(),
            warnings: Vec::new(),
        });
    }
    let mut probes = Vec::new();
    let v_lo = rp.verdict(r_lo, &mut probes)?;
    let v_hi = rp.verdict(r_hi, &mut probes)?;
    if v_lo == v_hi {
        return Err(ConnectError::NoSignChange {
            r_lo,
            r_hi,
            verdict: v_lo,
        });
    }
    let (mut lo, mut hi) = (r_lo, r_hi);
    while hi - lo >= rel_tol * 0.5 * (lo + hi) {
        let mid = 0.5 * (lo + hi);
        if rp.verdict(mid, &mut probes)? == v_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let warnings = non_monotone(&probes).into_iter().collect();
    Ok(CriticalRate {
        r_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        probes,
        warnings,
    })
}

/// Bracket refinement probing `batch` interior points concurrently per round.
pub fn critical_rate_batch(
    rp: &RateProblem,
    r_lo: f64,
    r_hi: f64,
    rel_tol: f64,
    batch: usize,
) -> Result<CriticalRate, ConnectError> {
    check_range(r_lo, r_hi, rel_tol)?;
    if batch == 0 {
        return Err(ConnectError::Invalid("batch must be at least 1".into()));
    }
    if r_lo == r_hi {
        return critical_rate(rp, r_lo, r_hi, rel_tol);
    }
    let mut probes = Vec::new();
    let v_lo = rp.verdict(r_lo, &mut probes)?;
    let v_hi = rp.verdict(r_hi, &mut probes)?;
    if v_lo == v_hi {
        return Err(ConnectError::NoSignChange {
            r_lo,
            r_hi,
            verdict: v_lo,
        });
    }
    let (mut lo, mut hi) = (r_lo, r_hi);
    while hi - lo >= rel_tol * 0.5 * (lo + hi) {
        let pts: Vec<f64> = (1..=batch).map(|k| lo + (hi - lo) * k as f64 / (batch + 1) as f64).collect();
        let round: Vec<Result<(Probe, PullbackTrace), ConnectError>> = pts.par_iter().map(|&r| rp.probe(r)).collect();
        let mut verdicts = Vec::with_capacity(batch);
        for res in round {
            let (p, _) = res?;
            probes.push(p.clone());
            if p.verdict == Verdict::Undecided {
                return Err(ConnectError::UndecidedProbe { r: p.r });
            }
            verdicts.push(p.verdict);
        }
        // first interior point whose verdict differs from the low end
        match verdicts.iter().position(|v| *v != v_lo) {
            Some(0) => hi = pts[0],
            Some(k) => {
                lo = pts[k - 1];
                hi = pts[k];
            }
            None => lo = pts[batch - 1],
        }
    }
    let warnings = non_monotone(&probes).into_iter().collect();
    Ok(CriticalRate {
        r_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        probes,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{DeclaredLimits, Parameters, Sides};
    use crate::transform::Sidedness;

    fn problem(field: &str, forcing: &str, past: f64, target: f64) -> RateProblem {
        let params = Parameters::new();
        RateProblem {
            field: VectorFieldDef::parse(&[field], 1, &params).unwrap(),
            forcing: ForcingProfile::parse(&[forcing], &params, Sides::TwoSided, DeclaredLimits::default()).unwrap(),
            transform: Transform::exponential(1.0, Sidedness::TwoSided).unwrap(),
            past: vec![past],
            target: vec![target],
            delta: 1e-6,
            controls: Controls::default(),
            tol: Tolerances::default(),
        }
    }

    fn quadratic() -> RateProblem {
        problem("(x1 + Gamma1)^2 - 1", "1.5*(tanh(t/2) + 1)", -1.0, -4.0)
    }

    #[test]
    fn quadratic_tracks_slowly_and_tips_fast() {
        let rp = quadratic();
        assert_eq!(rp.probe(0.1).unwrap().0.verdict, Verdict::Tracked);
        let (fast, trace) = rp.probe(10.0).unwrap();
        assert_eq!(fast.verdict, Verdict::Tipped);
        assert_eq!(trace.termination, Termination::Escaped);
        assert!(trace.omega.is_none());
    }

    #[test]
    fn bisection_brackets_a_single_boundary() {
        let rp = quadratic();
        let cr = critical_rate(&rp, 0.1, 10.0, 1e-4).unwrap();
        assert!(cr.bracket.1 - cr.bracket.0 < 1e-4 * cr.r_star);
        assert!(cr.warnings.is_empty());
        assert!(cr.r_star > 0.1 && cr.r_star < 10.0);
        let batch = critical_rate_batch(&rp, 0.1, 10.0, 1e-4, 4).unwrap();
        assert!((batch.r_star - cr.r_star).abs() < 2e-4 * cr.r_star);
    }

    #[test]
    fn linear_family_never_tips() {
        let rp = problem("-x1 + Gamma1", "tanh(t)", -1.0, 1.0);
        assert!(matches!(
            critical_rate(&rp, 0.1, 10.0, 1e-4),
            Err(ConnectError::NoSignChange { verdict: Verdict::Tracked, .. })
        ));
    }

    #[test]
    fn degenerate_bracket_returns_at_once() {
        let cr = critical_rate(&quadratic(), 2.0, 2.0, 1e-4).unwrap();
        assert_eq!(cr.bracket, (2.0, 2.0));
        assert!(cr.probes.is_empty());
        assert!(critical_rate(&quadratic(), 0.0, 2.0, 1e-4).is_err());
    }
}
