//! Equilibria of the limit systems, their embeddings at the compact ends,
//! one-dimensional branch tracing and stable-set membership tests.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::EvalError;
use crate::extended::{CompactifiedSystem, ExtendedError};
use crate::odeint::{integrate, integrate_system, Controls, OdeError, Termination, Trajectory};
use crate::problem::{LimitSystem, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub newton_tol: f64,
    /// Largest residual of an accepted equilibrium.
    pub accept_residual: f64,
    pub dedup_tol: f64,
    pub eig_zero_tol: f64,
    pub delta: f64,
    pub conv_tol: f64,
    pub divergence_radius: f64,
    /// Time spent on the frozen end subspace before a final verdict.
    pub settle_time: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            accept_residual: 1e-10,
            dedup_tol: 1e-6,
            eig_zero_tol: 1e-8,
            delta: 1e-6,
            conv_tol: 1e-5,
            divergence_radius: 1.0,
            settle_time: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InvariantError {
    #[error("extra exponent {l_s} resonates with base eigenvalue {re}{im:+}i")]
    Resonance { l_s: f64, re: f64, im: f64 },
    #[error("seed left the escape radius immediately; reduce the offset")]
    SeedEscape,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("final state is within tolerance of sets {0} and {1}")]
    Ambiguous(usize, usize),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Extended(#[from] ExtendedError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumType {
    Sink,
    Source,
    Saddle,
    Nonhyperbolic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    /// Eigenvalues as `[re, im]`, sorted by real then imaginary part.
    pub spectrum: Vec<[f64; 2]>,
    #[serde(rename = "type")]
    pub kind: EquilibriumType,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedOutcome {
    Converged,
    Singular,
    NoConvergence,
    Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedDiagnostic {
    pub seed: Vec<f64>,
    pub outcome: SeedOutcome,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSearch {
    pub equilibria: Vec<Equilibrium>,
    pub seeds: Vec<SeedDiagnostic>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.hypot(*x))
}

fn spectrum(j: &DMatrix<f64>) -> Vec<[f64; 2]> {
    let mut ev: Vec<[f64; 2]> = j
        .complex_eigenvalues()
        .iter()
        .map(|c| [c.re, c.im])
        .collect();
    ev.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    ev
}

fn classify(spec: &[[f64; 2]], tol: f64) -> EquilibriumType {
    if spec.iter().any(|e| e[0].abs() <= tol) {
        EquilibriumType::Nonhyperbolic
    } else if spec.iter().all(|e| e[0] < 0.0) {
        EquilibriumType::Sink
    } else if spec.iter().all(|e| e[0] > 0.0) {
        EquilibriumType::Source
    } else {
        EquilibriumType::Saddle
    }
}

/// Damped Newton iteration from one seed.
fn newton(ls: &LimitSystem, seed: &[f64], tol: &Tolerances) -> (Vec<f64>, SeedOutcome, f64) {
    let mut x = seed.to_vec();
    let Ok(mut f) = ls.eval(&x) else {
        return (x, SeedOutcome::Domain, f64::NAN);
    };
    let mut r = norm(&f);
    let mut polish = 0;
    for _ in 0..100 {
        // two extra steps past the tolerance to reach rounding level
        if r == 0.0 || (r < tol.newton_tol && polish == 2) {
            break;
        }
        if r < tol.newton_tol {
            polish += 1;
        }
        let Ok(j) = ls.jacobian(&x) else {
            return (x, SeedOutcome::Domain, r);
        };
        let Some(dx) = j.lu().solve(&DVector::from_column_slice(&f)) else {
            return (x, SeedOutcome::Singular, r);
        };
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a - lambda * d).collect();
            if let Ok(ft) = ls.eval(&trial) {
                let rt = norm(&ft);
                if rt.is_finite() && rt < r {
                    x = trial;
                    f = ft;
                    r = rt;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let outcome = if r < tol.accept_residual {
        SeedOutcome::Converged
    } else {
        SeedOutcome::NoConvergence
    };
    (x, outcome, r)
}

/// Newton from every node of a `grid^n` lattice over `bounds`.
pub fn find_equilibria(
    ls: &LimitSystem,
    bounds: &[(f64, f64)],
    grid: usize,
    tol: &Tolerances,
) -> Result<EquilibriumSearch, InvariantError> {
    let n = ls.dim();
    if bounds.len() != n || grid < 2 || bounds.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
        return Err(InvariantError::Invalid(format!(
            "need {n} finite intervals and grid >= 2"
        )));
    }
    let total = grid.checked_pow(n as u32).ok_or_else(|| InvariantError::Invalid("grid too large".into()))?;
    let seeds: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|axis| {
                    let i = idx % grid;
                    idx /= grid;
                    let (a, b) = bounds[axis];
                    a + (b - a) * i as f64 / (grid - 1) as f64
                })
                .collect()
        })
        .collect();
    let results: Vec<(Vec<f64>, SeedOutcome, f64)> =
        seeds.par_iter().map(|s| newton(ls, s, tol)).collect();
    let mut equilibria: Vec<Equilibrium> = Vec::new();
    let mut diags = Vec::with_capacity(total);
    for (seed, (x, outcome, residual)) in seeds.into_iter().zip(results) {
        diags.push(SeedDiagnostic { seed, outcome, residual });
        if outcome != SeedOutcome::Converged {
            continue;
        }
        let dup = equilibria.iter().any(|e| {
            e.x.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= tol.dedup_tol
        });
        if dup {
            continue;
        }
        let spec = spectrum(&ls.jacobian(&x)?);
        let kind = classify(&spec, tol.eig_zero_tol);
        equilibria.push(Equilibrium {
            x,
            spectrum: spec,
            kind,
            residual,
        });
    }
    Ok(EquilibriumSearch {
        equilibria,
        seeds: diags,
    })
}

/// Newton from a single guess; fails unless the residual is accepted.
pub fn refine(ls: &LimitSystem, guess: &[f64], tol: &Tolerances) -> Result<Equilibrium, InvariantError> {
    if guess.len() != ls.dim() {
        return Err(InvariantError::Invalid(format!("guess needs {} components", ls.dim())));
    }
    let (x, outcome, r) = newton(ls, guess, tol);
    if outcome != SeedOutcome::Converged {
        return Err(InvariantError::Invalid(format!(
            "no equilibrium near {guess:?} on the {} side (residual {r:e})",
            ls.side().name()
        )));
    }
    equilibrium_at(ls, &x, tol)
}

/// Classify a known equilibrium of a limit system.
pub fn equilibrium_at(ls: &LimitSystem, x: &[f64], tol: &Tolerances) -> Result<Equilibrium, InvariantError> {
    let residual = norm(&ls.eval(x)?);
    let spec = spectrum(&ls.jacobian(x)?);
    Ok(Equilibrium {
        x: x.to_vec(),
        kind: classify(&spec, tol.eig_zero_tol),
        spectrum: spec,
        residual,
    })
}

/// An equilibrium of a limit system viewed at `s = ±1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddedSet {
    pub base: Equilibrium,
    pub side: Side,
    pub s_star: f64,
    pub l_s: f64,
    pub extra_eigenvector: Vec<f64>,
    pub full_spectrum: Vec<[f64; 2]>,
}

impl EmbeddedSet {
    pub fn point(&self) -> Vec<f64> {
        let mut p = self.base.x.clone();
        p.push(self.s_star);
        p
    }

    /// True when the extra eigenvector is normal to the end subspace.
    pub fn is_normal(&self) -> bool {
        self.extra_eigenvector[..self.base.x.len()].iter().all(|v| *v == 0.0)
    }
}

pub fn embed(
    eq: &Equilibrium,
    sys: &CompactifiedSystem,
    side: Side,
    tol: &Tolerances,
) -> Result<EmbeddedSet, InvariantError> {
    let l_s = sys.s_lyapunov(side).ok_or_else(|| {
        InvariantError::Invalid(format!("the {} side is not compactified", side.name()))
    })?;
    let n = eq.x.len();
    let s_star = side.endpoint();
    let col = sys.f_s_column(&eq.x, s_star)?;
    let mut v = vec![0.0; n + 1];
    v[n] = 1.0;
    if col.iter().any(|c| *c != 0.0) {
        if let Some(e) = eq
            .spectrum
            .iter()
            .find(|e| (e[0] - l_s).hypot(e[1]) <= tol.eig_zero_tol)
        {
            return Err(InvariantError::Resonance {
                l_s,
                re: e[0],
                im: e[1],
            });
        }
        let ls = sys.limit_system(side).expect("compact side has a limit system");
        let a = ls.jacobian(&eq.x)? - DMatrix::identity(n, n) * l_s;
        let rhs = -DVector::from_vec(col);
        let vx = a.lu().solve(&rhs).ok_or(InvariantError::Resonance {
            l_s,
            re: l_s,
            im: 0.0,
        })?;
        v[..n].copy_from_slice(vx.as_slice());
    }
    let mut full = eq.spectrum.clone();
    full.push([l_s, 0.0]);
    full.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    Ok(EmbeddedSet {
        base: eq.clone(),
        side,
        s_star,
        l_s,
        extra_eigenvector: v,
        full_spectrum: full,
    })
}

/// Trace the one-dimensional branch leaving a past embedding along its
/// extra eigenvector. This is the numerical pullback-attractor trace.
pub fn unstable_branch(
    sys: &CompactifiedSystem,
    es: &EmbeddedSet,
    delta: f64,
    controls: &Controls,
) -> Result<Trajectory, InvariantError> {
    if es.side != Side::Past {
        return Err(InvariantError::Invalid("branches start from a past embedding".into()));
    }
    match es.base.kind {
        EquilibriumType::Sink => {}
        EquilibriumType::Saddle if es.l_s >= 0.0 => {}
        k => {
            return Err(InvariantError::Unsupported(format!(
                "branch from a {k:?} past equilibrium is not one-dimensional"
            )))
        }
    }
    let v = &es.extra_eigenvector;
    let scale = delta / norm(v);
    let seed: Vec<f64> = es.point().iter().zip(v).map(|(p, d)| p + scale * d).collect();
    let n = es.base.x.len();
    if norm(&seed[..n]) >= controls.escape_radius {
        return Err(InvariantError::SeedEscape);
    }
    let tr = integrate(sys, &seed[..n], seed[n], controls)?;
    if tr.termination == Termination::Escaped && tr.stats.steps <= 1 {
        return Err(InvariantError::SeedEscape);
    }
    Ok(tr)
}

/// Continue a run that reached the upper clock end on the frozen end
/// subspace for `duration`, appending the continuation.
pub fn settle(
    sys: &CompactifiedSystem,
    tr: &Trajectory,
    duration: f64,
    controls: &Controls,
) -> Result<Trajectory, InvariantError> {
    if tr.termination != Termination::SReachedEnd || duration <= 0.0 {
        return Ok(tr.clone());
    }
    let n = sys.dim();
    let mut y = tr.final_state().to_vec();
    y[n] = sys.s_domain().1;
    let c = Controls {
        t_max: duration,
        dt_out: controls.dt_out,
        ..*controls
    };
    let tail = integrate_system(sys, tr.t_end(), &y, &c)?;
    let mut out = tr.clone();
    out.nodes.extend(tail.nodes.into_iter().skip(1));
    out.samples.extend(tail.samples.into_iter().skip(1));
    out.termination = tail.termination;
    out.stats.steps += tail.stats.steps;
    out.stats.rejects += tail.stats.rejects;
    out.stats.evals += tail.stats.evals;
    Ok(out)
}

fn distance_to(es: &EmbeddedSet, y: &[f64]) -> f64 {
    let n = es.base.x.len();
    let dx = es.base.x.iter().zip(&y[..n]).fold(0.0f64, |a, (p, q)| a.hypot(p - q));
    dx.max((y[n] - es.s_star).abs())
}

/// Index of the embedded set whose point is within `tol` of the final state.
pub fn omega_classify(
    tr: &Trajectory,
    sets: &[EmbeddedSet],
    tol: f64,
) -> Result<Option<usize>, InvariantError> {
    if tr.termination == Termination::Escaped {
        return Ok(None);
    }
    let y = tr.final_state();
    let hits: Vec<usize> = sets
        .iter()
        .enumerate()
        .filter(|(_, es)| distance_to(es, y) <= tol)
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [] => Ok(None),
        [i] => Ok(Some(*i)),
        [a, b, ..] => Err(InvariantError::Ambiguous(*a, *b)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Membership {
    Converges,
    Escapes,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    pub verdict: Membership,
    pub final_distance: f64,
    pub termination: Termination,
    pub conv_tol: f64,
    pub divergence_radius: f64,
    pub escape_radius: f64,
}

/// Does the forward orbit of `point` (`(x, s)`) converge to a future embedding?
pub fn stable_membership(
    sys: &CompactifiedSystem,
    es: &EmbeddedSet,
    point: &[f64],
    controls: &Controls,
    tol: &Tolerances,
) -> Result<MembershipReport, InvariantError> {
    if es.side != Side::Future {
        return Err(InvariantError::Invalid("membership is tested at a future embedding".into()));
    }
    let n = es.base.x.len();
    let s0 = sys.clamp_s(point[n])?;
    let tr = integrate(sys, &point[..n], s0, controls)?;
    let tr = settle(sys, &tr, tol.settle_time, controls)?;
    let y = tr.final_state();
    let d = distance_to(es, y);
    let near_end = (y[n] - es.s_star).abs() <= tol.conv_tol;
    let verdict = if tr.termination == Termination::Escaped {
        Membership::Escapes
    } else if d <= tol.conv_tol {
        Membership::Converges
    } else if near_end && d > tol.divergence_radius {
        Membership::Escapes
    } else {
        Membership::Undecided
    };
    Ok(MembershipReport {
        verdict,
        final_distance: d,
        termination: tr.termination,
        conv_tol: tol.conv_tol,
        divergence_radius: tol.divergence_radius,
        escape_radius: controls.escape_radius,
    })
}
