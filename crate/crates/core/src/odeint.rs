//! Adaptive Dormand–Prince 5(4) integration with termination events and
//! dense output from the pair's fourth-order continuous extension.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extended::CompactifiedSystem;
use crate::problem::{ForcingProfile, Side, VectorFieldDef};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("non-finite or out-of-domain state near t = {t}")]
    NonFiniteState { t: f64, y: Vec<f64> },
    #[error("invalid integration request: {0}")]
    Invalid(String),
}

/// A first-order system `y' = F(t, y)`.
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;
    /// `None` when `F` cannot be evaluated at `(t, y)`.
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Option<()>;
    /// Number of leading components that form the physical state `x`.
    fn state_dim(&self) -> usize {
        self.dim()
    }
    /// Index of the compactified clock `s`, if any.
    fn s_index(&self) -> Option<usize> {
        None
    }
    /// Upper end of the clock domain.
    fn s_end(&self) -> f64 {
        1.0
    }
    /// Project a freshly computed state back into the domain; `false` rejects it.
    fn project(&self, _y: &mut [f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Controls {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Duration of internal time to integrate for.
    pub t_max: f64,
    pub max_steps: usize,
    pub s_end_eps: f64,
    pub escape_radius: f64,
    /// Dense sampling interval; accepted steps are recorded when absent.
    pub dt_out: Option<f64>,
    pub initial_step: Option<f64>,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            t_max: 1e3,
            max_steps: 1_000_000,
            s_end_eps: 1e-9,
            escape_radius: 1e3,
            dt_out: None,
            initial_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Horizon,
    SReachedEnd,
    Escaped,
    Stalled,
    StepLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Stats {
    pub steps: usize,
    pub rejects: usize,
    pub evals: usize,
}

/// Accepted step endpoint. `dense` holds the extra coefficient of the
/// continuous extension over the step ending here (empty for the first node).
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub t: f64,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub dense: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub nodes: Vec<Node>,
    pub samples: Vec<(f64, Vec<f64>)>,
    pub termination: Termination,
    pub stats: Stats,
    state_dim: usize,
    s_index: Option<usize>,
}

fn interpolate(a: &Node, b: &Node, t: f64, out: &mut [f64]) {
    let h = b.t - a.t;
    if h == 0.0 {
        out.copy_from_slice(&b.y);
        return;
    }
    let th = (t - a.t) / h;
    let th1 = 1.0 - th;
    if b.dense.is_empty() {
        // cubic Hermite
        let h00 = (1.0 + 2.0 * th) * th1 * th1;
        let h10 = th * th1 * th1;
        let h01 = th * th * (3.0 - 2.0 * th);
        let h11 = th * th * (th - 1.0);
        for i in 0..out.len() {
            out[i] = h00 * a.y[i] + h10 * h * a.dy[i] + h01 * b.y[i] + h11 * h * b.dy[i];
        }
        return;
    }
    for i in 0..out.len() {
        let diff = b.y[i] - a.y[i];
        let bspl = h * a.dy[i] - diff;
        let r4 = diff - h * b.dy[i] - bspl;
        out[i] = a.y[i] + th * (diff + th1 * (bspl + th * (r4 + th1 * b.dense[i])));
    }
}

impl Trajectory {
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn s_index(&self) -> Option<usize> {
        self.s_index
    }

    pub fn t_start(&self) -> f64 {
        self.nodes[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.nodes.last().unwrap().t
    }

    pub fn final_state(&self) -> &[f64] {
        &self.nodes.last().unwrap().y
    }

    pub fn final_x(&self) -> &[f64] {
        &self.final_state()[..self.state_dim]
    }

    pub fn final_s(&self) -> Option<f64> {
        self.s_index.map(|i| self.final_state()[i])
    }

    /// Interpolated state at time `t` (clamped to the covered span).
    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut out = vec![0.0; self.nodes[0].y.len()];
        if n == 1 || t <= self.nodes[0].t {
            out.copy_from_slice(&self.nodes[0].y);
            return out;
        }
        if t >= self.nodes[n - 1].t {
            out.copy_from_slice(&self.nodes[n - 1].y);
            return out;
        }
        let k = self.nodes.partition_point(|nd| nd.t <= t);
        interpolate(&self.nodes[k - 1], &self.nodes[k], t, &mut out);
        out
    }

    /// State where the clock first reaches `s` (compactified runs only).
    pub fn at_s(&self, s: f64) -> Option<Vec<f64>> {
        let si = self.s_index?;
        let n = self.nodes.len();
        if s < self.nodes[0].y[si] || s > self.nodes[n - 1].y[si] {
            return None;
        }
        let k = self.nodes.partition_point(|nd| nd.y[si] < s);
        if k == 0 {
            return Some(self.nodes[0].y.clone());
        }
        let (a, b) = (&self.nodes[k - 1], &self.nodes[k]);
        let mut buf = vec![0.0; a.y.len()];
        let (mut lo, mut hi) = (a.t, b.t);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            interpolate(a, b, mid, &mut buf);
            if buf[si] < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        interpolate(a, b, hi, &mut buf);
        Some(buf)
    }

    /// `(t, d)` with `d = 1 ∓ s` the distance to the compact end of `side`.
    pub fn distance_series(&self, side: Side) -> Vec<(f64, f64)> {
        let Some(si) = self.s_index else {
            return Vec::new();
        };
        self.samples
            .iter()
            .map(|(t, y)| (*t, side.endpoint().abs() - side.sign() * y[si]))
            .collect()
    }

    /// CSV with header `t,s,x1..xn`; 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string(), "s".to_string()];
        header.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, y) in &self.samples {
            let mut row = vec![fmt17(*t)];
            row.push(self.s_index.map(|i| fmt17(y[i])).unwrap_or_default());
            row.extend(y[..self.state_dim].iter().map(|v| fmt17(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Shortest round-trippable rendering (at most 17 significant digits).
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{:.16e}", v)
            .parse::<f64>()
            .map(|p| format!("{p:?}"))
            .unwrap_or_else(|_| v.to_string())
    } else {
        v.to_string()
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn norm_x(y: &[f64], n: usize) -> f64 {
    y[..n].iter().fold(0.0f64, |a, v| a.hypot(*v))
}

fn scaled_rms(v: &[f64], y: &[f64], c: &Controls) -> f64 {
    let m = v.len() as f64;
    (v.iter()
        .zip(y)
        .map(|(e, yi)| {
            let sc = c.abs_tol + c.rel_tol * yi.abs();
            (e / sc) * (e / sc)
        })
        .sum::<f64>()
        / m)
        .sqrt()
}

fn initial_step<S: OdeSystem + ?Sized>(sys: &S, t0: f64, y0: &[f64], f0: &[f64], c: &Controls) -> f64 {
    let d0 = scaled_rms(y0, y0, c);
    let d1 = scaled_rms(f0, y0, c);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    if sys.eval(t0 + h0, &y1, &mut f1).is_none() {
        return h0;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_rms(&diff, y0, c) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

/// Integrate `sys` from `(t0, y0)` for `controls.t_max` units of time.
pub fn integrate_system<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    c: &Controls,
) -> Result<Trajectory, OdeError> {
    let dim = sys.dim();
    if y0.len() != dim {
        return Err(OdeError::Invalid(format!(
            "initial state has {} components, system has {dim}",
            y0.len()
        )));
    }
    if !(c.t_max > 0.0) || !(c.abs_tol > 0.0) || !(c.rel_tol >= 0.0) {
        return Err(OdeError::Invalid("tolerances and t_max must be positive".into()));
    }
    let n = sys.state_dim();
    let s_index = sys.s_index();
    let s_end = sys.s_end();
    let mut y = y0.to_vec();
    if !sys.project(&mut y) {
        return Err(OdeError::NonFiniteState { t: t0, y });
    }
    let mut f = vec![0.0; dim];
    let mut stats = Stats::default();
    if sys.eval(t0, &y, &mut f).is_none() || f.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFiniteState { t: t0, y });
    }
    stats.evals += 1;
    let s_event = s_index.filter(|&i| y[i] < s_end - c.s_end_eps);
    let t_stop = t0 + c.t_max;
    let mut t = t0;
    let mut h = c
        .initial_step
        .unwrap_or_else(|| initial_step(sys, t0, &y, &f, c))
        .min(c.t_max);
    let mut nodes = vec![Node {
        t,
        y: y.clone(),
        dy: f.clone(),
        dense: Vec::new(),
    }];
    let mut k = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut last_fail = false;

    let termination = loop {
        if norm_x(&y, n) >= c.escape_radius {
            break Termination::Escaped;
        }
        if let Some(si) = s_event {
            if y[si] >= s_end - c.s_end_eps {
                break Termination::SReachedEnd;
            }
        }
        if t >= t_stop {
            break Termination::Horizon;
        }
        if stats.steps >= c.max_steps {
            break Termination::StepLimit;
        }
        let h_min = 1e-14 * t.abs().max(1.0);
        if h < h_min {
            if last_fail {
                return Err(OdeError::NonFiniteState { t, y });
            }
            break Termination::Stalled;
        }
        let h_step = h.min(t_stop - t);

        k[0].copy_from_slice(&f);
        let mut ok = true;
        for st in 1..7 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(st) {
                    acc += A[st][j] * kj[i];
                }
                stage[i] = y[i] + h_step * acc;
            }
            if !sys.project(&mut stage) {
                ok = false;
                break;
            }
            stats.evals += 1;
            let (head, tail) = k.split_at_mut(st);
            let _ = head;
            if sys.eval(t + C[st] * h_step, &stage, &mut tail[0]).is_none()
                || tail[0].iter().any(|v| !v.is_finite())
            {
                ok = false;
                break;
            }
            if st == 6 {
                y_new.copy_from_slice(&stage);
            }
        }
        if !ok {
            stats.rejects += 1;
            last_fail = true;
            h = h_step * 0.25;
            continue;
        }
        for i in 0..dim {
            err[i] = h_step * E.iter().zip(&k).map(|(e, ki)| e * ki[i]).sum::<f64>();
        }
        let m = dim as f64;
        let en = (err
            .iter()
            .zip(y.iter().zip(&y_new))
            .map(|(e, (a, b))| {
                let sc = c.abs_tol + c.rel_tol * a.abs().max(b.abs());
                (e / sc) * (e / sc)
            })
            .sum::<f64>()
            / m)
            .sqrt();
        if en <= 1.0 {
            t = if h_step == t_stop - t { t_stop } else { t + h_step };
            y.copy_from_slice(&y_new);
            f.copy_from_slice(&k[6]);
            stats.steps += 1;
            let dense = (0..dim)
                .map(|i| h_step * D.iter().zip(&k).map(|(d, ki)| d * ki[i]).sum::<f64>())
                .collect();
            nodes.push(Node {
                t,
                y: y.clone(),
                dy: f.clone(),
                dense,
            });
            let grow = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            h = h_step * if last_fail { grow.min(1.0) } else { grow };
            last_fail = false;
        } else {
            stats.rejects += 1;
            h = h_step * (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
            last_fail = false;
        }
    };

    let samples = match c.dt_out {
        Some(dt) if dt > 0.0 => {
            let mut out = Vec::new();
            let end = nodes.last().unwrap().t;
            let mut j = 0usize;
            let mut idx = 1usize;
            loop {
                let ts = t0 + j as f64 * dt;
                if ts >= end {
                    break;
                }
                while idx < nodes.len() - 1 && nodes[idx].t < ts {
                    idx += 1;
                }
                let mut buf = vec![0.0; dim];
                if nodes.len() == 1 {
                    buf.copy_from_slice(&nodes[0].y);
                } else {
                    interpolate(&nodes[idx - 1], &nodes[idx], ts, &mut buf);
                }
                out.push((ts, buf));
                j += 1;
            }
            out.push((end, nodes.last().unwrap().y.clone()));
            out
        }
        _ => nodes.iter().map(|nd| (nd.t, nd.y.clone())).collect(),
    };

    Ok(Trajectory {
        nodes,
        samples,
        termination,
        stats,
        state_dim: n,
        s_index,
    })
}

impl OdeSystem for CompactifiedSystem {
    fn dim(&self) -> usize {
        CompactifiedSystem::dim(self) + 1
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Option<()> {
        let n = CompactifiedSystem::dim(self);
        let ds = self.rhs_into(&y[..n], y[n], &mut dy[..n]).ok()?;
        dy[n] = ds;
        Some(())
    }

    fn state_dim(&self) -> usize {
        CompactifiedSystem::dim(self)
    }

    fn s_index(&self) -> Option<usize> {
        Some(CompactifiedSystem::dim(self))
    }

    fn s_end(&self) -> f64 {
        self.s_domain().1
    }

    fn project(&self, y: &mut [f64]) -> bool {
        let n = CompactifiedSystem::dim(self);
        match self.clamp_s(y[n]) {
            Ok(s) => {
                y[n] = s;
                y.iter().all(|v| v.is_finite())
            }
            Err(_) => false,
        }
    }
}

/// Starting time for a compactified run: `h(s0)` inside, `0` on an end.
pub fn start_time(sys: &CompactifiedSystem, s0: f64) -> f64 {
    sys.transform().h(s0).unwrap_or(0.0)
}

/// Integrate the compactified system from `(x0, s0)`; internal time equals
/// physical time `t = h(s)` for interior starts.
pub fn integrate(
    sys: &CompactifiedSystem,
    x0: &[f64],
    s0: f64,
    controls: &Controls,
) -> Result<Trajectory, OdeError> {
    let mut y = x0.to_vec();
    y.push(s0);
    integrate_system(sys, start_time(sys, s0), &y, controls)
}

/// The nonautonomous system `ẋ = f(x, Γ(t))` with explicit time.
pub struct Nonautonomous<'a> {
    pub field: &'a VectorFieldDef,
    pub forcing: &'a ForcingProfile,
}

impl OdeSystem for Nonautonomous<'_> {
    fn dim(&self) -> usize {
        self.field.state_dim()
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Option<()> {
        let gamma = self.forcing.value(t).ok()?;
        self.field.eval_into(y, &gamma, dy).ok()
    }
}

pub fn direct_integrate(
    field: &VectorFieldDef,
    forcing: &ForcingProfile,
    t0: f64,
    x0: &[f64],
    controls: &Controls,
) -> Result<Trajectory, OdeError> {
    integrate_system(&Nonautonomous { field, forcing }, t0, x0, controls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extended::assemble;
    use crate::problem::{DeclaredLimits, Parameters, Sides};
    use crate::transform::{Sidedness, Transform};

    struct Scalar1(fn(f64, f64) -> f64);
    impl OdeSystem for Scalar1 {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Option<()> {
            dy[0] = (self.0)(t, y[0]);
            Some(())
        }
    }

    fn linear_sys(alpha: f64) -> CompactifiedSystem {
        let p = ForcingProfile::parse(&["tanh(t)"], &Parameters::new(), Sides::TwoSided, DeclaredLimits::default()).unwrap();
        let f = VectorFieldDef::parse(&["-x1 + Gamma1"], 1, &Parameters::new()).unwrap();
        assemble(&f, &p, &Transform::exponential(alpha, Sidedness::TwoSided).unwrap()).unwrap()
    }

    #[test]
    fn clock_follows_tanh() {
        let sys = linear_sys(1.0);
        let c = Controls { t_max: 2.0, ..Default::default() };
        let tr = integrate(&sys, &[0.0], 0.0, &c).unwrap();
        assert_eq!(tr.termination, Termination::Horizon);
        assert!((tr.final_s().unwrap() - 1f64.tanh()).abs() < 1e-8);
    }

    #[test]
    fn frozen_end_runs_limit_system() {
        let p = ForcingProfile::parse(&["tanh(t)"], &Parameters::new(), Sides::TwoSided, DeclaredLimits::default()).unwrap();
        let f = VectorFieldDef::parse(&["x1^2 - 1 + 0*Gamma1"], 1, &Parameters::new()).unwrap();
        let sys = assemble(&f, &p, &Transform::exponential(1.0, Sidedness::TwoSided).unwrap()).unwrap();
        let c = Controls { t_max: 2.0, ..Default::default() };
        let tr = integrate(&sys, &[0.0], 1.0, &c).unwrap();
        assert!((tr.final_x()[0] + 0.9640276).abs() < 1e-7);
        assert!((tr.final_x()[0] + 2f64.tanh()).abs() < 1e-8);
        assert!(tr.nodes.iter().all(|nd| nd.y[1] == 1.0));
        assert!(tr.distance_series(Side::Future).iter().all(|&(_, d)| d == 0.0));
    }

    #[test]
    fn blow_up_escapes() {
        let c = Controls { t_max: 5.0, escape_radius: 10.0, ..Default::default() };
        let tr = integrate_system(&Scalar1(|_, x| x * x), 0.0, &[1.0], &c).unwrap();
        assert_eq!(tr.termination, Termination::Escaped);
        assert!(tr.t_end() < 1.1);
    }

    #[test]
    fn constant_forcing_matches_closed_form() {
        let p = ForcingProfile::parse(&["0.7"], &Parameters::new(), Sides::TwoSided, DeclaredLimits::default()).unwrap();
        let f = VectorFieldDef::parse(&["-x1 + Gamma1"], 1, &Parameters::new()).unwrap();
        let c = Controls { t_max: 5.0, ..Default::default() };
        let tr = direct_integrate(&f, &p, 0.0, &[2.0], &c).unwrap();
        for t in [0.5f64, 1.7, 3.2, 5.0] {
            let exact = (-t).exp() * (2.0 - 0.7) + 0.7;
            assert!((tr.at(t)[0] - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn distance_follows_closed_form() {
        for alpha in [0.5, 1.0, 2.0] {
            let sys = linear_sys(alpha);
            let c = Controls { t_max: 20.0, dt_out: Some(0.1), abs_tol: 1e-11, rel_tol: 1e-11, ..Default::default() };
            let tr = integrate(&sys, &[0.0], 0.0, &c).unwrap();
            for (t, d) in tr.distance_series(Side::Future) {
                assert!((d - 2.0 / ((alpha * t).exp() + 1.0)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn order_of_accuracy() {
        // error against s(t) = tanh(t/2) shrinks with the tolerance
        let sys = linear_sys(1.0);
        let err = |tol: f64| {
            let c = Controls { t_max: 3.0, abs_tol: tol, rel_tol: tol, ..Default::default() };
            let tr = integrate(&sys, &[0.0], 0.0, &c).unwrap();
            (tr.final_s().unwrap() - 1.5f64.tanh()).abs()
        };
        assert!(err(1e-6) > err(1e-10));
    }

    #[test]
    fn csv_layout() {
        let sys = linear_sys(1.0);
        let c = Controls { t_max: 1.0, dt_out: Some(0.25), ..Default::default() };
        let tr = integrate(&sys, &[0.5], 0.0, &c).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,s,x1"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.split(',').count() == 3));
        assert_eq!(fmt17(0.1), "0.1");
        assert_eq!(fmt17(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
