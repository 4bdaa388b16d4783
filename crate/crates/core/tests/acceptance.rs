//! Acceptance suite. Prints one PASS/FAIL line per criterion with its runtime
//! against the budget and exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use compactode::conditions::{
    check_condition_one, check_condition_two, classify_decay, DecayKind, ReferenceEnvelope, Verdict,
};
use compactode::connect::{critical_rate, ConnectError, RateProblem};
use compactode::expr::{Expr, ParseError};
use compactode::extended::{assemble, CompactifiedSystem, ExtendedState};
use compactode::invariant::{
    embed, equilibrium_at, omega_classify, settle, unstable_branch, EmbeddedSet, Tolerances,
};
use compactode::odeint::{direct_integrate, integrate, Controls, Termination, Trajectory};
use compactode::problem::{DeclaredLimits, ForcingProfile, Parameters, Side, Sides, VectorFieldDef};
use compactode::transform::{Sidedness, Transform};
use proptest::prelude::RngExt;
use proptest::test_runner::{RngAlgorithm, TestRng};
use rayon::prelude::*;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn forcing(src: &[&str], sides: Sides) -> ForcingProfile {
    ForcingProfile::parse(src, &Parameters::new(), sides, DeclaredLimits::default()).unwrap()
}

fn field(src: &[&str], d: usize) -> VectorFieldDef {
    VectorFieldDef::parse(src, d, &Parameters::new()).unwrap()
}

fn exp(a: f64) -> Transform {
    Transform::exponential(a, Sidedness::TwoSided).unwrap()
}

fn alg(a: f64) -> Transform {
    Transform::algebraic(a, Sidedness::TwoSided).unwrap()
}

fn linear_tanh(tr: &Transform) -> CompactifiedSystem {
    assemble(&field(&["-x1 + Gamma1"], 1), &forcing(&["tanh(t)"], Sides::TwoSided), tr).unwrap()
}

// 1
fn transform_identities() -> Outcome {
    let mut worst_end: f64 = 0.0;
    let mut worst_inv: f64 = 0.0;
    for a in [0.5, 1.0, 2.0, 3.0] {
        for (tr, slope) in [(exp(a), a), (alg(a), 0.0)] {
            ensure!(tr.gamma(-1.0) == 0.0 && tr.gamma(1.0) == 0.0, "{:?} gamma at ends nonzero", tr.kind());
            worst_end = worst_end
                .max((tr.gamma_prime(-1.0) - slope).abs())
                .max((tr.gamma_prime(1.0) + slope).abs());
        }
    }
    ensure!(worst_end < 1e-12, "endpoint slopes off by {worst_end:e}");
    let mut families = vec![
        exp(1.0),
        exp(2.5),
        alg(0.5),
        alg(1.0),
        alg(2.0),
        Transform::exponential_two_rate(0.7, 2.0).unwrap(),
        Transform::algebraic_two_rate(1.0, 3.0).unwrap(),
    ];
    families.extend([Sidedness::Right, Sidedness::Left].iter().flat_map(|&sd| {
        [
            Transform::exponential(1.5, sd).unwrap(),
            Transform::algebraic(1.0, sd).unwrap(),
        ]
    }));
    for tr in &families {
        let (lo, hi) = tr.s_domain();
        for i in 0..1000 {
            let s = lo + (hi - lo) * (i as f64 + 0.5) / 1000.0;
            let r = (tr.g(tr.h(s).map_err(|e| e.to_string())?) - s).abs();
            worst_inv = worst_inv.max(r);
        }
    }
    ensure!(worst_inv < 1e-10, "inverse-pair residual {worst_inv:e}");
    Ok(format!("max endpoint error {worst_end:.1e}, max g(h(s)) - s {worst_inv:.1e} over {} families", families.len()))
}

// 2
fn stretched_family(k: f64) -> Transform {
    let h = format!("s*(1 - ln(1 - s^2))^(1/{k})");
    let ls = format!("ln({k}) + ({k} - 1)*ln(abs(t)) - abs(t)^{k}");
    Transform::custom(&h, Some(&ls), Sidedness::TwoSided).unwrap()
}

fn remark_reproduction() -> Outcome {
    let at30 = 2f64.powi(30);
    let mut detail = Vec::new();
    for side in [Side::Past, Side::Future] {
        let r1 = check_condition_two(&stretched_family(1.0), side).map_err(|e| e.to_string())?;
        let target = -side.sign();
        ensure!(r1.converged && (r1.value[0] - target).abs() < 1e-3, "k=1 {}: {:?}", side.name(), r1.value);
        let s30 = r1
            .samples
            .iter()
            .find(|(t, _)| t.abs() == at30)
            .ok_or("no sample at 2^30")?;
        ensure!((s30.1[0] - target).abs() < 1e-3, "k=1 at 2^30: {}", s30.1[0]);
        let r05 = check_condition_two(&stretched_family(0.5), side).map_err(|e| e.to_string())?;
        ensure!(r05.converged && r05.value[0].abs() < 1e-6, "k=0.5 {}: {:?}", side.name(), r05.value);
        let r2 = check_condition_two(&stretched_family(2.0), side).map_err(|e| e.to_string())?;
        ensure!(r2.verdict == Verdict::Diverges, "k=2 {}: {:?}", side.name(), r2.verdict);
        detail.push(format!("{}: k=1 -> {:.6}, k=0.5 -> {:.1e}, k=2 diverges", side.name(), s30.1[0], r05.value[0]));
    }
    Ok(detail.join("; "))
}

// 3
fn sup_diff(a: &Trajectory, b: &Trajectory, lo: f64, hi: f64, n: usize) -> f64 {
    (0..=400)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / 400.0;
            let (ya, yb) = (a.at(t), b.at(t));
            (0..n).map(|k| (ya[k] - yb[k]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn consistency() -> Outcome {
    let tight = Controls {
        abs_tol: 1e-10,
        rel_tol: 1e-10,
        s_end_eps: 1e-15,
        ..Default::default()
    };
    // linear-tanh, exp α = 1, t ∈ [-20, 20]
    let tr = exp(1.0);
    let sys = linear_tanh(&tr);
    let comp = integrate(&sys, &[0.5], tr.g(-20.0), &Controls { t_max: 40.0, ..tight }).map_err(|e| e.to_string())?;
    let t0 = comp.t_start();
    let direct = direct_integrate(sys.field(), sys.forcing(), t0, &[0.5], &Controls { t_max: 20.0 - t0, ..tight })
        .map_err(|e| e.to_string())?;
    let hi = comp.t_end().min(20.0);
    let d1 = sup_diff(&comp, &direct, t0, hi, 1);
    ensure!(hi > 19.99, "compactified run stopped at t = {hi}");
    ensure!(d1 < 1e-6, "linear-tanh sup-norm {d1:e}");

    // radial reduction, right-sided alg α = 1, t ∈ [1, 100]
    let params = Parameters::from([("Vp".to_string(), 0.5)]);
    let f = VectorFieldDef::parse(&["x2", "Gamma1*x2 - Gamma2*x1 - (x1 - x1^3)"], 2, &params).unwrap();
    let p = ForcingProfile::parse(
        &["(1 - 3)/t", "-(Vp + 1/(1 + t^2))"],
        &params,
        Sides::FutureOnly,
        DeclaredLimits::default(),
    )
    .unwrap();
    let tr = Transform::algebraic(1.0, Sidedness::Right).unwrap();
    let sys = assemble(&f, &p, &tr).map_err(|e| e.to_string())?;
    let x0 = [0.5, 0.0];
    let comp = integrate(&sys, &x0, tr.g(1.0), &Controls { t_max: 99.0, ..tight }).map_err(|e| e.to_string())?;
    let t0 = comp.t_start();
    let direct = direct_integrate(&f, &p, t0, &x0, &Controls { t_max: 100.0 - t0, ..tight }).map_err(|e| e.to_string())?;
    let hi = comp.t_end().min(100.0);
    ensure!(hi > 99.99, "radial compactified run stopped at t = {hi}");
    let d2 = sup_diff(&comp, &direct, t0, hi, 2);
    ensure!(d2 < 1e-6, "radial sup-norm {d2:e}");
    Ok(format!("sup |x_c - x_d|: linear-tanh {d1:.1e}, radial (V+ = 0.5) {d2:.1e}"))
}

// 4
fn distance_decay() -> Outcome {
    let mut detail = Vec::new();
    for a in [0.5, 1.0, 2.0] {
        let tr = exp(a);
        let sys = linear_tanh(&tr);
        let run = integrate(&sys, &[0.0], 0.0, &Controls { t_max: 100.0, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let worst = run
            .distance_series(Side::Future)
            .iter()
            .map(|(t, d)| (d - 2.0 / ((a * t).exp() + 1.0)).abs())
            .fold(0.0, f64::max);
        ensure!(worst < 1e-6, "exp α={a}: {worst:e}");
        detail.push(format!("exp {a}: {worst:.1e}"));
    }
    let tr = alg(1.0);
    let sys = linear_tanh(&tr);
    let run = integrate(
        &sys,
        &[0.0],
        0.0,
        &Controls {
            t_max: 120.0,
            s_end_eps: 1e-12,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    ensure!(run.t_end() >= 100.0, "algebraic run ended at {}", run.t_end());
    let pts: Vec<(f64, f64)> = (0..50)
        .map(|i| {
            let t = 10f64 * 10f64.powf(i as f64 / 49.0);
            (t.ln(), (1.0 - run.at(t)[1]).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    ensure!((-1.02..=-0.98).contains(&slope), "alg log-log slope {slope}");
    detail.push(format!("alg 1 slope {slope:.4}"));
    Ok(detail.join(", "))
}

// 5
fn truth_table() -> Outcome {
    let p = forcing(&["tanh(t)"], Sides::TwoSided);
    for side in [Side::Past, Side::Future] {
        for a in [1.0, 2.0] {
            let r = check_condition_one(&p, &exp(a), side).map_err(|e| e.to_string())?;
            ensure!(r.converged && r.verdict == Verdict::Finite, "α={a} {}: {:?}", side.name(), r.verdict);
        }
        let r = check_condition_one(&p, &exp(3.0), side).map_err(|e| e.to_string())?;
        ensure!(!r.converged && r.verdict == Verdict::Diverges, "α=3 {}: {:?}", side.name(), r.verdict);
    }
    let mut rhos = Vec::new();
    for side in [Side::Past, Side::Future] {
        let c = classify_decay(&p, side).map_err(|e| e.to_string())?;
        let DecayKind::Exponential { rho } = c.class else {
            return Err(format!("{} classified {:?}", side.name(), c.class));
        };
        ensure!((rho - 2.0).abs() <= 0.1, "rho = {rho}");
        rhos.push(rho);
    }
    Ok(format!("α=1,2 converge, α=3 diverges; rho = {:.4}/{:.4}", rhos[0], rhos[1]))
}

// 6
fn envelope_family() -> Outcome {
    let mut detail = Vec::new();
    for m in 0..=3u32 {
        let env = ReferenceEnvelope::new(m);
        let start = (env.threshold().log2().ceil() as i32).max(2) + 1;
        let mags: Vec<f64> = (start..=1000)
            .map(|k| env.value(2f64.powi(k)).map(f64::abs))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ensure!(mags.windows(2).all(|w| w[1] < w[0]), "|A(t,{m})| not decreasing");
        let at40 = env.log_slope(2f64.powi(40)).map_err(|e| e.to_string())?;
        ensure!(at40.abs() < 1e-3, "m={m}: |g''/g'| at 2^40 = {at40:e}");
        for side in [Side::Past, Side::Future] {
            let r = env.check_condition_two(side).map_err(|e| e.to_string())?;
            ensure!(r.converged && r.value[0].abs() < 1e-6, "m={m} {}: {:?}", side.name(), r.value);
        }
        detail.push(format!("m={m}: A(2^1000)={:.3}, g''/g'(2^40)={at40:.1e}", -mags.last().unwrap()));
    }
    Ok(detail.join("; "))
}

// 7
fn fd_jacobian_gap(sys: &CompactifiedSystem, x: f64, s: f64) -> f64 {
    let j = sys.jacobian(&ExtendedState { x: vec![x], s }).unwrap();
    let f = |x: f64, s: f64| {
        let (dx, ds) = sys.rhs(&ExtendedState { x: vec![x], s }).unwrap();
        [dx[0], ds]
    };
    let h = 1e-6;
    let dir = if s < 0.0 { 1.0 } else { -1.0 };
    let mut gap: f64 = 0.0;
    for r in 0..2 {
        let dxfd = (f(x + h, s)[r] - f(x - h, s)[r]) / (2.0 * h);
        // one-sided second-order difference into the interior
        let dsfd = dir * (-3.0 * f(x, s)[r] + 4.0 * f(x, s + dir * h)[r] - f(x, s + 2.0 * dir * h)[r]) / (2.0 * h);
        gap = gap.max((j[(r, 0)] - dxfd).abs()).max((j[(r, 1)] - dsfd).abs());
    }
    gap
}

fn embedding_spectra() -> Outcome {
    let tol = Tolerances::default();
    let f = field(&["(x1 + Gamma1)^2 - 1"], 1);
    let p = forcing(&["tanh(t) + 1"], Sides::TwoSided);
    let mut detail = Vec::new();
    for (tr, l_expected, label) in [
        (exp(0.5), 0.5, "exp 0.5"),
        (exp(1.0), 1.0, "exp 1"),
        (exp(2.0), 2.0, "exp 2"),
        (alg(1.0), 0.0, "alg 1"),
    ] {
        let sys = assemble(&f, &p, &tr).map_err(|e| e.to_string())?;
        let eq = equilibrium_at(&sys.limit_system(Side::Past).unwrap(), &[-1.0], &tol).map_err(|e| e.to_string())?;
        let es = embed(&eq, &sys, Side::Past, &tol).map_err(|e| e.to_string())?;
        let mut got: Vec<f64> = es.full_spectrum.iter().map(|e| e[0]).collect();
        got.sort_by(f64::total_cmp);
        let mut want = vec![-2.0, l_expected];
        want.sort_by(f64::total_cmp);
        ensure!(
            got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-10),
            "{label}: spectrum {got:?}"
        );
        let l = sys.end(Side::Past).unwrap().condition_limit.clone();
        let zero_l = l.iter().all(|v| *v == 0.0);
        ensure!(es.is_normal() == zero_l, "{label}: normal = {} but L = {l:?}", es.is_normal());
        let gap = fd_jacobian_gap(&sys, -1.0, -1.0);
        ensure!(gap < 1e-5, "{label}: FD Jacobian gap {gap:e}");
        detail.push(format!("{label}: {{-2, {l_expected}}}, normal={}", es.is_normal()));
    }
    Ok(detail.join("; "))
}

// 8
fn embeddings(sys: &CompactifiedSystem, past: f64, future: f64) -> (EmbeddedSet, EmbeddedSet) {
    let tol = Tolerances::default();
    let p = equilibrium_at(&sys.limit_system(Side::Past).unwrap(), &[past], &tol).unwrap();
    let f = equilibrium_at(&sys.limit_system(Side::Future).unwrap(), &[future], &tol).unwrap();
    (
        embed(&p, sys, Side::Past, &tol).unwrap(),
        embed(&f, sys, Side::Future, &tol).unwrap(),
    )
}

fn pullback_trace_check() -> Outcome {
    let mut detail = Vec::new();
    for (tr, controls, label) in [
        (exp(1.0), Controls::default(), "exp 1"),
        (
            alg(1.0),
            Controls {
                t_max: 2e6,
                s_end_eps: 1e-5,
                max_steps: 2_000_000,
                ..Default::default()
            },
            "alg 1",
        ),
    ] {
        let sys = linear_tanh(&tr);
        let (past, _) = embeddings(&sys, -1.0, 1.0);
        let delta = 1e-6;
        let a = unstable_branch(&sys, &past, delta, &controls).map_err(|e| e.to_string())?;
        let b = unstable_branch(&sys, &past, delta / 2.0, &controls).map_err(|e| e.to_string())?;
        ensure!(a.termination == Termination::SReachedEnd, "{label}: {:?}", a.termination);
        let end = a.final_state();
        let miss = (end[0] - 1.0).abs().max((end[1] - 1.0).abs());
        ensure!(miss < 1e-4, "{label}: terminus {end:?}");
        let lo = a.samples[0].1[1].max(b.samples[0].1[1]);
        let hi = a.final_s().unwrap().min(b.final_s().unwrap());
        let mut sup: f64 = 0.0;
        for i in 0..=1000 {
            let s = lo + (hi - lo) * i as f64 / 1000.0;
            let (xa, xb) = (a.at_s(s).ok_or("at_s")?, b.at_s(s).ok_or("at_s")?);
            sup = sup.max((xa[0] - xb[0]).abs());
        }
        ensure!(sup <= 2.0 * delta, "{label}: δ-halving moved the trace by {sup:e}");
        detail.push(format!("{label}: terminus miss {miss:.1e}, halving diff {sup:.1e}"));
    }
    Ok(detail.join("; "))
}

// 9
fn attractor_persistence() -> Outcome {
    let tol = Tolerances::default();
    let sys = linear_tanh(&exp(1.0));
    let (_, fut) = embeddings(&sys, -1.0, 1.0);
    let c = Controls::default();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let x = 1.0 + 0.3 * (2.0 * PI * i as f64 / 20.0).cos();
        let s = 1.0 - 10f64.powi(-2 - (i % 3));
        let run = integrate(&sys, &[x], s, &c).map_err(|e| e.to_string())?;
        let run = settle(&sys, &run, tol.settle_time, &c).map_err(|e| e.to_string())?;
        let hit = omega_classify(&run, std::slice::from_ref(&fut), tol.conv_tol).map_err(|e| e.to_string())?;
        ensure!(hit == Some(0), "start ({x}, {s}) classified {hit:?}");
        worst = worst.max((run.final_state()[0] - 1.0).abs());
    }
    Ok(format!("20/20 classified to the future sink, worst final |x - 1| {worst:.1e}"))
}

// 10
fn quadratic_problem(tr: Transform) -> RateProblem {
    RateProblem {
        field: field(&["(x1 + Gamma1)^2 - 1"], 1),
        forcing: forcing(&["1.5*(tanh(t/2) + 1)"], Sides::TwoSided),
        transform: tr,
        past: vec![-1.0],
        target: vec![-4.0],
        delta: 1e-6,
        controls: Controls::default(),
        tol: Tolerances::default(),
    }
}

/// Direct nonautonomous integration from the quasi-static past state.
fn direct_tracks(rp: &RateProblem, r: f64) -> Option<bool> {
    let p = rp.forcing.with_time_scale(r);
    let t0 = -40.0 / r;
    let x0 = -1.0 - p.value(t0).ok()?[0];
    let c = Controls {
        abs_tol: 1e-11,
        rel_tol: 1e-11,
        t_max: 80.0 / r + 200.0,
        ..Default::default()
    };
    let run = direct_integrate(&rp.field, &p, t0, &[x0], &c).ok()?;
    match run.termination {
        Termination::Escaped => Some(false),
        Termination::Horizon if (run.final_x()[0] + 4.0).abs() < 1e-3 => Some(true),
        _ => None,
    }
}

fn critical_rate_check() -> Outcome {
    let rp = quadratic_problem(exp(1.0));
    let tol = 1e-4;
    let t = Instant::now();
    let cr = critical_rate(&rp, 0.1, 10.0, tol).map_err(|e| e.to_string())?;
    let t_bisect = t.elapsed().as_secs_f64();
    ensure!(cr.warnings.is_empty(), "{:?}", cr.warnings);

    let n = 10_000;
    let grid: Vec<f64> = (0..n).map(|i| 0.1 * 100f64.powf(i as f64 / (n - 1) as f64)).collect();
    let t = Instant::now();
    let verdicts: Vec<Option<bool>> = grid.par_iter().map(|&r| direct_tracks(&rp, r)).collect();
    let t_oracle = t.elapsed().as_secs_f64();
    let undecided = verdicts.iter().filter(|v| v.is_none()).count();
    ensure!(undecided == 0, "{undecided} oracle points undecided");
    let switches: Vec<usize> = (1..n).filter(|&i| verdicts[i] != verdicts[i - 1]).collect();
    ensure!(switches.len() == 1, "oracle classification switches {} times", switches.len());
    let k = switches[0];
    ensure!(verdicts[0] == Some(true) && verdicts[k] == Some(false), "oracle does not go tracked -> tipped");
    let r_grid = 0.5 * (grid[k - 1] + grid[k]);
    let spacing = grid[k] - grid[k - 1];
    let err = (cr.r_star - r_grid).abs();
    ensure!(err <= tol * cr.r_star + spacing, "r* = {} vs grid {r_grid} (spacing {spacing:e})", cr.r_star);
    ensure!(t_bisect < 5.0, "bisection took {t_bisect:.2}s");
    ensure!(t_oracle < 60.0, "oracle took {t_oracle:.2}s");

    let linear = RateProblem {
        field: field(&["-x1 + Gamma1"], 1),
        forcing: forcing(&["tanh(t)"], Sides::TwoSided),
        past: vec![-1.0],
        target: vec![1.0],
        ..quadratic_problem(exp(1.0))
    };
    match critical_rate(&linear, 0.1, 10.0, tol) {
        Err(ConnectError::NoSignChange { .. }) => {}
        other => return Err(format!("linear family: {other:?}")),
    }
    Ok(format!(
        "r* = {:.6} ({} probes, {t_bisect:.2}s) vs oracle {r_grid:.6} ± {spacing:.1e} ({t_oracle:.1}s); linear: NoSignChange",
        cr.r_star,
        cr.probes.len()
    ))
}

// 11
fn parser_ad() -> Outcome {
    let exprs = [
        "sin(x)*exp(-x^2/3)",
        "tanh(2*x) + x^3",
        "ln(1 + x^2)",
        "sqrt(2 + cos(x))",
        "sech(x)^2*x - 1/(2 + x^2)",
        "exp(x/2)*cos(3*x)",
        "(x + 1)^2/(3 + sin(x))",
        "abs(x)^3 + x",
    ];
    let parsed: Vec<Expr> = exprs.iter().map(|s| Expr::parse(s).unwrap()).collect();
    let mut rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let e = &parsed[rng.random_range(0..parsed.len())];
        let x: f64 = rng.random_range(-3.0..3.0);
        let at = |v: f64| HashMap::from([("x".to_string(), v)]);
        let d = e.deriv("x", &at(x)).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let fd = (e.eval(&at(x + h)).unwrap() - e.eval(&at(x - h)).unwrap()) / (2.0 * h);
        worst = worst.max((d - fd).abs() / d.abs().max(1.0));
    }
    ensure!(worst < 1e-6, "worst relative error {worst:e}");
    for (src, offset) in [("x1 + * 2", 5), ("(x1 + 2", 7), ("x1 2", 3), ("sin(x))", 6), ("2 ^", 3)] {
        match Expr::parse(src) {
            Err(ParseError::Syntax { offset: o, .. }) if o == offset => {}
            other => return Err(format!("`{src}`: {other:?}")),
        }
    }
    Ok(format!("worst relative error {worst:.1e} on 1000 samples; 5 malformed inputs positioned"))
}

struct Criterion {
    id: u8,
    name: &'static str,
    budget: f64,
    run: fn() -> Outcome,
}

const CRITERIA: [Criterion; 11] = [
    Criterion { id: 1, name: "transform identities", budget: 1.0, run: transform_identities },
    Criterion { id: 2, name: "stretched-exponential condition two", budget: 1.0, run: remark_reproduction },
    Criterion { id: 3, name: "compactified vs direct integration", budget: 5.0, run: consistency },
    Criterion { id: 4, name: "distance decay", budget: 5.0, run: distance_decay },
    Criterion { id: 5, name: "condition checker truth table", budget: 2.0, run: truth_table },
    Criterion { id: 6, name: "reference envelopes", budget: 1.0, run: envelope_family },
    Criterion { id: 7, name: "embedding spectra", budget: 1.0, run: embedding_spectra },
    Criterion { id: 8, name: "pullback trace", budget: 5.0, run: pullback_trace_check },
    Criterion { id: 9, name: "attractor persistence", budget: 5.0, run: attractor_persistence },
    Criterion { id: 10, name: "critical rate", budget: 65.0, run: critical_rate_check },
    Criterion { id: 11, name: "parser and derivatives", budget: 1.0, run: parser_ad },
];

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for c in &CRITERIA {
        if !filter.is_empty() && !filter.iter().any(|f| c.id.to_string() == *f) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".into()));
        let dt = start.elapsed().as_secs_f64();
        let (ok, detail) = match res {
            Ok(d) if dt <= c.budget => (true, d),
            Ok(d) => (false, format!("over budget; {d}")),
            Err(e) => (false, e),
        };
        println!(
            "{} {:>2} {:<36} {:>7.2}s / {:>4}s  {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            dt,
            c.budget,
            detail
        );
        if !ok {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
