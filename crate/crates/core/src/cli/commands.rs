//! Subcommand implementations.

use serde_json::{json, Value};

use super::config::{Loaded, ProblemConfig, Resolved, TransformChoice};
use super::scenarios;
use super::{Cli, Command, Failure, Outcome, ScenarioAction, EXIT_REFUSED};
use crate::conditions::{check_condition_one, check_condition_two, classify_decay, LimitReport, Verdict};
use crate::connect::{critical_rate, critical_rate_batch, pullback_trace, ConnectError, RateProblem};
use crate::extended::assemble;
use crate::invariant::{embed, find_equilibria, refine, EquilibriumType};
use crate::odeint::{integrate, Trajectory};
use crate::problem::Side;
use crate::transform::{Transform, TransformSpec};

pub fn execute(cli: Cli) -> Result<Outcome, Failure> {
    let set = parse_overrides(&cli.set)?;
    let load = |path: &std::path::Path| -> Result<Loaded, Failure> {
        let mut c = ProblemConfig::from_path(path)?;
        apply_overrides(&mut c, &set);
        c.load()
    };
    match cli.command {
        Command::Check { config } => cmd_check(&load(&config)?),
        Command::Simulate { config, x0, s0 } => cmd_simulate(&load(&config)?, x0, s0),
        Command::Equilibria { config, side } => cmd_equilibria(&load(&config)?, side.map(Side::from)),
        Command::Pullback { config, delta } => cmd_pullback(&load(&config)?, delta),
        Command::Tip {
            config,
            r_lo,
            r_hi,
            tol,
            batch,
        } => cmd_tip(&load(&config)?, TipOverrides { r_lo, r_hi, tol, batch }),
        Command::Scenario { action } => cmd_scenario(action, &set),
    }
}

fn parse_overrides(set: &[String]) -> Result<Vec<(String, f64)>, Failure> {
    set.iter()
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("--set expects NAME=VALUE, got `{kv}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Failure::usage(format!("--set {k}: `{v}` is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn apply_overrides(c: &mut ProblemConfig, set: &[(String, f64)]) {
    for (k, v) in set {
        c.parameters.insert(k.clone(), *v);
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// A limit report without the full sample list.
fn report_view(r: &LimitReport) -> Value {
    let tail = &r.samples[r.samples.len().saturating_sub(3)..];
    json!({
        "side": r.side,
        "converged": r.converged,
        "verdict": r.verdict,
        "value": r.value,
        "worst_component": r.worst_component,
        "samples_used": r.samples.len(),
        "last_samples": tail,
    })
}

fn report_ok(r: &LimitReport) -> bool {
    r.converged && r.verdict == Verdict::Finite
}

fn transform_json(tr: &Transform) -> Value {
    to_value(&TransformSpec::describe(tr))
}

fn csv_of(traj: &Trajectory) -> String {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is ascii")
}

pub fn cmd_check(l: &Loaded) -> Result<Outcome, Failure> {
    let sides = l.forcing.sides().list();
    let mut limits = serde_json::Map::new();
    let mut limit_error = None;
    for &side in sides {
        match l.forcing.estimate_limits(side) {
            Ok(v) => {
                limits.insert(side.name().into(), to_value(&v));
            }
            Err(e) => {
                limits.insert(side.name().into(), json!({ "error": e.to_string() }));
                limit_error.get_or_insert(e);
            }
        }
    }
    let mut report = json!({ "limits": limits });
    if let Some(e) = limit_error {
        report["status"] = json!("refused");
        return Err(Failure::from(e).with_report(report));
    }
    let classes: Vec<Value> = sides
        .iter()
        .map(|&side| match classify_decay(&l.forcing, side) {
            Ok(c) => to_value(&c),
            Err(e) => json!({ "side": side, "error": e.to_string() }),
        })
        .collect();
    report["classes"] = Value::Array(classes);
    let (tr, c1, c2) = match &l.config.transform {
        TransformChoice::Auto(_) => match crate::conditions::recommend(&l.forcing) {
            Ok(rec) => {
                report["rationale"] = json!(rec.rationale);
                (rec.transform, rec.condition_one, rec.condition_two)
            }
            Err(e) => {
                report["status"] = json!("refused");
                report["error"] = json!(e.to_string());
                return Err(Failure::from(e).with_report(report));
            }
        },
        TransformChoice::Spec(spec) => {
            let tr = spec.build(&l.forcing).map_err(|e| {
                let mut r = report.clone();
                r["status"] = json!("refused");
                r["error"] = json!(e.to_string());
                Failure::from(e).with_report(r)
            })?;
            let mut c1 = Vec::new();
            let mut c2 = Vec::new();
            for &side in tr.compact_sides() {
                let one = check_condition_one(&l.forcing, &tr, side);
                let two = check_condition_two(&tr, side);
                match (one, two) {
                    (Ok(a), Ok(b)) => {
                        c1.push(a);
                        c2.push(b);
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        report["status"] = json!("refused");
                        report["error"] = json!(e.to_string());
                        return Err(Failure::from(e).with_report(report));
                    }
                }
            }
            (tr, c1, c2)
        }
    };
    report["transform"] = transform_json(&tr);
    report["condition_one"] = Value::Array(c1.iter().map(report_view).collect());
    report["condition_two"] = Value::Array(c2.iter().map(report_view).collect());
    let ok = c1.iter().chain(&c2).all(report_ok);
    report["status"] = json!(if ok { "ok" } else { "refused" });
    if !ok {
        return Err(Failure::new(EXIT_REFUSED, "transformation conditions are violated").with_report(report));
    }
    Ok(Outcome::json(report))
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Fit of the distance `1 - s` to the future end against `t` (exponential
/// ends) or `ln t` (algebraic ends).
pub fn distance_fit(traj: &Trajectory, tr: &Transform) -> Option<Value> {
    if !tr.compact_sides().contains(&Side::Future) {
        return None;
    }
    let slope_end = tr.end_slope(Side::Future)?;
    let log_time = slope_end == 0.0;
    let pts: Vec<(f64, f64)> = traj
        .distance_series(Side::Future)
        .into_iter()
        .filter(|(t, d)| *t > 0.0 && *d > 0.0 && *d < 1e-2)
        .map(|(t, d)| (if log_time { t.ln() } else { t }, d.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let expected = if tr.kind().is_algebraic() {
        Some(-tr.alpha())
    } else if !log_time {
        Some(slope_end)
    } else {
        None
    };
    Some(json!({
        "side": "future",
        "scale": if log_time { "log-time" } else { "linear-time" },
        "slope": least_squares_slope(&pts),
        "expected": expected,
        "l_s": slope_end,
        "points": pts.len(),
    }))
}

pub fn cmd_simulate(l: &Loaded, x0: Option<Vec<f64>>, s0: Option<f64>) -> Result<Outcome, Failure> {
    let block = l.config.simulate.as_ref();
    let x0 = x0
        .or_else(|| block.map(|b| b.x0.clone()))
        .ok_or_else(|| Failure::usage("simulate needs x0 (config block or --x0)"))?;
    let s0 = s0
        .or_else(|| block.map(|b| b.s0))
        .ok_or_else(|| Failure::usage("simulate needs s0 (config block or --s0)"))?;
    if x0.len() != l.config.n {
        return Err(Failure::usage(format!("x0 needs {} components", l.config.n)));
    }
    let resolved = l.resolve_transform()?;
    let tr = resolved.transform();
    let sys = assemble(&l.field, &l.forcing, tr)?;
    let s0 = sys.clamp_s(s0)?;
    let traj = integrate(&sys, &x0, s0, &l.config.controls)?;
    let report = json!({
        "transform": transform_json(tr),
        "termination": traj.termination,
        "stats": traj.stats,
        "t_start": traj.t_start(),
        "t_end": traj.t_end(),
        "final_state": traj.final_state(),
        "samples": traj.samples.len(),
        "distance_fit": distance_fit(&traj, tr),
    });
    Ok(Outcome {
        report,
        files: vec![("trajectory.csv", csv_of(&traj))],
        text: None,
    })
}

pub fn cmd_equilibria(l: &Loaded, side: Option<Side>) -> Result<Outcome, Failure> {
    let block = l
        .config
        .equilibria
        .as_ref()
        .ok_or_else(|| Failure::usage("config has no `equilibria` block"))?;
    let side = side.unwrap_or(block.side);
    let resolved = l.resolve_transform()?;
    let tr = resolved.transform();
    let sys = assemble(&l.field, &l.forcing, tr)?;
    let ls = sys
        .limit_system(side)
        .ok_or_else(|| Failure::usage(format!("the {} end is not compactified", side.name())))?;
    let tol = &l.config.tolerances;
    let bounds: Vec<(f64, f64)> = block.bounds.iter().map(|b| (b[0], b[1])).collect();
    let search = find_equilibria(&ls, &bounds, block.grid, tol)?;
    let eqs: Vec<Value> = search
        .equilibria
        .iter()
        .map(|eq| {
            let mut v = to_value(eq);
            v["embedding"] = match embed(eq, &sys, side, tol) {
                Ok(es) => json!({
                    "s_star": es.s_star,
                    "l_s": es.l_s,
                    "extra_eigenvector": es.extra_eigenvector,
                    "full_spectrum": es.full_spectrum,
                    "normal": es.is_normal(),
                }),
                Err(e) => json!({ "error": e.to_string() }),
            };
            v
        })
        .collect();
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for s in &search.seeds {
        *counts.entry(to_value(&s.outcome).as_str().unwrap_or("?").to_string()).or_default() += 1;
    }
    Ok(Outcome::json(json!({
        "side": side,
        "gamma": ls.gamma(),
        "transform": transform_json(tr),
        "equilibria": eqs,
        "seeds": counts,
    })))
}

pub fn cmd_pullback(l: &Loaded, delta: Option<f64>) -> Result<Outcome, Failure> {
    let block = l
        .config
        .pullback
        .as_ref()
        .ok_or_else(|| Failure::usage("config has no `pullback` block"))?;
    let tol = &l.config.tolerances;
    let delta = delta.or(block.delta).unwrap_or(tol.delta);
    let resolved = l.resolve_transform()?;
    let tr = resolved.transform();
    let sys = assemble(&l.field, &l.forcing, tr)?;
    let (Some(ls_p), Some(ls_f)) = (sys.limit_system(Side::Past), sys.limit_system(Side::Future)) else {
        return Err(Failure::usage("pullback needs both ends compactified"));
    };
    let bounds: Vec<(f64, f64)> = block.bounds.iter().map(|b| (b[0], b[1])).collect();
    let past_eq = match &block.past {
        Some(guess) => refine(&ls_p, guess, tol)?,
        None => {
            let sinks: Vec<_> = find_equilibria(&ls_p, &bounds, block.grid, tol)?
                .equilibria
                .into_iter()
                .filter(|e| e.kind == EquilibriumType::Sink)
                .collect();
            match <[_; 1]>::try_from(sinks) {
                Ok([e]) => e,
                Err(v) => {
                    return Err(Failure::usage(format!(
                        "found {} past sinks in the box; give `pullback.past`",
                        v.len()
                    )))
                }
            }
        }
    };
    let past = embed(&past_eq, &sys, Side::Past, tol)?;
    let futures: Vec<_> = find_equilibria(&ls_f, &bounds, block.grid, tol)?
        .equilibria
        .iter()
        .filter_map(|e| embed(e, &sys, Side::Future, tol).ok())
        .collect();
    let trace = pullback_trace(&sys, &past, &futures, delta, &l.config.controls, tol)?;
    let report = json!({
        "transform": transform_json(tr),
        "delta": delta,
        "past": past,
        "futures": futures,
        "omega": trace.omega,
        "verdict": match trace.omega {
            Some(i) => json!({ "tracked": i, "x": futures[i].base.x, "type": futures[i].base.kind }),
            None => json!("none"),
        },
        "terminus": trace.terminus,
        "termination": trace.termination,
        "branch_termination": trace.branch.termination,
        "stats": trace.branch.stats,
    });
    Ok(Outcome {
        report,
        files: vec![("trajectory.csv", csv_of(&trace.branch))],
        text: None,
    })
}

pub struct TipOverrides {
    pub r_lo: Option<f64>,
    pub r_hi: Option<f64>,
    pub tol: Option<f64>,
    pub batch: Option<usize>,
}

pub fn rate_problem(l: &Loaded) -> Result<RateProblem, Failure> {
    let block = l
        .config
        .tip
        .as_ref()
        .ok_or_else(|| Failure::usage("config has no `tip` block"))?;
    let resolved = l.resolve_transform()?;
    let transform = match resolved {
        Resolved::Recommended(r) => r.transform,
        Resolved::Given(t) => t,
    };
    Ok(RateProblem {
        field: l.field.clone(),
        forcing: l.forcing.clone(),
        transform,
        past: block.past.clone(),
        target: block.target.clone(),
        delta: block.delta.unwrap_or(l.config.tolerances.delta),
        controls: l.config.controls,
        tol: l.config.tolerances,
    })
}

pub fn cmd_tip(l: &Loaded, o: TipOverrides) -> Result<Outcome, Failure> {
    let rp = rate_problem(l)?;
    let block = l.config.tip.as_ref().expect("checked by rate_problem");
    let r_lo = o.r_lo.unwrap_or(block.r_lo);
    let r_hi = o.r_hi.unwrap_or(block.r_hi);
    let tol = o.tol.unwrap_or(block.tol);
    let res = match o.batch.or(block.batch) {
        Some(b) if b > 1 => critical_rate_batch(&rp, r_lo, r_hi, tol, b),
        _ => critical_rate(&rp, r_lo, r_hi, tol),
    };
    match res {
        Ok(cr) => {
            let probes = to_value(&cr.probes);
            Ok(Outcome {
                report: json!({
                    "r_star": cr.r_star,
                    "bracket": [cr.bracket.0, cr.bracket.1],
                    "tol": tol,
                    "probes": probes,
                    "warnings": cr.warnings,
                }),
                files: vec![("probes.json", super::pretty(&probes) + "\n")],
                text: None,
            })
        }
        Err(e) => {
            let report = match &e {
                ConnectError::NoSignChange { r_lo, r_hi, verdict } => json!({
                    "error": "NoSignChange",
                    "r_lo": r_lo,
                    "r_hi": r_hi,
                    "verdict": verdict,
                }),
                ConnectError::UndecidedProbe { r } => json!({ "error": "UndecidedProbe", "r": r }),
                other => json!({ "error": other.to_string() }),
            };
            Err(Failure::from(e).with_report(report))
        }
    }
}

fn run_command(l: &Loaded, command: &str) -> Result<Outcome, Failure> {
    match command {
        "check" => cmd_check(l),
        "simulate" => cmd_simulate(l, None, None),
        "equilibria" => cmd_equilibria(l, None),
        "pullback" => cmd_pullback(l, None),
        "tip" => cmd_tip(
            l,
            TipOverrides {
                r_lo: None,
                r_hi: None,
                tol: None,
                batch: None,
            },
        ),
        other => Err(Failure::usage(format!("unknown command `{other}`"))),
    }
}

fn unknown_scenario(name: &str) -> Failure {
    let names: Vec<&str> = scenarios::SCENARIOS.iter().map(|s| s.name).collect();
    Failure::usage(format!("UnknownScenario: `{name}` (available: {})", names.join(", ")))
}

pub fn cmd_scenario(action: ScenarioAction, set: &[(String, f64)]) -> Result<Outcome, Failure> {
    match action {
        ScenarioAction::List => {
            let list: Vec<Value> = scenarios::SCENARIOS
                .iter()
                .map(|s| json!({ "name": s.name, "command": s.command, "summary": s.summary }))
                .collect();
            let text: String = scenarios::SCENARIOS.iter().map(|s| format!("{}\n", s.name)).collect();
            Ok(Outcome {
                report: Value::Array(list),
                files: Vec::new(),
                text: Some(text),
            })
        }
        ScenarioAction::Show { name } => {
            let mut c = scenarios::config(&name).ok_or_else(|| unknown_scenario(&name))?;
            apply_overrides(&mut c, set);
            Ok(Outcome::json(to_value(&c)))
        }
        ScenarioAction::Run { name, command } => {
            let sc = scenarios::find(&name).ok_or_else(|| unknown_scenario(&name))?;
            let mut c = scenarios::config(&name).expect("listed scenarios have configs");
            apply_overrides(&mut c, set);
            let l = c.load()?;
            run_command(&l, command.as_deref().unwrap_or(sc.command))
        }
    }
}
