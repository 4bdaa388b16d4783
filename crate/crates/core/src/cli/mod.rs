//! Command-line front end.
//!
//! Exit codes: 0 success, 1 config or usage error, 2 analytic refusal
//! (conditions, classification, no sign change), 3 numerical failure.

pub mod commands;
pub mod config;
pub mod scenarios;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::conditions::ConditionError;
use crate::connect::ConnectError;
use crate::expr::EvalError;
use crate::extended::ExtendedError;
use crate::invariant::InvariantError;
use crate::odeint::OdeError;
use crate::problem::{ProblemError, Side};
use crate::transform::TransformError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_REFUSED: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    /// Partial report, still written when present.
    pub report: Option<Value>,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            report: None,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    pub fn with_report(mut self, report: Value) -> Self {
        self.report = Some(report);
        self
    }
}

fn problem_code(e: &ProblemError) -> i32 {
    match e {
        ProblemError::Invalid(_) | ProblemError::Expr { .. } => EXIT_USAGE,
        ProblemError::Eval(_) => EXIT_NUMERICAL,
        ProblemError::SideUnavailable(_) | ProblemError::NoLimit { .. } | ProblemError::Disagreement { .. } => {
            EXIT_REFUSED
        }
    }
}

fn transform_code(e: &TransformError) -> i32 {
    match e {
        TransformError::NotMonotone { .. } | TransformError::DegenerateLimits { .. } => EXIT_REFUSED,
        TransformError::Problem(p) => problem_code(p),
        TransformError::Eval(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn condition_code(e: &ConditionError) -> i32 {
    match e {
        ConditionError::SideUnavailable(_) | ConditionError::OutOfDomain { .. } => EXIT_USAGE,
        ConditionError::InsufficientSamples(_)
        | ConditionError::InsufficientDecayWindow(_)
        | ConditionError::Unrecommendable(_) => EXIT_REFUSED,
        ConditionError::Problem(p) => problem_code(p),
        ConditionError::Transform(t) => transform_code(t),
        ConditionError::Eval(_) => EXIT_NUMERICAL,
    }
}

fn extended_code(e: &ExtendedError) -> i32 {
    match e {
        ExtendedError::ConditionsViolated { .. } => EXIT_REFUSED,
        ExtendedError::Invalid(_) | ExtendedError::OutOfDomain { .. } => EXIT_USAGE,
        ExtendedError::Problem(p) => problem_code(p),
        ExtendedError::Condition(c) => condition_code(c),
        ExtendedError::Transform(t) => transform_code(t),
        ExtendedError::Eval(_) => EXIT_NUMERICAL,
    }
}

fn ode_code(e: &OdeError) -> i32 {
    match e {
        OdeError::NonFiniteState { .. } => EXIT_NUMERICAL,
        OdeError::Invalid(_) => EXIT_USAGE,
    }
}

fn invariant_code(e: &InvariantError) -> i32 {
    match e {
        InvariantError::Resonance { .. } | InvariantError::Unsupported(_) => EXIT_REFUSED,
        InvariantError::SeedEscape | InvariantError::Ambiguous(..) | InvariantError::Eval(_) => EXIT_NUMERICAL,
        InvariantError::Invalid(_) => EXIT_USAGE,
        InvariantError::Extended(x) => extended_code(x),
        InvariantError::Ode(o) => ode_code(o),
    }
}

fn connect_code(e: &ConnectError) -> i32 {
    match e {
        ConnectError::NoSignChange { .. } => EXIT_REFUSED,
        ConnectError::UndecidedProbe { .. } => EXIT_NUMERICAL,
        ConnectError::Invalid(_) => EXIT_USAGE,
        ConnectError::Invariant(i) => invariant_code(i),
        ConnectError::Extended(x) => extended_code(x),
        ConnectError::Transform(t) => transform_code(t),
    }
}

macro_rules! failure_from {
    ($($t:ty => $f:expr),* $(,)?) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::new($f(&e), e.to_string())
            }
        }
    )*};
}

failure_from! {
    ProblemError => problem_code,
    TransformError => transform_code,
    ConditionError => condition_code,
    ExtendedError => extended_code,
    OdeError => ode_code,
    InvariantError => invariant_code,
    ConnectError => connect_code,
    EvalError => |_: &EvalError| EXIT_NUMERICAL,
}

/// What a successful command produced.
pub struct Outcome {
    pub report: Value,
    /// Extra files for `--out`, besides `report.json`.
    pub files: Vec<(&'static str, String)>,
    /// Replaces the JSON report on stdout.
    pub text: Option<String>,
}

impl Outcome {
    pub fn json(report: Value) -> Self {
        Self {
            report,
            files: Vec::new(),
            text: None,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SideArg {
    Past,
    Future,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Past => Side::Past,
            SideArg::Future => Side::Future,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "compactode", version, about = "Compactified analysis of asymptotically autonomous ODEs")]
pub struct Cli {
    /// Directory for report.json and data files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override a config parameter.
    #[arg(long = "set", global = true, value_name = "NAME=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check limits, decay class and both transformation conditions.
    Check { config: PathBuf },
    /// Integrate the compactified system from (x0, s0).
    #[command(allow_negative_numbers = true)]
    Simulate {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        s0: Option<f64>,
    },
    /// Equilibria of a limit system and their embeddings.
    Equilibria {
        config: PathBuf,
        #[arg(long)]
        side: Option<SideArg>,
    },
    /// Trace the pullback attractor from the past sink.
    Pullback {
        config: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Bisect for the critical rate.
    Tip {
        config: PathBuf,
        #[arg(long)]
        r_lo: Option<f64>,
        #[arg(long)]
        r_hi: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Built-in scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioAction {
    List,
    /// Print the config of a scenario.
    Show { name: String },
    /// Run a scenario's default (or the given) command.
    Run {
        name: String,
        #[arg(long)]
        command: Option<String>,
    },
}

fn set_threads() {
    if let Some(n) = std::env::var("COMPACTODE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // fails only when a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn write_outputs(dir: &Path, report: Option<&Value>, files: &[(&'static str, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    if let Some(r) = report {
        std::fs::write(dir.join("report.json"), pretty(r) + "\n")?;
    }
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

pub fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("values serialize")
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    set_threads();
    let out = cli.out.clone();
    match commands::execute(cli) {
        Ok(o) => {
            if let Some(dir) = &out {
                if let Err(e) = write_outputs(dir, Some(&o.report), &o.files) {
                    let _ = writeln!(stderr, "error: cannot write to {}: {e}", dir.display());
                    return EXIT_USAGE;
                }
            }
            let _ = match &o.text {
                Some(t) => write!(stdout, "{t}"),
                None => writeln!(stdout, "{}", pretty(&o.report)),
            };
            EXIT_OK
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            if let Some(r) = &f.report {
                let _ = writeln!(stdout, "{}", pretty(r));
                if let Some(dir) = &out {
                    if let Err(e) = write_outputs(dir, Some(r), &[]) {
                        let _ = writeln!(stderr, "error: cannot write to {}: {e}", dir.display());
                    }
                }
            }
            f.code
        }
    }
}
