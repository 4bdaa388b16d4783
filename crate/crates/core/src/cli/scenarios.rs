//! Built-in example problems.

use serde_json::json;

use super::config::ProblemConfig;

pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub command: &'static str,
}

pub const SCENARIOS: [Scenario; 3] = [
    Scenario {
        name: "linear-tanh",
        summary: "x' = -x + tanh(t); pullback attractor from the past sink to (1, 1)",
        command: "pullback",
    },
    Scenario {
        name: "quadratic-rtip",
        summary: "x' = (x + G(rt))^2 - 1 with G = 1.5(tanh(t/2) + 1); critical rate",
        command: "tip",
    },
    Scenario {
        name: "radial-steady",
        summary: "radial steady states u'' = (1-N)/t u' - (V + 1/(1+t^2)) u - (u - u^3), right-sided",
        command: "check",
    },
];

pub fn find(name: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.name == name)
}

pub fn config(name: &str) -> Option<ProblemConfig> {
    let v = match name {
        "linear-tanh" => json!({
            "n": 1, "d": 1,
            "field": ["-x1 + Gamma1"],
            "forcing": ["tanh(t)"],
            "transform": {"kind": "exp-two-sided", "alpha": 1.0},
            "simulate": {"x0": [-1.0], "s0": -0.999},
            "equilibria": {"side": "future", "box": [[-5.0, 5.0]], "grid": 11},
            "pullback": {"past": [-1.0], "box": [[-5.0, 5.0]], "grid": 11},
            "tip": {"r_lo": 0.1, "r_hi": 10.0, "past": [-1.0], "target": [1.0]}
        }),
        "quadratic-rtip" => json!({
            "n": 1, "d": 1,
            "field": ["(x1 + Gamma1)^2 - 1"],
            "forcing": ["1.5*(tanh(t/2) + 1)"],
            "transform": {"kind": "exp-two-sided", "alpha": 1.0},
            "simulate": {"x0": [-1.0], "s0": -0.999},
            "equilibria": {"side": "future", "box": [[-10.0, 10.0]], "grid": 11},
            "pullback": {"past": [-1.0], "box": [[-10.0, 10.0]], "grid": 11},
            "tip": {"r_lo": 0.1, "r_hi": 10.0, "tol": 1e-4, "past": [-1.0], "target": [-4.0]}
        }),
        "radial-steady" => json!({
            "n": 2, "d": 2,
            "field": ["x2", "Gamma1*x2 - Gamma2*x1 - (x1 - x1^3)"],
            "forcing": ["(1 - N)/t", "-(Vp + 1/(1 + t^2))"],
            "parameters": {"N": 3.0, "Vp": 2.0},
            "sides": "future-only",
            "transform": "auto",
            "simulate": {"x0": [0.1, 0.0], "s0": 0.5},
            "equilibria": {"side": "future", "box": [[-2.0, 2.0], [-2.0, 2.0]], "grid": 9}
        }),
        _ => return None,
    };
    Some(serde_json::from_value(v).expect("built-in scenario configs are valid"))
}
