use std::collections::HashMap;

use compactode::expr::Expr;
use compactode::extended::{assemble, CompactifiedSystem, ExtendedState};
use compactode::odeint::{integrate, Controls};
use compactode::problem::{DeclaredLimits, ForcingProfile, Parameters, Sides, VectorFieldDef};
use compactode::transform::{Sidedness, Transform};
use proptest::prelude::*;

const SMOOTH: [&str; 6] = [
    "sin(x)*exp(-x^2/3)",
    "tanh(2*x) + x^3",
    "ln(1 + x^2)",
    "sqrt(2 + cos(x))",
    "sech(x)^2*x - 1/(2 + x^2)",
    "exp(x/2)*cos(3*x)",
];

fn system(field: &[&str], forcing: &[&str], tr: Transform) -> CompactifiedSystem {
    let params = Parameters::new();
    let f = VectorFieldDef::parse(field, forcing.len(), &params).unwrap();
    let p = ForcingProfile::parse(forcing, &params, Sides::TwoSided, DeclaredLimits::default()).unwrap();
    assemble(&f, &p, &tr).unwrap()
}

fn transforms() -> impl Strategy<Value = Transform> {
    prop_oneof![
        (0.3f64..3.0).prop_map(|a| Transform::exponential(a, Sidedness::TwoSided).unwrap()),
        (0.3f64..3.0).prop_map(|a| Transform::algebraic(a, Sidedness::TwoSided).unwrap()),
        (0.3f64..3.0, 0.3f64..3.0).prop_map(|(a, b)| Transform::exponential_two_rate(a, b).unwrap()),
        (0.5f64..2.0, 0.5f64..2.0).prop_map(|(a, b)| Transform::algebraic_two_rate(a, b).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn derivatives_match_central_differences(i in 0usize..SMOOTH.len(), x in -3.0f64..3.0) {
        let e = Expr::parse(SMOOTH[i]).unwrap();
        let at = |v: f64| HashMap::from([("x".to_string(), v)]);
        let d = e.deriv("x", &at(x)).unwrap();
        let h = 1e-5;
        let fd = (e.eval(&at(x + h)).unwrap() - e.eval(&at(x - h)).unwrap()) / (2.0 * h);
        prop_assert!((d - fd).abs() / d.abs().max(1.0) < 1e-6, "{} at {x}: {d} vs {fd}", SMOOTH[i]);
    }

    #[test]
    fn inverse_pair(tr in transforms(), u in -0.999f64..0.999, t in -5.0f64..5.0) {
        let s = u;
        let back = tr.g(tr.h(s).unwrap());
        prop_assert!((back - s).abs() < 1e-10);
        let t2 = tr.h(tr.g(t)).unwrap();
        prop_assert!((t2 - t).abs() < 1e-9 * t.abs().max(1.0), "{t} -> {t2}");
    }

    #[test]
    fn speed_is_positive_inside_and_zero_at_ends(tr in transforms(), s in -0.999f64..0.999) {
        prop_assert!(tr.gamma(s) > 0.0);
        prop_assert_eq!(tr.gamma(-1.0), 0.0);
        prop_assert_eq!(tr.gamma(1.0), 0.0);
        // γ = 1/h'
        prop_assert!((tr.gamma(s) * tr.h_prime(s).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn end_subspaces_are_invariant(x in -2.0f64..2.0, end in prop::bool::ANY, alpha in 0.3f64..0.9) {
        let sys = system(&["(x1 + Gamma1)^2 - 1"], &["1.5*(tanh(t/2) + 1)"], Transform::exponential(alpha, Sidedness::TwoSided).unwrap());
        let s = if end { 1.0 } else { -1.0 };
        let (_, sdot) = sys.rhs(&ExtendedState { x: vec![x], s }).unwrap();
        prop_assert_eq!(sdot, 0.0);
        let c = Controls { t_max: 1.0, escape_radius: 1e6, ..Default::default() };
        let tr = integrate(&sys, &[x], s, &c).unwrap();
        prop_assert!(tr.samples.iter().all(|(_, y)| y[1] == s));
    }

    #[test]
    fn jacobian_matches_finite_differences(x1 in -1.5f64..1.5, x2 in -1.5f64..1.5, s in 0.05f64..0.95) {
        let sys = system(
            &["x2", "Gamma1*x2 - Gamma2*x1 - (x1 - x1^3)"],
            &["-2*t/(1 + t^2)", "-(2 + 1/(1 + t^2))"],
            Transform::algebraic(1.0, Sidedness::TwoSided).unwrap(),
        );
        let y = [x1, x2, s];
        let j = sys.jacobian(&ExtendedState { x: vec![x1, x2], s }).unwrap();
        let f = |y: &[f64]| {
            let (dx, ds) = sys.rhs(&ExtendedState { x: y[..2].to_vec(), s: y[2] }).unwrap();
            [dx[0], dx[1], ds]
        };
        for c in 0..3 {
            let h = 1e-6;
            let mut a = y;
            let mut b = y;
            a[c] += h;
            b[c] -= h;
            let (fa, fb) = (f(&a), f(&b));
            for r in 0..3 {
                let fd = (fa[r] - fb[r]) / (2.0 * h);
                prop_assert!((j[(r, c)] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "J[{r},{c}] = {} vs {fd}", j[(r, c)]);
            }
        }
    }

    #[test]
    fn clock_is_monotone(x0 in -3.0f64..3.0, s0 in -0.99f64..0.99) {
        let sys = system(&["-x1 + Gamma1"], &["tanh(t)"], Transform::exponential(1.0, Sidedness::TwoSided).unwrap());
        let tr = integrate(&sys, &[x0], s0, &Controls { t_max: 30.0, ..Default::default() }).unwrap();
        prop_assert!(tr.samples.windows(2).all(|w| w[1].1[1] >= w[0].1[1]));
        prop_assert!(tr.samples.iter().all(|(_, y)| y[1] <= 1.0));
    }
}
