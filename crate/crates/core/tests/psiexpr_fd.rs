use lef_core::psiexpr::{eval_scaled, eval_tower, parse};
use proptest::prelude::*;

/// Central differences of the (k-1)-th tower entry against the k-th.
fn fd_mismatch(text: &str, r: f64) -> Option<f64> {
    let ast = parse(text).unwrap();
    let h = 1e-5;
    let c = eval_tower(&ast, r).ok()?;
    let lo = eval_tower(&ast, r - h).ok()?;
    let hi = eval_tower(&ast, r + h).ok()?;
    if c.0.iter().chain(lo.0.iter()).chain(hi.0.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    let scale = c.0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let worst = (1..5)
        .map(|k| ((hi.deriv(k - 1) - lo.deriv(k - 1)) / (2.0 * h) - c.deriv(k)).abs() / scale)
        .fold(0.0, f64::max);
    Some(worst)
}

#[test]
fn named_fixtures_agree_with_differences() {
    for text in [
        "sinh(r)",
        "r*exp(r^2)",
        "r + 0.8*sin(r)^3",
        "r*exp(exp(r)-1-r)",
        "sqrt(1+r^2)*log(1+r)",
        "cos(r)/(2+sin(r))",
    ] {
        for r in [0.3, 1.0, 2.5] {
            let err = fd_mismatch(text, r).unwrap();
            assert!(err < 1e-7, "{text} at {r}: {err}");
        }
    }
}

#[test]
fn scaled_tower_matches_plain_tower() {
    let ast = parse("r*exp(exp(r)-1-r)").unwrap();
    for r in [0.5, 1.0, 2.0] {
        let plain = eval_tower(&ast, r).unwrap();
        let scaled = eval_scaled(&ast, r).unwrap().to_derivs();
        for k in 0..5 {
            let rel = (plain.deriv(k) - scaled.deriv(k)).abs() / plain.deriv(k).abs();
            assert!(rel < 1e-12, "k={k} r={r}: {rel}");
        }
    }
}

fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![Just("r".to_string()), (0.5f64..2.0).prop_map(|c| format!("{c:.3}"))];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})+({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})*({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})/(1+({b})^2)")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(0.3*({a}))")),
            inner.clone().prop_map(|a| format!("sinh(0.3*({a}))")),
            inner.clone().prop_map(|a| format!("sqrt(1+({a})^2)")),
            inner.prop_map(|a| format!("({a})^3")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_expressions_agree_with_differences(text in expr(), r in 0.2f64..2.0) {
        if let Some(err) = fd_mismatch(&text, r) {
            prop_assert!(err < 1e-5, "{} at {}: {}", text, r, err);
        }
    }

    #[test]
    fn display_reparses_to_same_values(text in expr(), r in 0.2f64..2.0) {
        let ast = parse(&text).unwrap();
        let again = parse(&ast.to_string()).unwrap();
        prop_assert_eq!(eval_tower(&ast, r).ok(), eval_tower(&again, r).ok());
    }
}
