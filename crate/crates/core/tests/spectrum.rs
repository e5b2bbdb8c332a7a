use lef_core::radialode::{integrate, CauchyProblem};
use lef_core::spectrum::{big_lambda1, grigoryan_bound, lambda1_ball, mu1_stability, RadialOperator};
use lef_core::{build_model, ModelSpec};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn euclidean_balls_hit_bessel_zeros() {
    // first zeros of J_1 and J_{3/2}
    let j1 = 3.831_705_970_207_512;
    let j32: f64 = 4.493_409_457_909_064;
    let d4 = lambda1_ball(&build_model(&ModelSpec::euclidean(4)).unwrap(), 1.0, 400).unwrap();
    let d5 = lambda1_ball(&build_model(&ModelSpec::euclidean(5)).unwrap(), 2.0, 400).unwrap();
    assert!(rel(d4.value, j1 * j1) < 1e-7, "{}", d4.value);
    assert!(rel(d5.value, (j32 / 2.0).powi(2)) < 1e-7, "{}", d5.value);
}

#[test]
fn hyperbolic_three_ball_closed_form() {
    // sin(πr/R)/sinh r is the ground state on B_R ⊂ H³
    let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
    for r in [0.5, 3.0, 10.0] {
        let exact = 1.0 + (std::f64::consts::PI / r).powi(2);
        let got = lambda1_ball(&m, r, 400).unwrap();
        assert!(rel(got.value, exact) < 1e-7, "R={r}: {} vs {exact}", got.value);
        assert!(got.error_estimate < 1e-4 * exact);
    }
}

#[test]
fn graded_mesh_for_steep_core() {
    let m = build_model(&ModelSpec::hyperbolic(12)).unwrap();
    let t = integrate(&CauchyProblem::new(&m, 8.0, 10.0).unwrap(), 8.0, 1e-10).unwrap();
    let op = RadialOperator::stability(&m, &t, 8.0, 200).unwrap();
    let plan = op.resolved_mesh().unwrap();
    assert!(plan.core.is_some(), "steep core should select the graded mesh");
    let mu = op.smallest().unwrap().value;
    // the potential only lowers the spectrum
    assert!(mu.is_finite() && mu < lambda1_ball(&m, 8.0, 200).unwrap().value);
}

#[test]
fn big_lambda_on_fast_decaying_solution() {
    let m = build_model(&ModelSpec::custom("r*exp(exp(r)-1-r)", 3)).unwrap();
    let t = integrate(&CauchyProblem::new(&m, 3.0, 1.0).unwrap(), 10.0, 1e-10).unwrap();
    // u tends to a positive constant here, so the weighted problem is not posed
    assert!(big_lambda1(&m, &t, &[2.0, 4.0]).is_err());
}

#[test]
fn grigoryan_bound_is_below_lambda1() {
    for spec in [ModelSpec::hyperbolic(5), ModelSpec::exp_power(1.0, 4)] {
        let m = build_model(&spec).unwrap();
        for r in [1.0, 3.0] {
            let b = grigoryan_bound(&m, r).unwrap();
            let l = lambda1_ball(&m, r, 400).unwrap().value;
            assert!(b.bound <= l && b.bound > 0.0, "{spec:?} R={r}: {} vs {l}", b.bound);
            assert!(b.argmax_r > 0.0 && b.argmax_r <= r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lambda1_decreases_with_radius(r in 0.3f64..6.0, n in 3u32..7) {
        let m = build_model(&ModelSpec::hyperbolic(n)).unwrap();
        let a = lambda1_ball(&m, r, 200).unwrap().value;
        let b = lambda1_ball(&m, 1.25 * r, 200).unwrap().value;
        prop_assert!(b < a);
    }

    #[test]
    fn zero_solution_reproduces_laplacian(r in 0.5f64..8.0) {
        let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
        let t = integrate(&CauchyProblem::new(&m, 3.0, 0.0).unwrap(), 8.0, 1e-9).unwrap();
        let mu = mu1_stability(&m, &t, r, 200).unwrap().value;
        let lam = lambda1_ball(&m, r, 200).unwrap().value;
        prop_assert!(rel(mu, lam) <= 1e-8);
    }
}
