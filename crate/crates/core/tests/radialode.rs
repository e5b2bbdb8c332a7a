use lef_core::radialode::{first_intersection, integrate, tail_limits, CauchyProblem};
use lef_core::{build_model, ModelSpec};

#[test]
fn scaled_bubble_family() {
    // u(r) = α(1 + α⁴r²/3)^{-1/2} solves the critical equation in R³ for every α
    let m = build_model(&ModelSpec::euclidean(3)).unwrap();
    for alpha in [0.5, 2.0] {
        let t = integrate(&CauchyProblem::new(&m, 5.0, alpha).unwrap(), 20.0, 1e-10).unwrap();
        for i in 0..=200 {
            let r = i as f64 * 0.1;
            let exact = alpha / (1.0 + alpha.powi(4) * r * r / 3.0).sqrt();
            let (u, _) = t.eval(r);
            assert!(
                ((u - exact) / exact).abs() < 1e-7,
                "alpha={alpha} r={r}: {u} vs {exact}"
            );
        }
        assert!(t.u_zeros().is_empty());
    }
}

#[test]
fn events_match_sign_changes() {
    let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
    let t = integrate(&CauchyProblem::new(&m, 3.0, 10.0).unwrap(), 30.0, 1e-10).unwrap();
    let changes = t.u().windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    assert!(changes > 0);
    assert_eq!(t.u_zeros().len(), changes);
    for z in t.u_zeros() {
        assert!(t.eval(z).0.abs() < 1e-8);
    }
    for z in t.uprime_zeros() {
        assert!(t.eval(z).1.abs() < 1e-8);
    }
}

#[test]
fn csv_and_events_shapes() {
    let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
    let t = integrate(&CauchyProblem::new(&m, 3.0, 5.0).unwrap(), 5.0, 1e-9).unwrap();
    let csv = t.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,u,uprime"));
    assert_eq!(lines.count(), t.r().len());
    let ev = t.events_json();
    assert!(ev["u_zeros"].is_array() && ev["uprime_zeros"].is_array());
}

#[test]
fn tolerance_refinement_converges() {
    let m = build_model(&ModelSpec::exp_power(1.0, 3)).unwrap();
    let p = CauchyProblem::new(&m, 3.0, 2.0).unwrap();
    let coarse = integrate(&p, 10.0, 1e-7).unwrap();
    let fine = integrate(&p, 10.0, 1e-11).unwrap();
    for r in [1.0, 5.0, 10.0] {
        assert!((coarse.eval(r).0 - fine.eval(r).0).abs() < 1e-5);
    }
}

#[test]
fn small_solutions_do_not_cross() {
    let m = build_model(&ModelSpec::hyperbolic(3)).unwrap();
    let a = integrate(&CauchyProblem::new(&m, 3.0, 0.1).unwrap(), 50.0, 1e-10).unwrap();
    let b = integrate(&CauchyProblem::new(&m, 3.0, 0.2).unwrap(), 50.0, 1e-10).unwrap();
    assert_eq!(first_intersection(&b, &a).unwrap(), None);
}

#[test]
fn positive_solution_on_fast_model_has_positive_limit() {
    let m = build_model(&ModelSpec::custom("r*exp(exp(r)-1-r)", 3)).unwrap();
    let t = integrate(&CauchyProblem::new(&m, 3.0, 1.0).unwrap(), 30.0, 1e-10).unwrap();
    let lim = tail_limits(&t, &m).unwrap();
    assert!(t.u_zeros().is_empty());
    assert!(lim.u_limit.unwrap() > 0.5);
}
