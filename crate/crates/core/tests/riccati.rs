mod common;

use common::*;
use jumpctl::control_care::{self, care_ops_control, solve_control_care};
use jumpctl::filter_care::{
    self, check_lemma1_identities, solve_filter_care, verify_lmi_feasibility,
};
use jumpctl::msops::BlockCollection;
use jumpctl::{Error, MarkovChannel};
use nalgebra::DMatrix;
use rand::Rng;

/// Positive root of the scalar DARE `x = a²x + c² - a²b²x²/(b²x + d²)` by
/// bisection.
fn scalar_dare(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let f = |x: f64| a * a * x + c * c - a * a * b * b * x * x / (b * b * x + d * d) - x;
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn weighted_scalar(a: f64, b: f64, c: f64, d: f64) -> jumpctl::MjlsModel {
    jumpctl::MjlsModel::new(
        s1(a),
        s1(b),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[c, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, d]),
        s1(1.0),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        1.0,
    )
    .unwrap()
}

#[test]
fn single_mode_control_matches_classical_riccati() {
    let sure = MarkovChannel::bernoulli(1.0).unwrap();
    let mut r = rng(3);
    for _ in 0..20 {
        let (a, b) = (r.random_range(-2.0..2.0), r.random_range(0.3..2.0));
        let (c, d) = (r.random_range(0.3..2.0), r.random_range(0.3..2.0));
        let sol =
            solve_control_care(&weighted_scalar(a, b, c, d), &sure, 1e-14, 1_000_000).unwrap();
        let oracle = scalar_dare(a, b, c, d);
        assert!(
            (sol.x.blocks()[0][(0, 0)] - oracle).abs() <= 1e-9 * oracle.max(1.0),
            "a={a}"
        );
    }
}

#[test]
fn single_mode_matrix_control_matches_long_value_iteration() {
    let sure = MarkovChannel::bernoulli(1.0).unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[1.1, 0.4, -0.2, 0.9]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let m = model_from(a.clone(), b.clone(), DMatrix::identity(2, 2), 1.0);
    let sol = solve_control_care(&m, &sure, 1e-10, 100_000).unwrap();
    // Textbook recursion X ← A'XA + Q - A'XB(B'XB + R)⁻¹B'XA.
    let mut x = DMatrix::identity(2, 2);
    for _ in 0..100_000 {
        let gain = (b.transpose() * &x * &b)
            .add_scalar(1.0)
            .try_inverse()
            .unwrap();
        let next = a.transpose() * &x * &a + DMatrix::identity(2, 2)
            - a.transpose() * &x * &b * gain * b.transpose() * &x * &a;
        let done = (&next - &x).amax() <= 1e-12;
        x = next;
        if done {
            break;
        }
    }
    assert!((&sol.x.blocks()[0] - x).amax() <= 1e-8);
}

#[test]
fn control_solution_properties_on_two_modes() {
    let ch = channel(&[&[0.8, 0.2], &[0.4, 0.6]], &[0.95, 0.6]);
    let a = DMatrix::from_row_slice(2, 2, &[1.05, 0.2, 0.0, 0.95]);
    let m = model_from(
        a,
        DMatrix::from_row_slice(2, 1, &[0.1, 1.0]),
        DMatrix::identity(2, 2),
        1.0,
    );
    let sol = solve_control_care(&m, &ch, 1e-12, 100_000).unwrap();
    assert!(sol.residual <= 1e-11);
    assert!(sol.rho_control < 1.0);
    assert!(sol.x.is_hermitian(1e-12) && sol.x.min_eigenvalue() >= -1e-10);
    let full = jumpctl::msops::control_delay_operator(&ch, &m, &sol.gains).unwrap();
    let rho_full = jumpctl::msops::spectral_radius(&full).unwrap();
    assert!((rho_full - sol.rho_control).abs() <= 1e-9);
    for l in 0..2 {
        let ops = care_ops_control(&m, &ch, &sol.x, l).unwrap();
        let f = &sol.gains[l];
        let lhs =
            &ops.a + &ops.c * f + f.transpose() * ops.c.transpose() + f.transpose() * &ops.b * f;
        assert!((lhs - &ops.x).amax() <= 1e-10 * ops.x.amax().max(1.0));
    }
}

#[test]
fn control_failures_are_reported() {
    let never = MarkovChannel::bernoulli(0.0).unwrap();
    let err =
        solve_control_care(&scalar_model(0.5, 1.0, 1.0, 1.0), &never, 1e-10, 100).unwrap_err();
    assert!(matches!(err, Error::SingularBtilde { mode: 0 }));

    let sure = MarkovChannel::bernoulli(1.0).unwrap();
    let err = solve_control_care(&scalar_model(3.0, 1.0, 1.0, 1.0), &sure, 1e-15, 2).unwrap_err();
    assert!(matches!(err, Error::NotConverged { iterations: 2, .. }));

    // Rare delivery of an unstable plant: the fixed point exists only for
    // the uncontrolled part and the loop cannot be stabilized.
    let rare = MarkovChannel::bernoulli(0.05).unwrap();
    match solve_control_care(&scalar_model(1.5, 1.0, 1.0, 1.0), &rare, 1e-10, 100_000) {
        Err(Error::NotConverged { .. }) => {}
        Err(Error::NonStabilizing { rho, .. }) => assert!(rho >= 1.0),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn control_cost_cases() {
    let sure = MarkovChannel::bernoulli(1.0).unwrap();
    let mut m = scalar_model(0.5, 1.0, 1.0, 2.5);
    let x = BlockCollection::new(vec![s1(3.0)]).unwrap();
    assert!((control_care::optimal_control_cost(&sure, &m, &x) - 7.5).abs() < 1e-14);
    m.g = DMatrix::zeros(1, 2);
    assert_eq!(control_care::optimal_control_cost(&sure, &m, &x), 0.0);
}

#[test]
fn gain_iteration_agrees_with_value_iteration() {
    let mut r = rng(2024);
    for _ in 0..15 {
        let (m, ch) = random_detectable(&mut r);
        let sol = solve_filter_care(&m, &ch, 1e-12, 500).unwrap();
        let vi = filter_care::filter_value_iteration(&m, &ch, 1e-14, 2_000_000).unwrap();
        assert!(sol.y.max_abs_diff(&vi) <= 1e-8 * sol.y.amax().max(1.0));
        assert!(sol.rho_filter < 1.0);
        assert!(sol
            .trace_history
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0)));
        let report = verify_lmi_feasibility(&m, &ch, &sol.y).unwrap();
        assert!(report.feasible && report.schur_feasible && report.care_residual <= 1e-9);
    }
}

#[test]
fn gain_iteration_is_monotone_in_the_matrix_order() {
    let mut r = rng(77);
    let (m, ch) = random_detectable(&mut r);
    let (m0, _) = filter_care::find_initial_detectable_gain(&m, &ch).unwrap();
    let mut y_prev = filter_care::error_covariance_for_gain(&m, &ch, &m0).unwrap();
    for _ in 0..20 {
        let gains = filter_care::filtering_gains(&m, &ch, &y_prev).unwrap();
        let y = filter_care::error_covariance_for_gain(&m, &ch, &gains).unwrap();
        assert!((&y_prev - &y).min_eigenvalue() >= -1e-10 * y.amax().max(1.0));
        y_prev = y;
    }
}

#[test]
fn maximal_solution_dominates_feasible_points() {
    let mut r = rng(5);
    for _ in 0..10 {
        let (m, ch) = random_detectable(&mut r);
        let sol = solve_filter_care(&m, &ch, 1e-12, 500).unwrap();
        // Error covariances of arbitrary detecting gains are feasible.
        let (m0, _) = filter_care::find_initial_detectable_gain(&m, &ch).unwrap();
        let y0 = filter_care::error_covariance_for_gain(&m, &ch, &m0).unwrap();
        let shrunk = y0.map(|b| b * 0.5);
        for candidate in [&shrunk, &sol.y.map(|b| b * 0.9)] {
            let rep = verify_lmi_feasibility(&m, &ch, candidate).unwrap();
            if rep.feasible {
                assert!(rep.objective <= sol.y.trace_sum() + 1e-8);
            }
        }
        let above = verify_lmi_feasibility(
            &m,
            &ch,
            &sol.y.map(|b| b + DMatrix::identity(b.nrows(), b.nrows())),
        )
        .unwrap();
        assert!(!above.schur_feasible);
    }
}

#[test]
fn dual_scalar_instances_share_the_fixed_point() {
    let sure = MarkovChannel::bernoulli(1.0).unwrap();
    let m = scalar_model(0.5, 1.0, 1.0, 1.0);
    let x = solve_control_care(&m, &sure, 1e-13, 10_000).unwrap();
    let y = solve_filter_care(&m, &sure, 1e-13, 100).unwrap();
    assert!((x.x.blocks()[0][(0, 0)] - y.y.blocks()[0][(0, 0)]).abs() <= 1e-10);
    assert!((x.gains[0][(0, 0)] - y.gains[0][(0, 0)]).abs() <= 1e-10);
}

#[test]
fn gain_comparison_identities_on_random_instances() {
    let mut r = rng(99);
    for _ in 0..25 {
        let (m, ch) = random_detectable(&mut r);
        let (m_hat, _) = filter_care::find_initial_detectable_gain(&m, &ch).unwrap();
        let y_hat = filter_care::error_covariance_for_gain(&m, &ch, &m_hat).unwrap();
        let y = random_collection(&mut r, ch.modes(), m.nx(), true);
        let gains_hat = filter_care::filtering_gains(&m, &ch, &y_hat).unwrap();
        let x_hat = filter_care::error_covariance_for_gain(&m, &ch, &gains_hat).ok();
        let res = check_lemma1_identities(&m, &ch, &y, &y_hat, &m_hat, x_hat.as_ref()).unwrap();
        assert!(res.max() <= 1e-9 * res.scale, "{res:?}");
        assert!(res.item2.is_some());
    }
}

#[test]
fn third_identity_vanishes_at_the_optimal_gain() {
    let mut r = rng(12);
    let (m, ch) = random_detectable(&mut r);
    let sol = solve_filter_care(&m, &ch, 1e-13, 500).unwrap();
    let y = random_collection(&mut r, ch.modes(), m.nx(), true);
    let res = check_lemma1_identities(&m, &ch, &y, &sol.y, &sol.gains, Some(&sol.y)).unwrap();
    assert!(res.item3.unwrap() <= 1e-9 * res.scale);
}

#[test]
fn filter_cost_forms() {
    let ch = channel(&[&[0.8, 0.2], &[0.4, 0.6]], &[0.9, 0.5]);
    let y = BlockCollection::new(vec![s1(2.0), s1(4.0)]).unwrap();
    let pi = ch.stationary();
    assert!(
        (filter_care::optimal_filter_cost(&ch, &y) - (2.0 * pi[0] + 4.0 * pi[1])).abs() < 1e-14
    );
    assert_eq!(filter_care::stationary_error_power(&y), 6.0);
    let single = MarkovChannel::bernoulli(0.5).unwrap();
    let y1 =
        BlockCollection::new(vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0])]).unwrap();
    assert!((filter_care::optimal_filter_cost(&single, &y1) - 4.0).abs() < 1e-14);
}
