use approx::assert_abs_diff_eq;
use contact_hj::{
    apriori_bounds, energy_drift_residual, flow, shoot_minimizer, vector_field, BuiltinSystem, ContactState,
    ContactSystem, Family, FamilyParams, ShootOptions,
};

fn discounted_free() -> BuiltinSystem {
    BuiltinSystem::new(Family::Discounted, &FamilyParams::default().with_lambda(0.5).with_amp(0.0)).unwrap()
}

fn classical() -> BuiltinSystem {
    BuiltinSystem::new(Family::Classical, &FamilyParams::default()).unwrap()
}

#[test]
fn vector_field_examples() {
    let sys = discounted_free();
    let (dx, du, dp) = vector_field(&sys, &ContactState::new([0.0, 0.0], 1.0, [2.0, 0.0]));
    assert_abs_diff_eq!(dx[0], 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(du, 1.5, epsilon = 1e-12);
    assert_abs_diff_eq!(dp[0], -1.0, epsilon = 1e-12);

    let (dx, du, dp) = vector_field(&sys, &ContactState::new([0.4, 0.0], 0.8, [0.0, 0.0]));
    assert_eq!((dx[0], dp[0]), (0.0, 0.0));
    assert_abs_diff_eq!(du, -0.4, epsilon = 1e-12);

    let (dx, du, dp) = vector_field(&classical(), &ContactState::new([0.0, 0.0], 0.0, [1.0, 0.0]));
    assert_eq!((dx[0], du, dp[0]), (1.0, 0.5, 0.0));
}

#[test]
fn flow_examples() {
    let tr = flow(&discounted_free(), &ContactState::new([0.0, 0.0], 1.0, [0.0, 0.0]), 1.0, 1e-3).unwrap();
    assert_abs_diff_eq!(tr.last().u, (-0.5f64).exp(), epsilon = 1e-6);

    let sys = classical();
    let tr = flow(&sys, &ContactState::new([0.0, 0.0], 0.0, [1.0, 0.0]), 1.0, 1e-3).unwrap();
    let end = tr.last();
    assert!(end.x[0] < 1e-9 || end.x[0] > 1.0 - 1e-9, "x wraps to 0, got {}", end.x[0]);
    assert_abs_diff_eq!(end.u, 0.5, epsilon = 1e-9);
    assert_abs_diff_eq!(end.p[0], 1.0, epsilon = 1e-12);

    let tr = flow(&sys, &ContactState::new([0.3, 0.0], -0.2, [-1.7, 0.0]), 1.0, 1e-3).unwrap();
    let h0 = sys.hamiltonian(&tr.states[0].x, tr.states[0].u, &tr.states[0].p);
    for s in &tr.states {
        assert_abs_diff_eq!(sys.hamiltonian(&s.x, s.u, &s.p), h0, epsilon = 1e-8);
    }
}

#[test]
fn energy_drift_examples() {
    let tr = flow(&classical(), &ContactState::new([0.1, 0.0], 0.0, [0.7, 0.0]), 1.0, 1e-3).unwrap();
    assert!(energy_drift_residual(&classical(), &tr).unwrap() <= 1e-8);

    let sys = BuiltinSystem::new(Family::Discounted, &FamilyParams::default()).unwrap();
    let s0 = ContactState::new([0.1, 0.0], 0.3, [1.2, 0.0]);
    let coarse = energy_drift_residual(&sys, &flow(&sys, &s0, 1.0, 1e-3).unwrap()).unwrap();
    let fine = energy_drift_residual(&sys, &flow(&sys, &s0, 1.0, 5e-4).unwrap()).unwrap();
    assert!(coarse <= 1e-4, "{coarse}");
    let ratio = coarse / fine;
    assert!((3.0..5.0).contains(&ratio), "second order expected, ratio {ratio}");

    // H = 0 is invariant: p = 1, u = -p^2 / (2 lambda)
    let sys = discounted_free();
    let tr = flow(&sys, &ContactState::new([0.0, 0.0], -1.0, [1.0, 0.0]), 1.0, 1e-3).unwrap();
    for s in &tr.states {
        assert!(sys.hamiltonian(&s.x, s.u, &s.p).abs() <= 1e-6);
    }
}

#[test]
fn too_short_trajectory_is_rejected() {
    let sys = classical();
    let tr = flow(&sys, &ContactState::new([0.0, 0.0], 0.0, [1.0, 0.0]), 1e-3, 1e-3).unwrap();
    assert!(energy_drift_residual(&sys, &tr).is_err());
}

#[test]
fn shooting_examples() {
    let opts = ShootOptions::default();
    let sys = classical();
    let r = shoot_minimizer(&sys, &[0.0, 0.0], 0.0, &[0.2, 0.0], 1.0, &opts).unwrap();
    assert_abs_diff_eq!(r.u_end(), 0.02, epsilon = 1e-6);
    assert_abs_diff_eq!(r.best().p0[0], 0.2, epsilon = 1e-6);

    let r = shoot_minimizer(&sys, &[0.0, 0.0], 0.0, &[0.9, 0.0], 1.0, &opts).unwrap();
    assert_abs_diff_eq!(r.u_end(), 0.005, epsilon = 1e-6);
    assert_abs_diff_eq!(r.best().p0[0], -0.1, epsilon = 1e-6);
    // further windings are reported too, all with larger terminal values
    assert!(r.branches.len() > 1);
    assert!(r.branches.windows(2).all(|w| w[0].u_end <= w[1].u_end));

    let r = shoot_minimizer(&discounted_free(), &[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0, &opts).unwrap();
    assert_abs_diff_eq!(r.u_end(), 0.606531, epsilon = 1e-6);
}

#[test]
fn shooting_rejects_short_horizons() {
    let r = shoot_minimizer(&classical(), &[0.0, 0.0], 0.0, &[0.2, 0.0], 1e-4, &ShootOptions::default());
    assert!(r.is_err());
}

#[test]
fn apriori_examples() {
    let b = apriori_bounds(&discounted_free(), -1.0, 1.0, 0.5, 1.0).unwrap();
    assert_abs_diff_eq!(b.k, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(b.a_sup, 0.5, epsilon = 1e-9);
    assert_abs_diff_eq!(b.b_inf, 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(b.c, 0.5f64.exp() + (0.5f64.exp() - 1.0), epsilon = 1e-5);
    assert!(b.b_inf <= b.a_sup && b.c >= 1.0 && b.k_min >= 0.0 && b.q > 0.0);

    let b = apriori_bounds(&classical(), -1.0, 1.0, 0.5, 1.0).unwrap();
    assert_abs_diff_eq!(b.c, 1.5, epsilon = 1e-9);

    assert!(apriori_bounds(&classical(), 1.0, -1.0, 0.5, 1.0).is_err());
    assert!(apriori_bounds(&classical(), -1.0, 1.0, 1.0, 1.0).is_err());
}
