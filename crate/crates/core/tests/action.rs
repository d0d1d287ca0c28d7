use approx::assert_abs_diff_eq;
use contact_hj::{BuiltinSystem, Direction, Family, FamilyParams, GridFunction, PeriodicGrid, Scheme, Solver};

fn system(family: Family) -> BuiltinSystem {
    BuiltinSystem::new(family, &FamilyParams::default()).unwrap()
}

fn solver(sys: &BuiltinSystem) -> Solver<'_> {
    Solver::new(sys, PeriodicGrid::new(1, 200).unwrap(), Scheme::new(1e-3)).unwrap()
}

#[test]
fn dp_step_examples() {
    let sys = system(Family::Classical);
    let grid = PeriodicGrid::new(1, 50).unwrap();
    let s = Solver::new(&sys, grid, Scheme::new(0.1)).unwrap();
    let out = s.dp_step(&GridFunction::constant(grid, 0.0).unwrap(), Direction::Forward).unwrap();
    assert!(out.values().iter().all(|&v| v == 0.0));

    let sys = system(Family::Discounted);
    let s = Solver::new(&sys, grid, Scheme::new(0.01)).unwrap();
    let out = s.dp_step(&GridFunction::constant(grid, 1.0).unwrap(), Direction::Forward).unwrap();
    for &v in out.values() {
        assert_abs_diff_eq!(v, 1.0 / 1.005, epsilon = 1e-12);
    }
}

#[test]
fn forward_and_backward_closed_forms() {
    let c = system(Family::Classical);
    let s = solver(&c);
    assert_abs_diff_eq!(s.forward_action(&[0.0, 0.0], 0.0, 1.0).unwrap().final_value(&[0.2, 0.0]).unwrap(), 0.02, epsilon = 2e-3);
    assert_abs_diff_eq!(s.backward_action(&[0.2, 0.0], 0.02, 1.0).unwrap().final_value(&[0.0, 0.0]).unwrap(), 0.0, epsilon = 2e-3);

    let d = system(Family::Discounted);
    let s = solver(&d);
    let fwd = s.forward_action(&[0.0, 0.0], 1.0, 1.0).unwrap();
    assert_abs_diff_eq!(fwd.final_value(&[0.0, 0.0]).unwrap(), (-0.5f64).exp(), epsilon = 2e-3);
    let bwd = s.backward_action(&[0.0, 0.0], 1.0, 1.0).unwrap();
    assert_abs_diff_eq!(bwd.final_value(&[0.0, 0.0]).unwrap(), 0.5f64.exp(), epsilon = 3e-3);
}

#[test]
fn seed_slice_and_anchor_snapping() {
    let c = system(Family::Classical);
    let s = solver(&c);
    let f = s.forward_action(&[0.3012, 0.0], 0.25, 0.05).unwrap();
    assert_eq!(f.anchor_node(), 60);
    let seed = f.series().slice(0);
    assert_eq!(seed[60], 0.25);
    assert!(seed.iter().enumerate().all(|(i, &v)| i == 60 || v == 0.25 + contact_hj::SEED_CAP));
    assert!(f.series().slices()[1..].iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn monotonicity_examples() {
    let c = system(Family::Classical);
    let s = solver(&c);
    let lo = s.forward_action(&[0.0, 0.0], 0.0, 0.5).unwrap();
    let hi = s.forward_action(&[0.0, 0.0], 0.1, 0.5).unwrap();
    let gap = lo.series().slices()[1..]
        .iter()
        .zip(&hi.series().slices()[1..])
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| q - p))
        .fold(f64::INFINITY, f64::min);
    assert!(gap > 0.0);

    let d = system(Family::Discounted);
    let s = solver(&d);
    let lo = s.backward_action(&[0.0, 0.0], 0.0, 0.5).unwrap();
    let hi = s.backward_action(&[0.0, 0.0], 0.1, 0.5).unwrap();
    for (a, b) in lo.series().slices()[1..].iter().zip(&hi.series().slices()[1..]) {
        assert!(a.iter().zip(b).all(|(p, q)| p < q));
    }
}

#[test]
fn markov_examples() {
    let c = system(Family::Classical);
    let s = solver(&c);
    let field = s.forward_action(&[0.0, 0.0], 0.0, 1.0).unwrap();
    let r = s.markov_residual(&field, 0.5, 0.5, 4).unwrap();
    assert!(r.residual <= 5e-3, "{}", r.residual);
    // Hopf-Lax midpoint: x = 0.4 splits at y = 0.2 (node 40)
    assert_eq!(r.argmin[80], 40);

    let d = BuiltinSystem::new(Family::Discounted, &FamilyParams::default().with_amp(0.0)).unwrap();
    let s = solver(&d);
    let field = s.forward_action(&[0.0, 0.0], 1.0, 1.0).unwrap();
    assert!(s.markov_residual(&field, 0.5, 0.5, 4).unwrap().residual <= 5e-3);
    assert!(s.markov_residual(&field, 0.5, 0.6, 4).is_err());
}

#[test]
fn reversibility_examples() {
    let c = system(Family::Classical);
    let s = solver(&c);
    assert_abs_diff_eq!(s.solve_initial_value(&[0.0, 0.0], &[0.2, 0.0], 1.0, 0.5).unwrap(), 0.48, epsilon = 2e-3);
    let a = -0.3;
    let target = s.forward_action(&[0.1, 0.0], a, 0.4).unwrap().final_value(&[0.35, 0.0]).unwrap();
    assert_abs_diff_eq!(s.solve_initial_value(&[0.1, 0.0], &[0.35, 0.0], 0.4, target).unwrap(), a, epsilon = 1e-6);
    assert!(s.duality_roundtrip(&[0.0, 0.0], 0.0, &[0.2, 0.0], 1.0).unwrap() <= 5e-3);
    assert!(s.duality_roundtrip(&[0.4, 0.0], 0.7, &[0.4, 0.0], 0.01).unwrap() <= 5e-3);

    let d = BuiltinSystem::new(Family::Discounted, &FamilyParams::default().with_amp(0.0)).unwrap();
    let s = solver(&d);
    assert_abs_diff_eq!(s.solve_initial_value(&[0.0, 0.0], &[0.0, 0.0], 1.0, 1.0).unwrap(), 0.5f64.exp(), epsilon = 3e-3);
    assert!(s.duality_roundtrip(&[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0).unwrap() <= 5e-3);
}

#[test]
fn c_shift_examples() {
    let d = BuiltinSystem::new(Family::Discounted, &FamilyParams::default().with_amp(0.0)).unwrap();
    let s = solver(&d);
    assert!(s.c_shift_bound_check(&[0.0, 0.0], 1.0, 0.0, 0.1, 0.01, 1.0).unwrap() <= 1.01);
    let c = system(Family::Classical);
    let s = solver(&c);
    assert_abs_diff_eq!(s.c_shift_bound_check(&[0.0, 0.0], 0.0, 0.3, 0.0, 0.01, 1.0).unwrap(), 1.0, epsilon = 1e-3);
    assert!(s.c_shift_bound_check(&[0.0, 0.0], 0.0, 0.3, 0.3, 0.01, 1.0).is_err());
}

#[test]
fn short_queries_and_bad_inputs() {
    let c = system(Family::Classical);
    let s = solver(&c);
    assert!(s.forward_action(&[0.0, 0.0], f64::NAN, 1.0).is_err());
    assert!(s.solve_initial_value(&[0.0, 0.0], &[0.2, 0.0], 0.005, 0.0).is_err());
    assert!(Solver::new(&c, PeriodicGrid::new(1, 200).unwrap(), Scheme::new(-1.0)).is_err());
    let d = system(Family::Discounted);
    assert!(Solver::new(&d, PeriodicGrid::new(1, 200).unwrap(), Scheme::new(2.0)).is_err());
}
