use approx::assert_abs_diff_eq;
use contact_hj::{
    cross_validate, cross_validate_refined, fd_evolve, BuiltinSystem, Error, Family, FamilyParams, FdConfig,
    GridFunction, PeriodicGrid, Scheme, Solver,
};

fn free(family: Family) -> BuiltinSystem {
    BuiltinSystem::new(family, &FamilyParams::default().with_amp(0.0)).unwrap()
}

fn grid(n: usize) -> PeriodicGrid {
    PeriodicGrid::new(1, n).unwrap()
}

fn hopf_lax(x: f64, t: f64) -> f64 {
    // min_y d(y, 1/2) + d(x, y)^2 / (2t) with slopes capped at 1
    let d = (x - 0.5).abs().min(1.0 - (x - 0.5).abs());
    if d <= t { d * d / (2.0 * t) } else { d - t / 2.0 }
}

#[test]
fn closed_form_examples() {
    let cfg = FdConfig::default();
    let d = free(Family::Discounted);
    let one = GridFunction::constant(grid(200), 1.0).unwrap();
    let run = fd_evolve(&d, &one, 1.0, 0.0, 0.01, &cfg).unwrap();
    assert_abs_diff_eq!(run.field.value(&[0.4, 0.0], 1.0).unwrap(), (-0.5f64).exp(), epsilon = 5e-3);

    let c = free(Family::Classical);
    let zero = GridFunction::constant(grid(200), 0.0).unwrap();
    let run = fd_evolve(&c, &zero, 0.5, 0.0, 0.05, &cfg).unwrap();
    assert!(run.field.series().slices().iter().flatten().all(|&v| v == 0.0));

    let phi = GridFunction::distance_to(grid(400), &[0.5, 0.0]).unwrap();
    let run = fd_evolve(&c, &phi, 0.25, 0.0, 0.05, &cfg).unwrap();
    assert_abs_diff_eq!(run.field.value(&[0.0, 0.0], 0.25).unwrap(), 0.375, epsilon = 1e-2);
    for x in [0.1, 0.3, 0.45, 0.7] {
        assert_abs_diff_eq!(run.field.value(&[x, 0.0], 0.25).unwrap(), hopf_lax(x, 0.25), epsilon = 1e-2);
    }
}

#[test]
fn constants_stay_constant() {
    let d = free(Family::Discounted);
    let c = 0.3;
    let w = GridFunction::constant(grid(100), c / 0.5).unwrap();
    let run = fd_evolve(&d, &w, 1.0, c, 0.1, &FdConfig::default()).unwrap();
    for &v in run.field.series().slices().iter().flatten() {
        assert_abs_diff_eq!(v, c / 0.5, epsilon = 1e-10);
    }
}

#[test]
fn agrees_with_the_semigroup() {
    let d = free(Family::Discounted);
    let s = Solver::new(&d, grid(200), Scheme::new(1e-3)).unwrap();
    let one = GridFunction::constant(grid(200), 1.0).unwrap();
    assert!(cross_validate(&s, &one, 1.0, &FdConfig::default()).unwrap() <= 5e-3);

    let c = free(Family::Classical);
    let gaps = cross_validate_refined(
        &c,
        &Scheme::new(1e-3),
        200,
        |x| (x[0] - 0.5).abs().min(1.0 - (x[0] - 0.5).abs()),
        0.25,
        0.0,
        &FdConfig::default(),
    )
    .unwrap();
    assert!(gaps.coarse <= 2e-2, "{gaps:?}");
    assert!(gaps.fine <= 1.3e-2, "{gaps:?}");
}

#[test]
fn comparison_holds() {
    let sys = BuiltinSystem::new(Family::Discounted, &FamilyParams::default()).unwrap();
    let g = grid(100);
    let phi = GridFunction::from_fn(g, |x| 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin()).unwrap();
    let psi = phi.map(|v| v - 0.1).unwrap();
    let a = fd_evolve(&sys, &phi, 0.5, 0.0, 0.05, &FdConfig::default()).unwrap();
    let b = fd_evolve(&sys, &psi, 0.5, 0.0, 0.05, &FdConfig::default()).unwrap();
    for (x, y) in a.field.series().slices().iter().flatten().zip(b.field.series().slices().iter().flatten()) {
        assert!(x >= y);
    }
}

#[test]
fn rejects_bad_settings() {
    let c = free(Family::Classical);
    let phi = GridFunction::from_fn(grid(100), |x| (2.0 * std::f64::consts::PI * x[0]).sin()).unwrap();
    let small = FdConfig { theta: Some(1e-3), ..FdConfig::default() };
    assert!(matches!(fd_evolve(&c, &phi, 0.1, 0.0, 0.05, &small), Err(Error::Scheme(_))));
    let auto = fd_evolve(&c, &phi, 0.1, 0.0, 0.05, &FdConfig::default()).unwrap();
    assert!(auto.theta >= 2.0 * std::f64::consts::PI * 0.99);

    let wide = FdConfig { cfl: 0.9, ..FdConfig::default() };
    assert!(fd_evolve(&c, &phi, 0.1, 0.0, 0.05, &wide).unwrap_err().is_config());
    assert!(fd_evolve(&c, &phi, 0.1, 0.0, 0.03, &FdConfig::default()).is_err());
}
