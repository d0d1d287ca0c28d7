use approx::assert_abs_diff_eq;
use contact_hj::{
    BuiltinSystem, CaseLabel, ErgodicOptions, EvolveMode, Family, FamilyParams, GridFunction, Growth, PeriodicGrid,
    Scheme, Solver,
};

fn grid() -> PeriodicGrid {
    PeriodicGrid::new(1, 100).unwrap()
}

fn solver(sys: &BuiltinSystem) -> Solver<'_> {
    Solver::new(sys, grid(), Scheme::new(2e-3)).unwrap()
}

fn zero() -> GridFunction {
    GridFunction::constant(grid(), 0.0).unwrap()
}

#[test]
fn brackets_are_verified() {
    let d = BuiltinSystem::new(Family::Discounted, &FamilyParams::default().with_amp(0.0)).unwrap();
    let s = solver(&d);
    let (lo, hi) = s.initial_bracket(&zero()).unwrap();
    assert!(hi >= 1.0 && lo < hi);
    let up = s.with_shift(hi).backward_evolve(&zero(), 1.0, EvolveMode::Direct).unwrap().final_function();
    let down = s.with_shift(lo).backward_evolve(&zero(), 1.0, EvolveMode::Direct).unwrap().final_function();
    assert!(up.values().iter().all(|&v| v >= 0.0));
    assert!(down.values().iter().all(|&v| v <= 0.0));

    let m = BuiltinSystem::new(Family::Mechanical, &FamilyParams::default()).unwrap();
    let (lo, hi) = solver(&m).initial_bracket(&zero()).unwrap();
    assert!(lo < 1.0 && 1.0 < hi);
}

#[test]
fn classification_examples() {
    let d = BuiltinSystem::new(Family::Discounted, &FamilyParams::default().with_amp(0.0)).unwrap();
    let s = solver(&d);
    let cl = s.classify_c(3.0, &zero(), 10.0, 100.0, 1e-3).unwrap();
    assert_eq!(cl.growth, Growth::Bounded);
    assert!(cl.sup <= 6.0 + 1e-2);

    let m = BuiltinSystem::new(Family::Mechanical, &FamilyParams::default()).unwrap();
    let s = solver(&m);
    let bound = s.default_blowup_bound(&zero()).unwrap();
    assert_eq!(s.classify_c(0.0, &zero(), 10.0, bound, 1e-3).unwrap().growth, Growth::GrowsDown);
    assert_eq!(s.classify_c(2.0, &zero(), 10.0, bound, 1e-3).unwrap().growth, Growth::GrowsUp);
    assert!(s.classify_c(2.0, &zero(), 4.0, bound, 1e-3).is_err());
}

#[test]
fn critical_values() {
    let opts = ErgodicOptions::default();
    let m = BuiltinSystem::new(Family::Mechanical, &FamilyParams::default()).unwrap();
    let s = solver(&m);
    let a = s.find_critical_c(&zero(), &opts).unwrap();
    assert_eq!(a.case_label, CaseLabel::UniqueC);
    assert_abs_diff_eq!(a.c, 1.0, epsilon = 0.05);
    // lambda = 0: adding a constant to the data leaves the drift unchanged
    let shifted = s.find_critical_c(&GridFunction::constant(grid(), 1.0).unwrap(), &opts).unwrap();
    assert_eq!(shifted.c, a.c);
    let wavy = GridFunction::from_fn(grid(), |x| 0.25 * (2.0 * std::f64::consts::PI * x[0]).sin()).unwrap();
    let b = s.find_critical_c(&wavy, &opts).unwrap();
    let c = s.find_critical_c(&wavy.map(|v| v - 3.0).unwrap(), &opts).unwrap();
    assert_abs_diff_eq!(b.c, c.c, epsilon = 1e-9);

    let free = BuiltinSystem::new(Family::Mechanical, &FamilyParams::default().with_amp(0.0)).unwrap();
    let c = solver(&free).find_critical_c(&zero(), &opts).unwrap();
    assert_abs_diff_eq!(c.c, 0.0, epsilon = 0.05);

    let d = BuiltinSystem::new(Family::Discounted, &FamilyParams::default()).unwrap();
    let r = solver(&d).find_critical_c(&zero(), &opts).unwrap();
    assert_eq!(r.case_label, CaseLabel::AllCBounded);
    assert_eq!(r.c, 0.0);
}

#[test]
fn weak_kam_examples() {
    let opts = ErgodicOptions { horizon: 15.0, ..ErgodicOptions::default() };
    let d = BuiltinSystem::new(Family::Discounted, &FamilyParams::default().with_amp(0.0)).unwrap();
    let s = solver(&d);
    let r = s.weak_kam_solution(0.0, CaseLabel::AllCBounded, &zero(), &opts).unwrap();
    assert!(r.phi_inf.values().iter().all(|v| v.abs() <= 1e-9));
    assert!(r.fixed_point_residual <= 1e-6);
    let r = s.weak_kam_solution(3.0, CaseLabel::AllCBounded, &zero(), &opts).unwrap();
    for &v in r.phi_inf.values() {
        assert_abs_diff_eq!(v, 6.0, epsilon = 1e-2);
    }
    assert!(r.certified);
}

#[test]
fn mechanical_cell_problem() {
    let m = BuiltinSystem::new(Family::Mechanical, &FamilyParams::default()).unwrap();
    let s = solver(&m);
    let opts = ErgodicOptions { horizon: 20.0, ..ErgodicOptions::default() };
    let r = s.weak_kam_solution(1.0, CaseLabel::UniqueC, &zero(), &opts).unwrap();
    assert!(r.stationary_residual <= 5e-2, "{}", r.stationary_residual);
    // |psi'| follows the branch 2 |sin(pi x)| away from the kink
    let h = grid().spacing();
    let v = r.phi_inf.values();
    for i in 0..grid().len() {
        let x = (i as f64 + 0.5) * h;
        if x.min(1.0 - x) < 0.1 {
            continue;
        }
        let slope = (v[(i + 1) % v.len()] - v[i]) / h;
        let branch = 2.0 * (std::f64::consts::PI * x).sin().abs();
        assert!((slope.abs() - branch).abs() <= 0.1, "x = {x}: {slope} vs {branch}");
    }
}
