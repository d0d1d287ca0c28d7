use contact_hj::{
    legendre_transform, periodic_distance, BuiltinSystem, ContactSystem, Direction, EvolveMode, Family,
    FamilyParams, GridFunction, PeriodicGrid, Scheme, Solver,
};
use proptest::prelude::*;

const TAU: f64 = 2.0 * std::f64::consts::PI;

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::ALL.to_vec())
}

/// Builds `f`, dropping the parameters it does not take.
fn system(f: Family, lambda: f64, amp: f64) -> BuiltinSystem {
    let mut params = FamilyParams::default();
    if !matches!(f, Family::Classical | Family::Mechanical) {
        params = params.with_lambda(lambda);
    }
    if !matches!(f, Family::Classical | Family::Coshcase) {
        params = params.with_amp(amp);
    }
    BuiltinSystem::new(f, &params).unwrap()
}

/// Random smooth data: a few low cosine modes.
fn data(g: PeriodicGrid, coef: &[(f64, f64)]) -> GridFunction {
    GridFunction::from_fn(g, |x| {
        coef.iter().enumerate().map(|(k, (a, ph))| a * (TAU * (k + 1) as f64 * x[0] + ph).cos()).sum()
    })
    .unwrap()
}

fn modes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.4..0.4f64, 0.0..TAU), 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_a_metric(a in prop::array::uniform2(-3.0..3.0f64),
                            b in prop::array::uniform2(-3.0..3.0f64),
                            c in prop::array::uniform2(-3.0..3.0f64)) {
        let ab = periodic_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, periodic_distance(&b, &a).unwrap());
        prop_assert!(ab <= (0.5f64).hypot(0.5) + 1e-12);
        let ac = periodic_distance(&a, &c).unwrap();
        let cb = periodic_distance(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
        let shifted = [a[0] + 1.0, a[1] - 2.0];
        prop_assert!((periodic_distance(&shifted, &b).unwrap() - ab).abs() <= 1e-12);
    }

    #[test]
    fn interpolation_is_exact_and_monotone(coef in modes(), lift in 0.0..0.5f64, x in -1.0..2.0f64, i in 0usize..40) {
        let g = PeriodicGrid::new(1, 40).unwrap();
        let f = data(g, &coef);
        prop_assert_eq!(f.interpolate(&g.node(i)).unwrap(), f.values()[i]);
        let h = f.map(|v| v + lift).unwrap();
        let (a, b) = (f.interpolate(&[x, 0.0]).unwrap(), h.interpolate(&[x, 0.0]).unwrap());
        prop_assert!(a <= b);
        prop_assert!((b - a - lift).abs() <= 1e-12);
        prop_assert!(a >= f.min() - 1e-12 && a <= f.max() + 1e-12);
    }

    #[test]
    fn numeric_legendre_matches_closed_forms(fam in family(), x in 0.0..1.0f64, u in -2.0..2.0f64, v in -3.0..3.0f64) {
        let sys = system(fam, 0.5, 0.7);
        let (l, p) = legendre_transform(&sys, &[x, 0.0], u, &[v, 0.0]).unwrap();
        let pot = if matches!(fam, Family::Classical | Family::Coshcase) { 0.0 } else { 0.7 * (TAU * x).cos() };
        let uterm = match fam {
            Family::Classical | Family::Mechanical => 0.0,
            Family::Nonmonotone => 0.5 * u.sin(),
            _ => 0.5 * u,
        };
        let expected = match fam {
            Family::Coshcase => v * v.asinh() - (1.0 + v * v).sqrt() - uterm,
            _ => 0.5 * v * v - uterm - pot,
        };
        prop_assert!((l - expected).abs() <= 1e-8 * (1.0 + expected.abs()), "{} vs {}", l, expected);
        // Fenchel equality at the dual momentum recovers H
        let h = sys.hamiltonian(&[x, 0.0], u, &p);
        prop_assert!((v * p[0] - l - h).abs() <= 1e-9 * (1.0 + h.abs()));
        prop_assert!((sys.lagrangian(&[x, 0.0], u, &[v, 0.0]) - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
    }

    #[test]
    fn lagrangian_is_lipschitz_in_u(fam in family(), lambda in 0.0..2.0f64, u1 in -5.0..5.0f64, u2 in -5.0..5.0f64,
                                   x in 0.0..1.0f64, v in -3.0..3.0f64) {
        let sys = system(fam, lambda, 1.0);
        let a = sys.lagrangian(&[x, 0.0], u1, &[v, 0.0]);
        let b = sys.lagrangian(&[x, 0.0], u2, &[v, 0.0]);
        prop_assert!((a - b).abs() <= sys.lambda() * (u1 - u2).abs() * (1.0 + 1e-12) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dp_step_preserves_order(fam in family(), coef in modes(), gap in prop::collection::vec(0.0..0.3f64, 50),
                               forward in any::<bool>()) {
        let sys = system(fam, 0.5, 1.0);
        let g = PeriodicGrid::new(1, 50).unwrap();
        let s = Solver::new(&sys, g, Scheme::new(5e-3)).unwrap();
        let lo = data(g, &coef);
        let hi = GridFunction::new(g, lo.values().iter().zip(&gap).map(|(a, d)| a + d).collect()).unwrap();
        let dir = if forward { Direction::Forward } else { Direction::Backward };
        let a = s.dp_step(&lo, dir).unwrap();
        let b = s.dp_step(&hi, dir).unwrap();
        prop_assert!(a.values().iter().zip(b.values()).all(|(p, q)| p <= q));
    }

    #[test]
    fn evolution_preserves_order(fam in family(), coef in modes(), lift in 0.0..0.5f64) {
        let sys = system(fam, 0.5, 1.0);
        let g = PeriodicGrid::new(1, 50).unwrap();
        let s = Solver::new(&sys, g, Scheme::new(5e-3)).unwrap();
        let phi = data(g, &coef);
        let psi = phi.map(|v| v + lift).unwrap();
        let a = s.backward_evolve(&phi, 0.1, EvolveMode::Direct).unwrap();
        let b = s.backward_evolve(&psi, 0.1, EvolveMode::Direct).unwrap();
        for (p, q) in a.series().slices().iter().flatten().zip(b.series().slices().iter().flatten()) {
            prop_assert!(p <= q);
            // u-Lipschitz: the gap never exceeds lift * e^{lambda t}
            prop_assert!(q - p <= lift * (0.5f64 * 0.1).exp() + 1e-9);
        }
    }

    #[test]
    fn constants_commute_without_u(coef in modes(), a in -2.0..2.0f64, mechanical in any::<bool>()) {
        let fam = if mechanical { Family::Mechanical } else { Family::Classical };
        let sys = system(fam, 0.0, 1.0);
        let g = PeriodicGrid::new(1, 50).unwrap();
        let s = Solver::new(&sys, g, Scheme::new(5e-3)).unwrap();
        let phi = data(g, &coef);
        let x = s.backward_evolve(&phi, 0.1, EvolveMode::Direct).unwrap().final_function();
        let y = s.backward_evolve(&phi.map(|v| v + a).unwrap(), 0.1, EvolveMode::Direct).unwrap().final_function();
        for (p, q) in x.values().iter().zip(y.values()) {
            prop_assert!((q - p - a).abs() <= 1e-12 * (1.0 + a.abs() + p.abs()));
        }
    }
}
