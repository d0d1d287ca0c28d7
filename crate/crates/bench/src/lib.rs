//! Fixtures shared by the benchmarks.

use contact_hj::{BuiltinSystem, Family, FamilyParams, GridFunction, PeriodicGrid};

pub fn system(family: Family) -> BuiltinSystem {
    BuiltinSystem::new(family, &FamilyParams::default()).expect("built-in defaults are valid")
}

/// `0.3 cos(2 pi x) + 0.1 sin(4 pi y)` on an `n`-node grid.
pub fn smooth_data(dim: usize, n: usize) -> GridFunction {
    let grid = PeriodicGrid::new(dim, n).expect("valid grid");
    GridFunction::from_fn(grid, |x| {
        let tau = 2.0 * std::f64::consts::PI;
        0.3 * (tau * x[0]).cos() + if dim == 2 { 0.1 * (2.0 * tau * x[1]).sin() } else { 0.0 }
    })
    .expect("finite data")
}
