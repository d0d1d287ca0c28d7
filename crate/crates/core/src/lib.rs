//! Implicit action functions, Lax-Oleinik type semigroups and the ergodic
//! problem for contact Hamilton-Jacobi equations `w_t + H(x, w, Dw) = c`
//! on the flat tori `T^1` and `T^2`.

// `!(x > 0.0)` style comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod characteristics;
pub mod ergodic;
pub mod error;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod semigroup;
pub mod sweep;
pub mod system;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{periodic_distance, wrap, GridFunction, PeriodicGrid, Point, Vector};
pub use system::{
    builtin, check_assumptions, legendre_transform, AssumptionReport, BuiltinSystem, ContactSystem,
    Family, FamilyParams, FnSystem, SampleBox,
};
pub use characteristics::{
    apriori_bounds, energy_drift_residual, flow, shoot_minimizer, vector_field, AprioriBounds, Branch,
    ContactState, ShootOptions, ShootResult, Trajectory,
};
pub use action::{ActionField, MarkovReport};
pub use sweep::{Choice, Direction, Scheme, SliceSeries, Solver, SEED_CAP};
pub use semigroup::{EvolveMode, FieldOrigin, ValueField, VariationalReport, ViscosityOptions, ViscosityReport};
pub use ergodic::{CaseLabel, Classification, CriticalValue, ErgodicOptions, ErgodicResult, Growth};
pub use oracle::{cross_validate, cross_validate_refined, fd_evolve, FdConfig, FdRun, RefinedGaps};
pub use verify::{run_criterion, Check, CriterionReport, SuiteConfig, CRITERIA};
