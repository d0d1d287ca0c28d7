//! An independent monotone (local) Lax-Friedrichs solver for
//! `w_t + H(x, w, Dw) = c`, used to cross-validate the semigroup.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, PeriodicGrid, Point};
use crate::semigroup::{central_gradient, EvolveMode, FieldOrigin, ValueField};
use crate::sweep::{Direction, Scheme, SliceSeries, Solver};
use crate::system::ContactSystem;

/// Restarts allowed when an automatic `theta` turns out too small.
const MAX_THETA_RESTARTS: usize = 12;
const THETA_MARGIN: f64 = 1.05;

/// Settings of [`fd_evolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdConfig {
    /// Courant number in `(0, 0.5]`.
    pub cfl: f64,
    /// Artificial viscosity. When `None` it is sampled from the data and
    /// raised automatically if the run meets larger slopes.
    pub theta: Option<f64>,
    /// Scale the viscosity at each node by the local slope speed (local
    /// Lax-Friedrichs) instead of using `theta` everywhere.
    pub local_viscosity: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { cfl: 0.5, theta: None, local_viscosity: true }
    }
}

/// A finite-difference run.
#[derive(Debug, Clone, PartialEq)]
pub struct FdRun {
    pub field: ValueField,
    pub theta: f64,
    /// Internal time step.
    pub dt: f64,
    pub restarts: usize,
}

/// Evolves `phi` to `horizon` and stores slices every `output_dt`.
pub fn fd_evolve(
    sys: &dyn ContactSystem,
    phi: &GridFunction,
    horizon: f64,
    c: f64,
    output_dt: f64,
    cfg: &FdConfig,
) -> Result<FdRun> {
    if !(cfg.cfl > 0.0 && cfg.cfl <= 0.5) {
        return Err(Error::Config(format!("cfl must lie in (0, 0.5], got {}", cfg.cfl)));
    }
    if !(output_dt > 0.0 && horizon > 0.0) {
        return Err(Error::Input(format!("need positive horizon and output step, got {horizon}, {output_dt}")));
    }
    let outputs = (horizon / output_dt).round();
    if (outputs * output_dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::Input(format!("horizon {horizon} is not a multiple of the output step {output_dt}")));
    }
    let grid = *phi.grid();
    if grid.dim() != sys.dim() {
        return Err(Error::Input("grid and system dimensions differ".into()));
    }
    let mut theta = match cfg.theta {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(Error::Config(format!("theta must be positive, got {t}"))),
        None => sampled_theta(sys, phi),
    };
    let mut restarts = 0;
    loop {
        match run(sys, phi, c, theta, outputs as usize, output_dt, cfg) {
            Ok((slices, dt)) => {
                let series = SliceSeries { grid, dt: output_dt, slices };
                let field = ValueField::from_parts(series, phi.clone(), Direction::Forward, c, FieldOrigin::FiniteDifference);
                return Ok(FdRun { field, theta, dt, restarts });
            }
            Err(Violation { observed }) => {
                if cfg.theta.is_some() || restarts >= MAX_THETA_RESTARTS {
                    return Err(Error::Scheme(format!(
                        "slope speed {observed:.6} exceeds theta = {theta:.6}; the scheme is not monotone"
                    )));
                }
                theta = (THETA_MARGIN * observed).max(1.25 * theta);
                restarts += 1;
            }
        }
    }
}

struct Violation {
    observed: f64,
}

/// A little above `max |H_p|` over the data's value band and slopes up to
/// its discrete Lipschitz constant.
fn sampled_theta(sys: &dyn ContactSystem, phi: &GridFunction) -> f64 {
    let grid = phi.grid();
    let v = phi.values();
    let lip = (0..grid.len())
        .map(|i| {
            let p = central_gradient(grid, v, i);
            p[0].abs().max(p[1].abs())
        })
        .fold(0.0, f64::max);
    let radius = lip.max(1e-3);
    let (lo, hi) = (phi.min() - 1.0, phi.max() + 1.0);
    let stride = (grid.len() / 64).max(1);
    let mut theta: f64 = 0.0;
    for i in (0..grid.len()).step_by(stride) {
        let x = grid.node(i);
        for u in [lo, 0.5 * (lo + hi), hi] {
            for j in 0..=8 {
                let r = -radius + 2.0 * radius * j as f64 / 8.0;
                let ps: &[[f64; 2]] = if grid.dim() == 1 { &[[r, 0.0]] } else { &[[r, 0.0], [0.0, r], [r, r]] };
                for p in ps {
                    let hp = sys.dh_dp(&x, u, p);
                    theta = theta.max(hp[0].abs()).max(hp[1].abs());
                }
            }
        }
    }
    THETA_MARGIN * theta.max(1e-3)
}

fn run(
    sys: &dyn ContactSystem,
    phi: &GridFunction,
    c: f64,
    theta: f64,
    outputs: usize,
    output_dt: f64,
    cfg: &FdConfig,
) -> std::result::Result<(Vec<Vec<f64>>, f64), Violation> {
    let grid = *phi.grid();
    let h = grid.spacing();
    let dim = grid.dim() as f64;
    let mut dt_max = cfg.cfl * h / (theta * dim);
    let lambda = sys.lambda();
    if lambda > 0.0 {
        dt_max = dt_max.min(0.25 / lambda);
    }
    let sub = (output_dt / dt_max).ceil().max(1.0) as usize;
    let dt = output_dt / sub as f64;
    let mut slices = Vec::with_capacity(outputs + 1);
    let mut w = phi.values().to_vec();
    slices.push(w.clone());
    for _ in 0..outputs {
        for _ in 0..sub {
            w = step(sys, &grid, &w, c, theta, dt, cfg.local_viscosity)?;
        }
        slices.push(w.clone());
    }
    Ok((slices, dt))
}

fn step(
    sys: &dyn ContactSystem,
    grid: &PeriodicGrid,
    w: &[f64],
    c: f64,
    theta: f64,
    dt: f64,
    local: bool,
) -> std::result::Result<Vec<f64>, Violation> {
    let h = grid.spacing();
    let node = |i: usize| -> (f64, f64) {
        let x = grid.node(i);
        let mi = grid.multi_index(i).map(|c| c as i64);
        let mut minus = [0.0; 2];
        let mut plus = [0.0; 2];
        for d in 0..grid.dim() {
            let mut a = mi;
            let mut b = mi;
            a[d] += 1;
            b[d] -= 1;
            plus[d] = (w[grid.flat_index(a)] - w[i]) / h;
            minus[d] = (w[i] - w[grid.flat_index(b)]) / h;
        }
        let p = [0.5 * (minus[0] + plus[0]), 0.5 * (minus[1] + plus[1])];
        let mut speed: f64 = 0.0;
        let mut viscous = 0.0;
        for d in 0..grid.dim() {
            // |H_p| of a convex H is largest at an end of the slope interval
            let mut alpha: f64 = 0.0;
            for q in [minus[d], plus[d], p[d]] {
                let mut pq = p;
                pq[d] = q;
                alpha = alpha.max(sys.dh_dp(&x, w[i], &pq)[d].abs());
            }
            speed = speed.max(alpha);
            let coeff = if local { alpha } else { theta };
            viscous += coeff * (plus[d] - minus[d]) / 2.0;
        }
        let rate = sys.hamiltonian(&x, w[i], &p) - c - viscous;
        (w[i] - dt * rate, speed)
    };
    let out: Vec<(f64, f64)> = if rayon::current_num_threads() > 1 && grid.len() >= 1024 {
        (0..grid.len()).into_par_iter().with_min_len(256).map(node).collect()
    } else {
        (0..grid.len()).map(node).collect()
    };
    let observed = out.iter().fold(0.0_f64, |m, &(_, s)| m.max(s));
    if observed > theta {
        return Err(Violation { observed });
    }
    Ok(out.into_iter().map(|(v, _)| v).collect())
}

/// `max |T^c_t phi - fd(phi)|` over all slices, with `c` the solver's shift.
pub fn cross_validate(solver: &Solver<'_>, phi: &GridFunction, horizon: f64, cfg: &FdConfig) -> Result<f64> {
    let dp = solver.backward_evolve(phi, horizon, EvolveMode::Direct)?;
    let fd = fd_evolve(solver.system(), phi, horizon, solver.shift(), solver.dt(), cfg)?;
    Ok(dp
        .series()
        .slices()
        .iter()
        .zip(fd.field.series().slices())
        .fold(0.0_f64, |m, (a, b)| m.max(crate::grid::sup_distance(a, b))))
}

/// Cross-validation gaps on two refinement levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinedGaps {
    pub coarse: f64,
    pub fine: f64,
}

/// Runs [`cross_validate`] at `(n, dt)` and at `(2n, dt/2)`.
pub fn cross_validate_refined(
    sys: &dyn ContactSystem,
    scheme: &Scheme,
    n: usize,
    phi: impl Fn(&Point) -> f64,
    horizon: f64,
    c: f64,
    cfg: &FdConfig,
) -> Result<RefinedGaps> {
    let mut gaps = [0.0; 2];
    for (level, gap) in gaps.iter_mut().enumerate() {
        let scale = 1usize << level;
        let grid = PeriodicGrid::new(sys.dim(), n * scale)?;
        let mut sc = scheme.clone();
        sc.dt = scheme.dt / scale as f64;
        let solver = Solver::new(sys, grid, sc)?.with_shift(c);
        let data = GridFunction::from_fn(grid, &phi)?;
        *gap = cross_validate(&solver, &data, horizon, cfg)?;
    }
    Ok(RefinedGaps { coarse: gaps[0], fine: gaps[1] })
}
