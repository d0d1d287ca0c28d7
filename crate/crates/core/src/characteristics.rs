//! Characteristics of the contact Hamilton equations, shooting for minimizers
//! of the implicit action, and the a-priori constants that bound actions,
//! minimizers and their speeds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{dot, norm, periodic_distance_unchecked, wrap_coord, Point, Vector};
use crate::system::ContactSystem;

/// A point `(x, u, p)` of the contact phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactState {
    pub x: Point,
    pub u: f64,
    pub p: Vector,
}

impl ContactState {
    pub fn new(x: Point, u: f64, p: Vector) -> Self {
        Self { x, u, p }
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(self.p.iter()).all(|c| c.is_finite() && c.abs() < 1e150)
            && self.u.is_finite()
            && self.u.abs() < 1e150
    }
}

/// Time samples of a solution of the contact equations. Positions are wrapped
/// onto the torus; `lifted_end` is the final position in the universal cover.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ContactState>,
    pub lifted_end: Point,
}

impl Trajectory {
    pub fn last(&self) -> &ContactState {
        self.states.last().expect("trajectories are never empty")
    }

    pub fn max_abs_u(&self) -> f64 {
        self.states.iter().fold(0.0, |m, s| m.max(s.u.abs()))
    }
}

/// Right-hand side of the contact equations:
/// `x' = H_p`, `u' = <p, H_p> - H`, `p' = -H_x - H_u p`.
pub fn vector_field<S: ContactSystem + ?Sized>(sys: &S, s: &ContactState) -> (Vector, f64, Vector) {
    let hp = sys.dh_dp(&s.x, s.u, &s.p);
    let hx = sys.dh_dx(&s.x, s.u, &s.p);
    let hu = sys.dh_du(&s.x, s.u, &s.p);
    let h = sys.hamiltonian(&s.x, s.u, &s.p);
    let du = dot(&s.p, &hp) - h;
    let dp = [-hx[0] - hu * s.p[0], -hx[1] - hu * s.p[1]];
    (hp, du, dp)
}

fn axpy(s: &ContactState, h: f64, k: &(Vector, f64, Vector)) -> ContactState {
    ContactState {
        x: [s.x[0] + h * k.0[0], s.x[1] + h * k.0[1]],
        u: s.u + h * k.1,
        p: [s.p[0] + h * k.2[0], s.p[1] + h * k.2[1]],
    }
}

fn rk4_step<S: ContactSystem + ?Sized>(sys: &S, s: &ContactState, h: f64) -> ContactState {
    let k1 = vector_field(sys, s);
    let k2 = vector_field(sys, &axpy(s, 0.5 * h, &k1));
    let k3 = vector_field(sys, &axpy(s, 0.5 * h, &k2));
    let k4 = vector_field(sys, &axpy(s, h, &k3));
    let c = |a: f64, b: f64, c: f64, d: f64| h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
    ContactState {
        x: [
            s.x[0] + c(k1.0[0], k2.0[0], k3.0[0], k4.0[0]),
            s.x[1] + c(k1.0[1], k2.0[1], k3.0[1], k4.0[1]),
        ],
        u: s.u + c(k1.1, k2.1, k3.1, k4.1),
        p: [
            s.p[0] + c(k1.2[0], k2.2[0], k3.2[0], k4.2[0]),
            s.p[1] + c(k1.2[1], k2.2[1], k3.2[1], k4.2[1]),
        ],
    }
}

fn wrapped(s: &ContactState, dim: usize) -> ContactState {
    let mut out = *s;
    out.x[0] = wrap_coord(s.x[0]);
    out.x[1] = if dim == 2 { wrap_coord(s.x[1]) } else { 0.0 };
    out
}

/// Integrates the contact equations from `s0` over `[0, t]` with classical
/// fixed-step RK4. The step is `t / ceil(t / dt)`.
pub fn flow<S: ContactSystem + ?Sized>(sys: &S, s0: &ContactState, t: f64, dt: f64) -> Result<Trajectory> {
    integrate(sys, s0, t, dt, true)
}

fn integrate<S: ContactSystem + ?Sized>(
    sys: &S,
    s0: &ContactState,
    t: f64,
    dt: f64,
    record: bool,
) -> Result<Trajectory> {
    if !s0.is_finite() {
        return Err(Error::Domain(format!("non-finite initial state {s0:?}")));
    }
    if !(t > 0.0 && dt > 0.0 && dt <= t) {
        return Err(Error::Config(format!("flow needs 0 < dt <= t, got dt = {dt}, t = {t}")));
    }
    if dt * sys.lambda() >= 0.1 {
        return Err(Error::Config(format!(
            "flow needs dt * lambda < 0.1, got {}",
            dt * sys.lambda()
        )));
    }
    let dim = sys.dim();
    let steps = (t / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let cap = if record { steps + 1 } else { 2 };
    let mut times = Vec::with_capacity(cap);
    let mut states = Vec::with_capacity(cap);
    times.push(0.0);
    states.push(wrapped(s0, dim));
    let mut s = *s0;
    for k in 1..=steps {
        s = rk4_step(sys, &s, h);
        if !s.is_finite() {
            return Err(Error::BlowUp { time: k as f64 * h });
        }
        if record || k == steps {
            times.push(if k == steps { t } else { k as f64 * h });
            states.push(wrapped(&s, dim));
        }
    }
    Ok(Trajectory { times, states, lifted_end: s.x })
}

/// Largest violation of the energy law `dH/ds = -H H_u` over interior samples,
/// with `dH/ds` from central differences.
pub fn energy_drift_residual<S: ContactSystem + ?Sized>(sys: &S, traj: &Trajectory) -> Result<f64> {
    let n = traj.states.len();
    if n < 3 || traj.times.len() != n {
        return Err(Error::Input(format!("trajectory has {n} samples, need at least 3")));
    }
    let energy: Vec<f64> = traj.states.iter().map(|s| sys.hamiltonian(&s.x, s.u, &s.p)).collect();
    let mut worst: f64 = 0.0;
    for i in 1..n - 1 {
        let s = &traj.states[i];
        let dh = (energy[i + 1] - energy[i - 1]) / (traj.times[i + 1] - traj.times[i - 1]);
        let hu = sys.dh_du(&s.x, s.u, &s.p);
        worst = worst.max((dh + energy[i] * hu).abs());
    }
    Ok(worst)
}

/// Explicit constants on the box `u0 in [a, b]`, `t in [delta, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AprioriBounds {
    /// Speed scale `diam / delta`.
    pub k: f64,
    /// `sup L(x, 0, v)` over `|v| <= k`.
    pub a_sup: f64,
    /// `inf L(x, 0, v)` over all `x, v`.
    pub b_inf: f64,
    /// Bound on `|h_{x0,u0}(x,t)|` over the box.
    pub c: f64,
    /// Bound on `|u(s)|` along minimizers.
    pub k_min: f64,
    /// `inf (L(x,u,v) - |v|)` over `|u| <= k_min`.
    pub d_inf: f64,
    /// Speed threshold: every minimizer has a time with speed at most `q`.
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub horizon: f64,
}

impl AprioriBounds {
    /// Velocity radius used by the DP search windows and by shooting.
    pub fn search_speed(&self) -> f64 {
        self.q.max(2.0 * self.k)
    }
}

/// `(e^{lambda T} - 1) / lambda`, with its limit `T` at `lambda = 0`.
pub(crate) fn growth(lambda: f64, t: f64) -> f64 {
    let z = lambda * t;
    if z.abs() < 1e-8 {
        t * (1.0 + 0.5 * z)
    } else {
        (z.exp_m1()) / lambda
    }
}

const X_SAMPLES_1D: usize = 256;
const X_SAMPLES_2D: usize = 32;
const ANGLES: usize = 64;

pub(crate) fn x_samples(dim: usize) -> Vec<Point> {
    if dim == 1 {
        (0..X_SAMPLES_1D).map(|i| [i as f64 / X_SAMPLES_1D as f64, 0.0]).collect()
    } else {
        let m = X_SAMPLES_2D;
        (0..m * m).map(|i| [(i % m) as f64 / m as f64, (i / m) as f64 / m as f64]).collect()
    }
}

pub(crate) fn sphere(dim: usize, r: f64) -> Vec<Vector> {
    if dim == 1 {
        vec![[r, 0.0], [-r, 0.0]]
    } else {
        (0..ANGLES)
            .map(|j| {
                let a = 2.0 * std::f64::consts::PI * j as f64 / ANGLES as f64;
                [r * a.cos(), r * a.sin()]
            })
            .collect()
    }
}

/// Computes the a-priori constants for the box `(a, b, delta, T)`.
///
/// Suprema of convex functions over balls are taken on the bounding sphere.
/// `inf_v L(x,0,v) = -H(x,0,0)` and `inf_v (L - |v|) = -max_{|e|=1} H(x,u,e)`
/// by duality, so no unbounded search over velocities is needed.
pub fn apriori_bounds<S: ContactSystem + ?Sized>(
    sys: &S,
    a: f64,
    b: f64,
    delta: f64,
    horizon: f64,
) -> Result<AprioriBounds> {
    let lambda = sys.lambda();
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(a < b && delta > 0.0 && delta < horizon) || !(a.is_finite() && b.is_finite() && horizon.is_finite()) {
        return Err(Error::Config(format!(
            "box needs a < b and 0 < delta < T, got ({a}, {b}, {delta}, {horizon})"
        )));
    }
    let dim = sys.dim();
    let diam = (dim as f64).sqrt() / 2.0;
    let k = diam / delta;
    let xs = x_samples(dim);
    let vk = sphere(dim, k);
    let mut a_sup = f64::NEG_INFINITY;
    let mut b_inf = f64::INFINITY;
    for x in &xs {
        b_inf = b_inf.min(-sys.hamiltonian(x, 0.0, &[0.0, 0.0]));
        for v in &vk {
            a_sup = a_sup.max(sys.lagrangian(x, 0.0, v));
        }
    }
    if !(a_sup.is_finite() && b_inf.is_finite()) {
        return Err(Error::Convexity("Lagrangian is not finite on the sampled box".into()));
    }
    let e = (lambda * horizon).exp();
    let g = growth(lambda, horizon);
    let c = (a.abs() * e + b_inf.abs() * g).max(b.abs() * e + a_sup.abs() * g);
    let k_min = ((c + 1.0) * e + b_inf.abs() * g).max(c);

    let units = sphere(dim, 1.0);
    let mut h_max = f64::NEG_INFINITY;
    for j in 0..=20 {
        let u = -k_min + 2.0 * k_min * j as f64 / 20.0;
        for x in &xs {
            for p in &units {
                h_max = h_max.max(sys.hamiltonian(x, u, p));
            }
        }
    }
    let d_inf = -h_max;
    let q = (k_min - a + d_inf.abs() * horizon) / delta + 1.0;
    Ok(AprioriBounds { k, a_sup, b_inf, c, k_min, d_inf, q, a, b, delta, horizon })
}

/// Options for [`shoot_minimizer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    /// Number of initial momenta in the multistart grid.
    pub multistart: usize,
    /// Integrator step.
    pub dt: f64,
    /// Accepted terminal miss distance.
    pub shoot_tol: f64,
    /// Momentum radius of the multistart grid; derived from the a-priori
    /// speed bound when `None`.
    pub radius: Option<f64>,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { multistart: 64, dt: 1e-3, shoot_tol: 2.0 / 200.0, radius: None }
    }
}

/// Shortest admissible shooting horizon.
pub const DELTA_MIN: f64 = 1e-3;

/// One solution of the two-point problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub p0: Vector,
    pub u_end: f64,
    pub miss: f64,
    pub traj: Trajectory,
}

/// All branches that hit the target, sorted by terminal value (ties by
/// smaller initial momentum). `branches[0]` is the minimizer candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootResult {
    pub branches: Vec<Branch>,
}

impl ShootResult {
    pub fn best(&self) -> &Branch {
        &self.branches[0]
    }

    pub fn u_end(&self) -> f64 {
        self.best().u_end
    }

    pub fn traj(&self) -> &Trajectory {
        &self.best().traj
    }
}

/// Solves `x(0) = x0, u(0) = u0, x(t) = x` for the contact equations by
/// multistart over the initial momentum and keeps every branch that hits
/// the target.
pub fn shoot_minimizer<S: ContactSystem + ?Sized>(
    sys: &S,
    x0: &Point,
    u0: f64,
    x: &Point,
    t: f64,
    opts: &ShootOptions,
) -> Result<ShootResult> {
    if t < DELTA_MIN {
        return Err(Error::Input(format!("shooting horizon {t} is below {DELTA_MIN}")));
    }
    if opts.multistart < 2 {
        return Err(Error::Config("multistart needs at least 2 seeds".into()));
    }
    let dim = sys.dim();
    let radius = match opts.radius {
        Some(r) => r,
        None => {
            let bounds = apriori_bounds(sys, u0 - 1.0, u0 + 1.0, 0.5 * t, t)?;
            let speed = bounds.search_speed();
            sphere(dim, speed).iter().fold(0.0_f64, |m, v| m.max(norm(&sys.momentum(x0, u0, v))))
        }
    };
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Shooting(format!("invalid momentum radius {radius}")));
    }
    let run = |p0: Vector| integrate(sys, &ContactState::new(*x0, u0, p0), t, opts.dt, false);
    let mut candidates: Vec<Vector> = Vec::new();
    if dim == 1 {
        shoot_1d(&run, x0[0], x[0], radius, opts.multistart, &mut candidates)?;
    } else {
        shoot_2d(&run, x, radius, opts.multistart, opts.shoot_tol, &mut candidates)?;
    }
    let mut branches = Vec::new();
    for p0 in candidates {
        let traj = flow(sys, &ContactState::new(*x0, u0, p0), t, opts.dt)?;
        let miss = periodic_distance_unchecked(&traj.last().x, x);
        if miss <= opts.shoot_tol {
            branches.push(Branch { p0, u_end: traj.last().u, miss, traj });
        }
    }
    if branches.is_empty() {
        return Err(Error::Shooting(format!(
            "no initial momentum within radius {radius:.3} reaches {x:?} at t = {t}"
        )));
    }
    branches.sort_by(|a, b| {
        let du = a.u_end - b.u_end;
        if du.abs() <= 1e-12 * (1.0 + a.u_end.abs()) {
            norm(&a.p0).total_cmp(&norm(&b.p0))
        } else {
            a.u_end.total_cmp(&b.u_end)
        }
    });
    Ok(ShootResult { branches })
}

/// On the circle the lifted end point is continuous in `p0`, so every
/// winding of the target between two seeds is located by a bracketed
/// root search.
fn shoot_1d(
    run: &dyn Fn(Vector) -> Result<Trajectory>,
    x0: f64,
    target: f64,
    radius: f64,
    seeds: usize,
    out: &mut Vec<Vector>,
) -> Result<()> {
    let p: Vec<f64> = (0..seeds).map(|i| -radius + 2.0 * radius * i as f64 / (seeds - 1) as f64).collect();
    let end = |q: f64| -> Option<f64> { run([q, 0.0]).ok().map(|tr| tr.lifted_end[0]) };
    let ends: Vec<Option<f64>> = p.iter().map(|&q| end(q)).collect();
    // lift the target next to x0 so that windings count from there
    let base = x0 + crate::grid::wrap_diff(target - x0);
    for i in 0..seeds - 1 {
        let (Some(ea), Some(eb)) = (ends[i], ends[i + 1]) else { continue };
        let (lo, hi) = (ea.min(eb), ea.max(eb));
        let first = (lo - base).ceil() as i64;
        let last = (hi - base).floor() as i64;
        for w in first..=last {
            let goal = base + w as f64;
            let f = |q: f64| end(q).map(|e| e - goal);
            if let Some(q) = illinois(&f, p[i], p[i + 1], ea - goal, eb - goal) {
                out.push([q, 0.0]);
            }
        }
    }
    Ok(())
}

/// Bracketed false position with the Illinois modification.
fn illinois(f: &dyn Fn(f64) -> Option<f64>, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> Option<f64> {
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa * fb > 0.0 {
        return None;
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c)?;
        if fc.abs() <= 1e-13 || (b - a).abs() <= 1e-14 * (1.0 + c.abs()) {
            return Some(c);
        }
        if fc * fb > 0.0 {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Some((a * fb - b * fa) / (fb - fa))
}

fn shoot_2d(
    run: &dyn Fn(Vector) -> Result<Trajectory>,
    target: &Point,
    radius: f64,
    seeds: usize,
    tol: f64,
    out: &mut Vec<Vector>,
) -> Result<()> {
    let miss = |p: &Vector| -> f64 {
        match run(*p) {
            Ok(tr) => {
                let d = periodic_distance_unchecked(&tr.last().x, target);
                d * d
            }
            Err(_) => f64::INFINITY,
        }
    };
    let rings = (seeds as f64).sqrt().ceil() as usize;
    let per_ring = seeds.div_ceil(rings).max(1);
    let mut starts = vec![[0.0, 0.0]];
    for r in 1..=rings {
        let rad = radius * r as f64 / rings as f64;
        for j in 0..per_ring {
            let a = 2.0 * std::f64::consts::PI * (j as f64 + 0.5 * (r % 2) as f64) / per_ring as f64;
            starts.push([rad * a.cos(), rad * a.sin()]);
        }
    }
    let scale = radius / rings as f64;
    for s in starts {
        let (p, fval) = nelder_mead(&miss, s, 0.25 * scale, 400);
        if fval.sqrt() <= tol && !out.iter().any(|q| norm(&[q[0] - p[0], q[1] - p[1]]) < 1e-6) {
            out.push(p);
        }
    }
    Ok(())
}

/// Nelder-Mead minimization in the plane.
pub(crate) fn nelder_mead(f: &dyn Fn(&Vector) -> f64, start: Vector, step: f64, max_iter: usize) -> (Vector, f64) {
    let mut simplex = [start, [start[0] + step, start[1]], [start[0], start[1] + step]];
    let mut vals = simplex.map(|p| f(&p));
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        simplex = order.map(|i| simplex[i]);
        vals = order.map(|i| vals[i]);
        if vals[0] < 1e-28 || (vals[2] - vals[0]).abs() <= 1e-30 {
            break;
        }
        let centroid = [0.5 * (simplex[0][0] + simplex[1][0]), 0.5 * (simplex[0][1] + simplex[1][1])];
        let along = |c: f64| [centroid[0] + c * (simplex[2][0] - centroid[0]), centroid[1] + c * (simplex[2][1] - centroid[1])];
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[2] = xe;
                vals[2] = fe;
            } else {
                simplex[2] = xr;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            simplex[2] = xr;
            vals[2] = fr;
        } else {
            let xc = if fr < vals[2] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < vals[2].min(fr) {
                simplex[2] = xc;
                vals[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = [
                        simplex[0][0] + 0.5 * (simplex[i][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[i][1] - simplex[0][1]),
                    ];
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap_or(0);
    (simplex[best], vals[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{builtin, FamilyParams};

    fn discounted() -> crate::BuiltinSystem {
        builtin("discounted", &FamilyParams::lambda(0.5)).unwrap()
    }

    #[test]
    fn vector_field_examples() {
        let d = discounted();
        let (dx, du, dp) = vector_field(&d, &ContactState::new([0.0; 2], 1.0, [2.0, 0.0]));
        assert_eq!((dx[0], du, dp[0]), (2.0, 1.5, -1.0));
        let (dx, du, dp) = vector_field(&d, &ContactState::new([0.3, 0.0], 0.8, [0.0; 2]));
        assert_eq!((dx[0], du, dp[0]), (0.0, -0.4, 0.0));
        let c = builtin("classical", &FamilyParams::default()).unwrap();
        let (dx, du, dp) = vector_field(&c, &ContactState::new([0.0; 2], 0.0, [1.0, 0.0]));
        assert_eq!((dx[0], du, dp[0]), (1.0, 0.5, 0.0));
    }

    #[test]
    fn flow_examples() {
        let d = discounted();
        let tr = flow(&d, &ContactState::new([0.0; 2], 1.0, [0.0; 2]), 1.0, 1e-3).unwrap();
        assert!((tr.last().u - (-0.5f64).exp()).abs() < 1e-6);
        let c = builtin("classical", &FamilyParams::default()).unwrap();
        let tr = flow(&c, &ContactState::new([0.0; 2], 0.0, [1.0, 0.0]), 1.0, 1e-3).unwrap();
        let end = tr.last();
        assert!(end.x[0].min(1.0 - end.x[0]) < 1e-12);
        assert!((end.u - 0.5).abs() < 1e-12 && (end.p[0] - 1.0).abs() < 1e-12);
        assert!((tr.lifted_end[0] - 1.0).abs() < 1e-12);
        assert!(energy_drift_residual(&c, &tr).unwrap() <= 1e-8);
    }

    #[test]
    fn flow_preconditions() {
        let d = builtin("discounted", &FamilyParams::lambda(200.0)).unwrap();
        let s = ContactState::new([0.0; 2], 0.0, [0.0; 2]);
        assert!(matches!(flow(&d, &s, 1.0, 1e-3), Err(Error::Config(_))));
        assert!(matches!(flow(&discounted(), &s, 1e-3, 1e-2), Err(Error::Config(_))));
    }

    #[test]
    fn growth_limit() {
        assert!((growth(0.0, 2.0) - 2.0).abs() < 1e-15);
        assert!((growth(0.5, 1.0) - 2.0 * (0.5f64.exp() - 1.0)).abs() < 1e-14);
        assert!((growth(1e-12, 1.0) - 1.0).abs() < 1e-10);
    }
}
