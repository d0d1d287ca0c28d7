//! The implicit dynamic-programming sweep shared by the action functions and
//! the semigroups.
//!
//! One step advances a slice by `dt`. The value at a target point `x` is the
//! best over candidate feet `y` of the implicit relation
//!
//! ```text
//! w = prev(y) + sigma * dt * L(y, w, v)          forward: sigma = +1, min
//!                                                backward: sigma = -1, max
//! ```
//!
//! where `v` is the velocity of the straight segment joining `y` and `x`.
//! Besides the grid nodes in the search window, every segment between two
//! nodes contributes the foot at which the interpolated objective is
//! stationary, and earlier slices `k - m` (for the lookbacks `m > 1`)
//! contribute long segments with trapezoidal quadrature. Both kinds of
//! candidate cut the numerical diffusion of a single-step node scheme.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::apriori_bounds;
use crate::error::{Error, Result};
use crate::grid::{wrap_coord, GridFunction, PeriodicGrid, Point, Vector};
use crate::system::ContactSystem;

/// Penalty added to the anchor value away from the anchor node of a point
/// seed.
pub const SEED_CAP: f64 = 1e6;

const MAX_FIXED_POINT_ITERATIONS: usize = 100;
const FIXED_POINT_TOL: f64 = 1e-14;
const MIN_SEARCH_SPEED: f64 = 4.0;
const MAX_SEARCH_SPEED: f64 = 64.0;

/// Time orientation of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Infimum over curves ending at the target; forward action and `T^-`.
    Forward,
    /// Supremum with the opposite sign; backward action and `T^+`.
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Discretization parameters of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub dt: f64,
    /// Largest velocity resolved by single-step candidates. Derived from the
    /// a-priori speed bound when `None`.
    pub search_speed: Option<f64>,
    /// Slice offsets `m` whose segments compete at each step; must contain 1.
    pub lookbacks: Vec<usize>,
    /// Half-width in nodes of the window used for lookbacks `m > 1`.
    pub lookback_window: usize,
    /// Evaluate `L` at the segment midpoint instead of the foot for `m = 1`.
    pub midpoint_l: bool,
}

impl Scheme {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            search_speed: None,
            lookbacks: vec![1, 3, 9, 27],
            lookback_window: 4,
            midpoint_l: false,
        }
    }

    /// Only single-step candidates.
    pub fn single_step(dt: f64) -> Self {
        Self { lookbacks: vec![1], ..Self::new(dt) }
    }

    pub fn with_search_speed(mut self, speed: f64) -> Self {
        self.search_speed = Some(speed);
        self
    }

    /// Sets the search speed from the a-priori bounds of the box
    /// `u0 in [a, b]`, `t in [delta, horizon]`.
    pub fn with_box(self, sys: &dyn ContactSystem, a: f64, b: f64, delta: f64, horizon: f64) -> Result<Self> {
        let speed = apriori_bounds(sys, a, b, delta, horizon)?.search_speed();
        Ok(self.with_search_speed(speed.clamp(MIN_SEARCH_SPEED, MAX_SEARCH_SPEED)))
    }

    pub fn with_lookbacks(mut self, lookbacks: Vec<usize>) -> Self {
        self.lookbacks = lookbacks;
        self
    }

    pub fn with_midpoint_l(mut self, on: bool) -> Self {
        self.midpoint_l = on;
        self
    }
}

/// How the DP step picked a value, for tracing curves back through a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    /// Number of slices spanned by the chosen segment.
    pub m: usize,
    /// Foot of the segment, in the universal cover.
    pub foot: Point,
    pub velocity: Vector,
}

/// A system, a grid and a discretization, plus a constant `c` added to the
/// Lagrangian (the `c`-shifted problem with Hamiltonian `H - c`).
#[derive(Clone)]
pub struct Solver<'a> {
    sys: &'a dyn ContactSystem,
    grid: PeriodicGrid,
    scheme: Scheme,
    shift: f64,
    search_speed: f64,
    window_single: i64,
    lookbacks: Vec<usize>,
}

impl std::fmt::Debug for Solver<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver")
            .field("grid", &self.grid)
            .field("scheme", &self.scheme)
            .field("shift", &self.shift)
            .field("search_speed", &self.search_speed)
            .finish()
    }
}

impl<'a> Solver<'a> {
    pub fn new(sys: &'a dyn ContactSystem, grid: PeriodicGrid, scheme: Scheme) -> Result<Self> {
        let dt = scheme.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if sys.dim() != grid.dim() {
            return Err(Error::Config(format!(
                "system dimension {} does not match grid dimension {}",
                sys.dim(),
                grid.dim()
            )));
        }
        let lambda = sys.lambda();
        if dt * lambda > 0.5 {
            return Err(Error::Config(format!("dt * lambda = {} exceeds 0.5", dt * lambda)));
        }
        if !scheme.lookbacks.contains(&1) || scheme.lookbacks.contains(&0) {
            return Err(Error::Config("lookbacks must contain 1 and no 0".into()));
        }
        let search_speed = match scheme.search_speed {
            Some(s) if s > 0.0 && s.is_finite() => s,
            Some(s) => return Err(Error::Config(format!("invalid search speed {s}"))),
            None => apriori_bounds(sys, -1.0, 1.0, 0.5, 1.0)?
                .search_speed()
                .clamp(MIN_SEARCH_SPEED, MAX_SEARCH_SPEED),
        };
        let h = grid.spacing();
        let window_single = (search_speed * dt / h).ceil() as i64 + 2;
        // Longer segments are only kept while their implicit solve contracts
        // with factor at most 1/2 and the quadrature weights stay monotone.
        let mut lookbacks: Vec<usize> = scheme
            .lookbacks
            .iter()
            .copied()
            .filter(|&m| m == 1 || m as f64 * dt * lambda <= 1.0)
            .collect();
        lookbacks.sort_unstable();
        lookbacks.dedup();
        Ok(Self { sys, grid, scheme, shift: 0.0, search_speed, window_single, lookbacks })
    }

    /// The same solver for the Lagrangian `L + c`.
    pub fn with_shift(&self, c: f64) -> Self {
        Self { shift: c, ..self.clone() }
    }

    pub fn system(&self) -> &'a dyn ContactSystem {
        self.sys
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.scheme.dt
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn search_speed(&self) -> f64 {
        self.search_speed
    }

    pub fn lambda(&self) -> f64 {
        self.sys.lambda()
    }

    /// Lagrangian of the shifted problem.
    pub fn lagrangian(&self, x: &Point, u: f64, v: &Vector) -> f64 {
        self.sys.lagrangian(&wrap_point(x), u, v) + self.shift
    }

    /// Hamiltonian of the shifted problem.
    pub fn hamiltonian(&self, x: &Point, u: f64, p: &Vector) -> f64 {
        self.sys.hamiltonian(&wrap_point(x), u, p) - self.shift
    }

    /// Number of steps of size `dt` covering `horizon`; the horizon must be
    /// a multiple of `dt`.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        let dt = self.dt();
        let k = (horizon / dt).round();
        if !(horizon > 0.0) || k < 1.0 || (k * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::Input(format!("horizon {horizon} is not a positive multiple of dt = {dt}")));
        }
        Ok(k as usize)
    }

    pub(crate) fn max_lookback(&self) -> usize {
        *self.lookbacks.last().unwrap_or(&1)
    }

    /// One step with single-step candidates only.
    pub fn dp_step(&self, prev: &GridFunction, dir: Direction) -> Result<GridFunction> {
        if prev.grid() != &self.grid {
            return Err(Error::Input("slice lives on a different grid".into()));
        }
        let single = Self { lookbacks: vec![1], ..self.clone() };
        let hist = History { slices: vec![prev.values()] };
        let out = single.step_values(&hist, 1, dir, None)?;
        GridFunction::new(self.grid, out)
    }

    /// Runs `steps` steps from `seed`, handing every new slice to `observe`,
    /// which may stop the sweep early.
    /// With `frozen`, the `u`-argument of `L` is read from that field
    /// (one slice per step, starting at the seed time) instead of being
    /// solved for.
    pub(crate) fn sweep(
        &self,
        seed: Vec<f64>,
        steps: usize,
        dir: Direction,
        frozen: Option<&[Vec<f64>]>,
        mut observe: impl FnMut(usize, &[f64]) -> Result<ControlFlow<()>>,
    ) -> Result<()> {
        if let Some(fr) = frozen {
            if fr.len() < steps + 1 {
                return Err(Error::Input("frozen field is shorter than the sweep".into()));
            }
        }
        let depth = self.max_lookback();
        let mut ring: VecDeque<Vec<f64>> = VecDeque::with_capacity(depth + 1);
        if observe(0, &seed)?.is_break() {
            return Ok(());
        }
        ring.push_front(seed);
        for k in 1..=steps {
            let hist = History { slices: ring.iter().map(|s| s.as_slice()).collect() };
            let next = self.step_values(&hist, k, dir, frozen)?;
            if observe(k, &next)?.is_break() {
                return Ok(());
            }
            if ring.len() == depth {
                ring.pop_back();
            }
            ring.push_front(next);
        }
        Ok(())
    }

    fn step_values(
        &self,
        hist: &History<'_>,
        k: usize,
        dir: Direction,
        frozen: Option<&[Vec<f64>]>,
    ) -> Result<Vec<f64>> {
        let len = self.grid.len();
        let eval = |buf: &mut Vec<Candidate>, i: usize| -> Result<f64> {
            let x = self.grid.node(i);
            self.point_value(&x, k, hist, dir, frozen, buf).map(|(w, _)| w)
        };
        if rayon::current_num_threads() > 1 && len >= 256 {
            (0..len)
                .into_par_iter()
                .with_min_len(64)
                .map_init(Vec::new, eval)
                .collect()
        } else {
            let mut buf = Vec::new();
            (0..len).map(|i| eval(&mut buf, i)).collect()
        }
    }

    /// Value and choice of one DP step at an arbitrary point `x`, given the
    /// previous slices of a field (index 0 is slice `k - 1`).
    pub(crate) fn point_value(
        &self,
        x: &Point,
        k: usize,
        hist: &History<'_>,
        dir: Direction,
        frozen: Option<&[Vec<f64>]>,
        buf: &mut Vec<Candidate>,
    ) -> Result<(f64, Choice)> {
        buf.clear();
        for &m in &self.lookbacks {
            if m > k || m > hist.slices.len() {
                break;
            }
            if self.grid.dim() == 1 {
                self.candidates_1d(x, m, hist.slices[m - 1], dir, buf);
            } else {
                self.candidates_2d(x, m, hist.slices[m - 1], dir, buf);
            }
        }
        self.select(x, k, dir, frozen, buf)
    }

    fn candidates_1d(&self, x: &Point, m: usize, prev: &[f64], dir: Direction, buf: &mut Vec<Candidate>) {
        let sigma = dir.sign();
        let n = self.grid.n() as i64;
        let h = self.grid.spacing();
        let d = m as f64 * self.dt();
        let half = if m == 1 { self.window_single } else { self.scheme.lookback_window as i64 };
        let s = if m == 1 { x[0] } else { self.foot_estimate(x, m, prev, dir)[0] } * n as f64;
        let r = s.round();
        let s = if (s - r).abs() < 1e-9 { r } else { s };
        let base = s.floor();
        let i0 = base as i64;
        let (lo, hi) = if s == base { (i0 - half, i0 + half) } else { (i0 - half + 1, i0 + half) };
        let val = |i: i64| prev[i.rem_euclid(n) as usize];
        for i in lo..=hi {
            let f = i as f64 * h;
            buf.push(Candidate::new(m, [f, 0.0], val(i), [-sigma * (f - x[0]) / d, 0.0]));
        }
        for i in lo..hi {
            let (a, b) = (val(i), val(i + 1));
            if let Some(c) = self.stationary_1d(x[0], m, i as f64 * h, a, b, dir) {
                buf.push(c);
            }
        }
    }

    /// Foot of the characteristic through `x` over `m` steps, from the
    /// slope of the slice `m` steps back. Not wrapped.
    fn foot_estimate(&self, x: &Point, m: usize, prev: &[f64], dir: Direction) -> Point {
        let h = self.grid.spacing();
        let d = m as f64 * self.dt();
        let mut p = [0.0; 2];
        for (k, pk) in p.iter_mut().enumerate().take(self.grid.dim()) {
            let mut a = *x;
            let mut b = *x;
            a[k] -= h;
            b[k] += h;
            *pk = (self.grid.interpolate_values(prev, &wrap_point(&b)) - self.grid.interpolate_values(prev, &wrap_point(&a))) / (2.0 * h);
        }
        let u = self.grid.interpolate_values(prev, &wrap_point(x));
        let v = self.sys.dh_dp(&wrap_point(x), u, &p);
        let mut foot = *x;
        for k in 0..self.grid.dim() {
            if v[k].is_finite() {
                foot[k] -= dir.sign() * v[k].clamp(-self.search_speed, self.search_speed) * d;
            }
        }
        foot
    }

    /// Foot inside the segment `[left, left + h]` at which the candidate
    /// value is stationary, if there is one.
    fn stationary_1d(&self, x: f64, m: usize, left: f64, a: f64, b: f64, dir: Direction) -> Option<Candidate> {
        let sigma = dir.sign();
        let h = self.grid.spacing();
        let d = m as f64 * self.dt();
        let slope = (b - a) / h;
        let mut foot = left + 0.5 * h;
        let mut u = 0.5 * (a + b);
        let mut p = slope;
        let mut v = 0.0;
        for it in 0..3 {
            let pos = [foot, 0.0];
            v = self.sys.dh_dp(&wrap_point(&pos), u, &[p, 0.0])[0];
            foot = x - sigma * v * d;
            let theta = (foot - left) / h;
            if it == 0 && !(-0.5..=1.5).contains(&theta) {
                return None;
            }
            u = a + theta.clamp(0.0, 1.0) * (b - a);
            let fw = wrap_point(&[foot, 0.0]);
            let vv = [v, 0.0];
            if m == 1 {
                let scale = if self.scheme.midpoint_l { 0.5 } else { 1.0 };
                p = slope + sigma * scale * d * self.sys.dl_dx(&fw, u, &vv)[0];
            } else {
                let lu = self.sys.dl_du(&fw, u, &vv);
                let lx = self.sys.dl_dx(&fw, u, &vv)[0];
                p = slope * (1.0 + sigma * 0.5 * d * lu) + sigma * 0.5 * d * lx;
            }
        }
        let theta = (foot - left) / h;
        if !(theta > 0.0 && theta < 1.0) || !v.is_finite() {
            return None;
        }
        Some(Candidate::new(m, [foot, 0.0], a + theta * (b - a), [v, 0.0]))
    }

    fn candidates_2d(&self, x: &Point, m: usize, prev: &[f64], dir: Direction, buf: &mut Vec<Candidate>) {
        let sigma = dir.sign();
        let n = self.grid.n() as f64;
        let h = self.grid.spacing();
        let d = m as f64 * self.dt();
        let half = if m == 1 { self.window_single } else { self.scheme.lookback_window as i64 };
        let centre = if m == 1 { *x } else { self.foot_estimate(x, m, prev, dir) };
        let b0 = (centre[0] * n).round() as i64;
        let b1 = (centre[1] * n).round() as i64;
        for j1 in b1 - half..=b1 + half {
            for j0 in b0 - half..=b0 + half {
                let f = [j0 as f64 * h, j1 as f64 * h];
                let val = prev[self.grid.flat_index([j0, j1])];
                let v = [-sigma * (f[0] - x[0]) / d, -sigma * (f[1] - x[1]) / d];
                buf.push(Candidate::new(m, f, val, v));
            }
        }
        // one semi-Lagrangian foot along the local gradient
        let grad = [
            (self.grid.interpolate_values(prev, &[x[0] + h, x[1]])
                - self.grid.interpolate_values(prev, &[x[0] - h, x[1]]))
                / (2.0 * h),
            (self.grid.interpolate_values(prev, &[x[0], x[1] + h])
                - self.grid.interpolate_values(prev, &[x[0], x[1] - h]))
                / (2.0 * h),
        ];
        let u = self.grid.interpolate_values(prev, x);
        let v = self.sys.dh_dp(&wrap_point(x), u, &grad);
        if v.iter().all(|c| c.is_finite()) {
            let f = [x[0] - sigma * v[0] * d, x[1] - sigma * v[1] * d];
            let reach = (half as f64 - 0.5) * h;
            if (f[0] - x[0]).abs() <= reach && (f[1] - x[1]).abs() <= reach {
                let val = self.grid.interpolate_values(prev, &f);
                buf.push(Candidate::new(m, f, val, v));
            }
        }
    }

    /// Solves the implicit relation for every candidate that can still win
    /// and returns the best value. Candidates are screened with the explicit
    /// estimate `e` and the a-priori radius `kappa |e - prev| / (1 - kappa)`
    /// of the exact solution around it, so the result is the same as solving
    /// all of them.
    fn select(
        &self,
        x: &Point,
        k: usize,
        dir: Direction,
        frozen: Option<&[Vec<f64>]>,
        buf: &mut [Candidate],
    ) -> Result<(f64, Choice)> {
        let sigma = dir.sign();
        let dt = self.dt();
        let lambda = self.lambda();
        let u_here = frozen.map(|fr| self.grid.interpolate_values(&fr[k], x));
        let mut bound = f64::INFINITY;
        for c in buf.iter_mut() {
            let d = c.m as f64 * dt;
            if c.m == 1 {
                let pos = if self.scheme.midpoint_l {
                    [0.5 * (c.foot[0] + x[0]), 0.5 * (c.foot[1] + x[1])]
                } else {
                    c.foot
                };
                c.pos = pos;
                let u_arg = u_here.unwrap_or(c.prev);
                c.estimate = c.prev + sigma * d * self.lagrangian(&pos, u_arg, &c.velocity);
                c.kappa = d * lambda;
            } else {
                let u_foot = match frozen {
                    Some(fr) => self.grid.interpolate_values(&fr[k - c.m], &c.foot),
                    None => c.prev,
                };
                c.l_foot = self.lagrangian(&c.foot, u_foot, &c.velocity);
                let u_arg = u_here.unwrap_or(c.prev);
                c.estimate = c.prev + sigma * 0.5 * d * (c.l_foot + self.lagrangian(x, u_arg, &c.velocity));
                c.kappa = 0.5 * d * lambda;
            }
            if frozen.is_some() {
                c.kappa = 0.0;
            }
            c.radius = c.kappa * (c.estimate - c.prev).abs() / (1.0 - c.kappa);
            if !c.estimate.is_finite() {
                return Err(Error::Domain(format!("non-finite Lagrangian value near {x:?}")));
            }
            bound = bound.min(sigma * c.estimate + c.radius);
        }
        let mut best_score = f64::INFINITY;
        let mut best: Option<(f64, usize)> = None;
        for (idx, c) in buf.iter().enumerate() {
            if sigma * c.estimate - c.radius > bound {
                continue;
            }
            let w = if c.kappa == 0.0 { c.estimate } else { self.solve_implicit(x, c, dir)? };
            let score = sigma * w;
            if score < best_score {
                best_score = score;
                best = Some((w, idx));
            }
        }
        let (w, idx) = best.ok_or_else(|| Error::Domain(format!("no admissible candidate at {x:?}")))?;
        let c = &buf[idx];
        Ok((w, Choice { m: c.m, foot: c.foot, velocity: c.velocity }))
    }

    fn solve_implicit(&self, x: &Point, c: &Candidate, dir: Direction) -> Result<f64> {
        let sigma = dir.sign();
        let d = c.m as f64 * self.dt();
        let map = |w: f64| {
            if c.m == 1 {
                c.prev + sigma * d * self.lagrangian(&c.pos, w, &c.velocity)
            } else {
                c.prev + sigma * 0.5 * d * (c.l_foot + self.lagrangian(x, w, &c.velocity))
            }
        };
        let mut w = c.estimate;
        for _ in 0..MAX_FIXED_POINT_ITERATIONS {
            let next = map(w);
            if (next - w).abs() <= FIXED_POINT_TOL * w.abs().max(1.0) {
                return Ok(next);
            }
            w = next;
        }
        Err(Error::Contraction { iterations: MAX_FIXED_POINT_ITERATIONS, dt_lambda: self.dt() * self.lambda() })
    }
}

pub(crate) fn wrap_point(x: &Point) -> Point {
    [wrap_coord(x[0]), wrap_coord(x[1])]
}

/// Previous slices seen from the slice being computed; `slices[m - 1]` is
/// the slice `m` steps back.
pub(crate) struct History<'h> {
    pub(crate) slices: Vec<&'h [f64]>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    m: usize,
    foot: Point,
    prev: f64,
    velocity: Vector,
    pos: Point,
    l_foot: f64,
    estimate: f64,
    kappa: f64,
    radius: f64,
}

impl Candidate {
    fn new(m: usize, foot: Point, prev: f64, velocity: Vector) -> Self {
        Self { m, foot, prev, velocity, pos: foot, l_foot: 0.0, estimate: 0.0, kappa: 0.0, radius: 0.0 }
    }
}

/// Time slices of a grid field with uniform step.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSeries {
    pub(crate) grid: PeriodicGrid,
    pub(crate) dt: f64,
    pub(crate) slices: Vec<Vec<f64>>,
}

impl SliceSeries {
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of slices, including slice 0.
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.slices.len() - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.slices.len()).map(|k| self.time(k)).collect()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn final_slice(&self) -> &[f64] {
        self.slices.last().expect("fields hold at least one slice")
    }

    pub fn slice_function(&self, k: usize) -> GridFunction {
        GridFunction::from_raw(self.grid, self.slices[k].clone())
    }

    /// Index of the slice at time `t`, if `t` is a slice time.
    pub fn slice_index(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if !(k >= 0.0) || (k * self.dt - t).abs() > 1e-9 * t.abs().max(1.0) || k as usize >= self.slices.len() {
            return Err(Error::Input(format!("time {t} is not a slice time within the horizon {}", self.horizon())));
        }
        Ok(k as usize)
    }

    /// Interpolated value at `(x, t)`: multilinear in space, linear in time.
    pub fn value(&self, x: &Point, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon() * (1.0 + 1e-12)) {
            return Err(Error::Input(format!("time {t} outside [0, {}]", self.horizon())));
        }
        let x = crate::grid::wrap(x)?;
        let s = (t / self.dt).min((self.slices.len() - 1) as f64);
        let k = s.floor() as usize;
        let a = self.grid.interpolate_values(&self.slices[k], &x);
        if k + 1 >= self.slices.len() || s == k as f64 {
            return Ok(a);
        }
        let b = self.grid.interpolate_values(&self.slices[k + 1], &x);
        Ok(a + (s - k as f64) * (b - a))
    }

    /// Value at `x` on the final slice.
    pub fn final_value(&self, x: &Point) -> Result<f64> {
        let x = crate::grid::wrap(x)?;
        Ok(self.grid.interpolate_values(self.final_slice(), &x))
    }

    pub(crate) fn history_at(&self, k: usize, depth: usize) -> History<'_> {
        History { slices: (1..=depth.min(k)).map(|m| self.slices[k - m].as_slice()).collect() }
    }
}

impl Solver<'_> {
    /// Recomputes one DP step of `field` at an arbitrary point `x`, returning
    /// the value and the chosen segment.
    pub(crate) fn trace_step(
        &self,
        field: &SliceSeries,
        x: &Point,
        k: usize,
        dir: Direction,
    ) -> Result<(f64, Choice)> {
        let hist = field.history_at(k, self.max_lookback());
        let mut buf = Vec::new();
        self.point_value(x, k, &hist, dir, None, &mut buf)
    }

    /// Runs a sweep and stores every slice.
    pub(crate) fn sweep_stored(
        &self,
        seed: Vec<f64>,
        steps: usize,
        dir: Direction,
        frozen: Option<&[Vec<f64>]>,
    ) -> Result<SliceSeries> {
        let mut slices = Vec::with_capacity(steps + 1);
        self.sweep(seed, steps, dir, frozen, |_, s| {
            slices.push(s.to_vec());
            Ok(ControlFlow::Continue(()))
        })?;
        Ok(SliceSeries { grid: self.grid, dt: self.dt(), slices })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{builtin, FamilyParams};

    #[test]
    fn resting_step_is_exact() {
        let c = builtin("classical", &FamilyParams::default()).unwrap();
        let grid = PeriodicGrid::new(1, 16).unwrap();
        let solver = Solver::new(&c, grid, Scheme::new(0.1)).unwrap();
        let zero = GridFunction::constant(grid, 0.0).unwrap();
        let out = solver.dp_step(&zero, Direction::Forward).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discounted_scalar_fixed_point() {
        let d = builtin("discounted", &FamilyParams::lambda(0.5)).unwrap();
        let grid = PeriodicGrid::new(1, 16).unwrap();
        let solver = Solver::new(&d, grid, Scheme::new(0.01)).unwrap();
        let one = GridFunction::constant(grid, 1.0).unwrap();
        let out = solver.dp_step(&one, Direction::Forward).unwrap();
        for &v in out.values() {
            assert!((v - 1.0 / 1.005).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_large_dt_lambda() {
        let d = builtin("discounted", &FamilyParams::lambda(10.0)).unwrap();
        let grid = PeriodicGrid::new(1, 16).unwrap();
        assert!(matches!(Solver::new(&d, grid, Scheme::new(0.1)), Err(Error::Config(_))));
    }
}
