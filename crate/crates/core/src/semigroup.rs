//! The backward semigroup `T^-_t` and forward semigroup `T^+_t`, computed
//! either by Picard iteration of the frozen-`u` operator or by a direct
//! implicit sweep, plus the residual checks of their structural properties.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sup_distance, GridFunction, PeriodicGrid, Point, Vector};
use crate::sweep::{Direction, SliceSeries, Solver};

/// Sup-norm stopping tolerance of the Picard iteration.
pub const PICARD_TOL: f64 = 1e-8;
/// Iteration cap of the Picard iteration.
pub const PICARD_MAX_ITER: usize = 200;

/// How an evolution is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolveMode {
    /// Iterate the frozen-`u` operator from `u = phi` to its fixed point.
    Picard,
    /// One implicit sweep.
    Direct,
}

/// Which solver produced a [`ValueField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldOrigin {
    Picard,
    Direct,
    FiniteDifference,
}

impl From<EvolveMode> for FieldOrigin {
    fn from(m: EvolveMode) -> Self {
        match m {
            EvolveMode::Picard => FieldOrigin::Picard,
            EvolveMode::Direct => FieldOrigin::Direct,
        }
    }
}

/// Slices of `T_t phi`, with slice 0 equal to `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    series: SliceSeries,
    initial: GridFunction,
    direction: Direction,
    c_shift: f64,
    origin: FieldOrigin,
    /// Sup-norm change of each Picard iteration (empty for direct sweeps).
    picard_gaps: Vec<f64>,
}

impl ValueField {
    pub(crate) fn from_parts(
        series: SliceSeries,
        initial: GridFunction,
        direction: Direction,
        c_shift: f64,
        origin: FieldOrigin,
    ) -> Self {
        Self { series, initial, direction, c_shift, origin, picard_gaps: Vec::new() }
    }

    pub fn series(&self) -> &SliceSeries {
        &self.series
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.series.grid()
    }

    pub fn initial(&self) -> &GridFunction {
        &self.initial
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn c_shift(&self) -> f64 {
        self.c_shift
    }

    pub fn origin(&self) -> FieldOrigin {
        self.origin
    }

    pub fn picard_gaps(&self) -> &[f64] {
        &self.picard_gaps
    }

    pub fn horizon(&self) -> f64 {
        self.series.horizon()
    }

    pub fn value(&self, x: &Point, t: f64) -> Result<f64> {
        self.series.value(x, t)
    }

    pub fn final_function(&self) -> GridFunction {
        self.series.slice_function(self.series.len() - 1)
    }

    /// The slice at time `t`, which must be a slice time.
    pub fn at(&self, t: f64) -> Result<GridFunction> {
        Ok(self.series.slice_function(self.series.slice_index(t)?))
    }

    /// Replaces the value at one node on every slice from `from_slice` on by
    /// adding `delta`. Used to test the sensitivity of the residual checks.
    pub fn perturb_node(&mut self, node: usize, from_slice: usize, delta: f64) {
        for s in self.series.slices.iter_mut().skip(from_slice) {
            s[node] += delta;
        }
    }
}

/// Outcome of [`Solver::variational_solution_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariationalReport {
    /// Largest violation of `u(g(t2),t2) - u(g(t1),t1) <= int L` over probes.
    pub ineq_violation: f64,
    /// `|u(x,t2) - u(g(t1),t1) - int L|` along the traced optimal curve.
    pub equality_gap: f64,
}

/// Outcome of [`Solver::viscosity_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViscosityReport {
    pub max_residual: f64,
    pub checked_points: usize,
    pub kink_count: usize,
    pub worst_point: Point,
    pub worst_time: f64,
}

/// Settings of [`Solver::viscosity_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityOptions {
    /// Earliest slice time that is checked.
    pub t_min: f64,
    /// A node is a kink when its second difference exceeds this multiple of
    /// the median second difference of its slice (floored at `h^2`).
    pub kink_factor: f64,
}

impl Default for ViscosityOptions {
    fn default() -> Self {
        Self { t_min: 0.1, kink_factor: 10.0 }
    }
}

impl Solver<'_> {
    fn check_initial(&self, phi: &GridFunction) -> Result<()> {
        if phi.grid() != self.grid() {
            return Err(Error::Input("initial data lives on a different grid".into()));
        }
        Ok(())
    }

    /// `T^-_t phi` for `t` in `[0, horizon]`.
    pub fn backward_evolve(&self, phi: &GridFunction, horizon: f64, mode: EvolveMode) -> Result<ValueField> {
        self.evolve(phi, horizon, mode, Direction::Forward)
    }

    /// `T^+_t phi` for `t` in `[0, horizon]`.
    pub fn forward_evolve(&self, phi: &GridFunction, horizon: f64, mode: EvolveMode) -> Result<ValueField> {
        self.evolve(phi, horizon, mode, Direction::Backward)
    }

    fn evolve(&self, phi: &GridFunction, horizon: f64, mode: EvolveMode, dir: Direction) -> Result<ValueField> {
        self.check_initial(phi)?;
        let steps = self.steps_for(horizon)?;
        let (series, picard_gaps) = match mode {
            EvolveMode::Direct => (self.sweep_stored(phi.values().to_vec(), steps, dir, None)?, Vec::new()),
            EvolveMode::Picard => {
                let mut u = vec![phi.values().to_vec(); steps + 1];
                let mut gaps = Vec::new();
                loop {
                    let next = self.sweep_stored(phi.values().to_vec(), steps, dir, Some(&u))?;
                    let gap = next
                        .slices
                        .iter()
                        .zip(&u)
                        .fold(0.0_f64, |m, (a, b)| m.max(sup_distance(a, b)));
                    gaps.push(gap);
                    u = next.slices;
                    if gap <= PICARD_TOL {
                        break;
                    }
                    if gaps.len() >= PICARD_MAX_ITER {
                        return Err(Error::Convergence { iterations: gaps.len(), change: gap });
                    }
                }
                (SliceSeries { grid: *self.grid(), dt: self.dt(), slices: u }, gaps)
            }
        };
        Ok(ValueField {
            series,
            initial: phi.clone(),
            direction: dir,
            c_shift: self.shift(),
            origin: mode.into(),
            picard_gaps,
        })
    }

    /// One application of the frozen-`u` operator: every slice of the result
    /// is the DP value of `phi` with the `u`-argument of `L` read from `u`.
    pub fn picard_apply(&self, phi: &GridFunction, u: &ValueField) -> Result<ValueField> {
        self.check_initial(phi)?;
        let steps = u.series.len() - 1;
        let series = self.sweep_stored(phi.values().to_vec(), steps, u.direction, Some(&u.series.slices))?;
        Ok(ValueField {
            series,
            initial: phi.clone(),
            direction: u.direction,
            c_shift: self.shift(),
            origin: FieldOrigin::Picard,
            picard_gaps: Vec::new(),
        })
    }

    /// A field whose every slice is `phi`, the starting point of the Picard
    /// iteration.
    pub fn constant_field(&self, phi: &GridFunction, horizon: f64, dir: Direction) -> Result<ValueField> {
        self.check_initial(phi)?;
        let steps = self.steps_for(horizon)?;
        Ok(ValueField {
            series: SliceSeries { grid: *self.grid(), dt: self.dt(), slices: vec![phi.values().to_vec(); steps + 1] },
            initial: phi.clone(),
            direction: dir,
            c_shift: self.shift(),
            origin: FieldOrigin::Picard,
            picard_gaps: Vec::new(),
        })
    }

    /// Wraps arbitrary slices as a field, e.g. to test [`Self::picard_apply`]
    /// on perturbed inputs.
    pub fn field_from_slices(&self, phi: &GridFunction, slices: Vec<Vec<f64>>, dir: Direction) -> Result<ValueField> {
        self.check_initial(phi)?;
        let len = self.grid().len();
        if slices.is_empty() || slices.iter().any(|s| s.len() != len || s.iter().any(|v| !v.is_finite())) {
            return Err(Error::Input("slices must be non-empty, finite and match the grid".into()));
        }
        Ok(ValueField {
            series: SliceSeries { grid: *self.grid(), dt: self.dt(), slices },
            initial: phi.clone(),
            direction: dir,
            c_shift: self.shift(),
            origin: FieldOrigin::Picard,
            picard_gaps: Vec::new(),
        })
    }

    /// Sup over the grid of `|T_t phi(x) - min_y h_{y, phi(y)}(x, t)|`, with
    /// anchors on every `stride`-th node.
    pub fn representation_residual(&self, phi: &GridFunction, t: f64, stride: usize) -> Result<f64> {
        self.check_initial(phi)?;
        if t < 10.0 * self.dt() - 1e-12 || stride == 0 {
            return Err(Error::Input(format!("need t >= 10 dt and stride >= 1, got t = {t}")));
        }
        let direct = self.backward_evolve(phi, t, EvolveMode::Direct)?;
        let grid = *self.grid();
        let mut best = vec![f64::INFINITY; grid.len()];
        for y in (0..grid.len()).step_by(stride) {
            let f = self.forward_action(&grid.node(y), phi.values()[y], t)?;
            for (b, &v) in best.iter_mut().zip(f.series().final_slice()) {
                *b = b.min(v);
            }
        }
        Ok(sup_distance(direct.series.final_slice(), &best))
    }

    /// `||T_{t+s} phi - T_t (T_s phi)||` over the grid.
    pub fn semigroup_residual(&self, phi: &GridFunction, t: f64, s: f64) -> Result<f64> {
        self.check_initial(phi)?;
        if t < 10.0 * self.dt() - 1e-12 {
            return Err(Error::Input(format!("need t >= 10 dt, got t = {t}")));
        }
        if s == 0.0 {
            let a = self.backward_evolve(phi, t, EvolveMode::Direct)?;
            let b = self.backward_evolve(phi, t, EvolveMode::Direct)?;
            return Ok(sup_distance(a.series.final_slice(), b.series.final_slice()));
        }
        if s < 10.0 * self.dt() - 1e-12 {
            return Err(Error::Input(format!("need s = 0 or s >= 10 dt, got s = {s}")));
        }
        let whole = self.backward_evolve(phi, t + s, EvolveMode::Direct)?;
        let first = self.backward_evolve(phi, s, EvolveMode::Direct)?;
        let second = self.backward_evolve(&first.final_function(), t, EvolveMode::Direct)?;
        Ok(sup_distance(whole.series.final_slice(), second.series.final_slice()))
    }

    /// Whether `T_t psi < T_t phi` at every node of every slice, given
    /// `psi < phi`.
    pub fn comparison_check(&self, phi: &GridFunction, psi: &GridFunction, horizon: f64) -> Result<bool> {
        self.check_initial(phi)?;
        self.check_initial(psi)?;
        if psi.values().iter().zip(phi.values()).any(|(a, b)| a >= b) {
            return Err(Error::Input("comparison needs psi < phi at every node".into()));
        }
        let a = self.backward_evolve(phi, horizon, EvolveMode::Direct)?;
        let b = self.backward_evolve(psi, horizon, EvolveMode::Direct)?;
        Ok(a.series
            .slices
            .iter()
            .zip(&b.series.slices)
            .all(|(sa, sb)| sa.iter().zip(sb).all(|(x, y)| y < x)))
    }

    /// Checks the calibration property of a backward evolution. Probes are
    /// DP-traced optimal curves with randomly displaced knots, so the
    /// inequality is nearly tight along them and local defects show up; the
    /// unperturbed trace from the median node measures the equality.
    pub fn variational_solution_residual(
        &self,
        field: &ValueField,
        probe_curves: usize,
        seed: u64,
    ) -> Result<VariationalReport> {
        if field.direction != Direction::Forward {
            return Err(Error::Input("the variational check needs a backward evolution".into()));
        }
        let series = &field.series;
        let grid = *self.grid();
        let k_max = series.len() - 1;
        if k_max < 2 {
            return Err(Error::Input("field too short for the variational check".into()));
        }
        let h = grid.spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut violation: f64 = 0.0;
        for probe in 0..probe_curves {
            let end_node = probe % grid.len();
            let k2 = rng.random_range(1..=k_max);
            let k1 = if rng.random::<bool>() { 0 } else { rng.random_range(0..k2) };
            let mut knots = self.trace_back(series, grid.node(end_node), k2, k1)?;
            if probe % 4 != 0 {
                // a smooth bump keeps the probe's speed close to the trace's
                let amp = [rng.random_range(-h..h), rng.random_range(-h..h)];
                let span = (k2 - k1) as f64;
                for (x, k) in knots.iter_mut() {
                    let bump = (std::f64::consts::PI * (*k - k1) as f64 / span).sin();
                    for (c, a) in x.iter_mut().zip(amp).take(grid.dim()) {
                        *c += a * bump;
                    }
                }
            }
            let cost = self.polyline_action(series, &knots)?;
            let rise = series.slice(k2)[end_node] - series.value(&knots[0].0, series.time(k1))?;
            violation = violation.max(rise - cost);
        }

        let k2 = k_max;
        let k1 = k_max / 2;
        let mut order: Vec<usize> = (0..grid.len()).collect();
        order.sort_by(|&a, &b| series.slice(k2)[a].total_cmp(&series.slice(k2)[b]));
        let end_node = order[order.len() / 2];
        let knots = self.trace_back(series, grid.node(end_node), k2, k1)?;
        let cost = self.polyline_action(series, &knots)?;
        let gap = (series.slice(k2)[end_node] - series.value(&knots[0].0, series.time(k1))? - cost).abs();
        Ok(VariationalReport { ineq_violation: violation.max(0.0), equality_gap: gap })
    }

    /// Knots `(x, slice)` of the DP-optimal curve ending at `(x, k2)`, traced
    /// back to slice `k1` and listed forward in time.
    fn trace_back(&self, series: &SliceSeries, mut x: Point, k2: usize, k1: usize) -> Result<Vec<(Point, usize)>> {
        let mut knots = vec![(x, k2)];
        let mut k = k2;
        while k > k1 {
            let (_, choice) = self.trace_step(series, &x, k, Direction::Forward)?;
            let m = choice.m.min(k - k1);
            let frac = m as f64 / choice.m as f64;
            x = [x[0] + frac * (choice.foot[0] - x[0]), x[1] + frac * (choice.foot[1] - x[1])];
            k -= m;
            knots.push((x, k));
        }
        knots.reverse();
        Ok(knots)
    }

    fn polyline_action(&self, series: &SliceSeries, knots: &[(Point, usize)]) -> Result<f64> {
        knots.windows(2).try_fold(0.0, |acc, w| {
            Ok(acc + self.segment_action(series, &w[0].0, series.time(w[0].1), &w[1].0, series.time(w[1].1))?)
        })
    }

    /// `int L(g, u(g, s), g')` along the straight segment from `(a, ta)` to
    /// `(b, tb)`, by the midpoint rule on sub-steps of length `dt`.
    fn segment_action(&self, series: &SliceSeries, a: &Point, ta: f64, b: &Point, tb: f64) -> Result<f64> {
        let duration = tb - ta;
        if duration <= 0.0 {
            return Ok(0.0);
        }
        let v: Vector = [(b[0] - a[0]) / duration, (b[1] - a[1]) / duration];
        let pieces = ((duration / self.dt()).round() as usize).max(1);
        let tau = duration / pieces as f64;
        let mut sum = 0.0;
        for j in 0..pieces {
            let s = (j as f64 + 0.5) * tau;
            let p = [a[0] + v[0] * s, a[1] + v[1] * s];
            let u = series.value(&p, ta + s)?;
            sum += tau * self.lagrangian(&p, u, &v);
        }
        Ok(sum)
    }

    /// Largest `|w_t + H(x, w, Dw) - c|` over nodes where the field is
    /// locally smooth, using central differences in space and time.
    pub fn viscosity_residual(&self, field: &ValueField, opts: &ViscosityOptions) -> Result<ViscosityReport> {
        let series = &field.series;
        let grid = *self.grid();
        if series.len() < 3 {
            return Err(Error::Input("field needs at least three slices".into()));
        }
        let dt = series.dt();
        let sign = match field.direction {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        };
        let mut report = ViscosityReport {
            max_residual: 0.0,
            checked_points: 0,
            kink_count: 0,
            worst_point: [0.0; 2],
            worst_time: 0.0,
        };
        // Mixed segment lengths leave slice-to-slice jitter of the order of
        // the scheme error, so w_t is differenced over the longest lookback.
        let j = (self.max_lookback() / 2).max(1).min((series.len() - 1) / 2).max(1);
        for k in j..series.len() - j {
            let t = series.time(k);
            if t < opts.t_min - 1e-12 {
                continue;
            }
            let s = series.slice(k);
            let kinds = node_kinds(&grid, s, opts.kink_factor);
            for (i, kind) in kinds.iter().enumerate() {
                match kind {
                    NodeKind::Kink => report.kink_count += 1,
                    NodeKind::NearKink => {}
                    NodeKind::Smooth => {
                        let p = central_gradient(&grid, s, i);
                        let wt = (series.slice(k + j)[i] - series.slice(k - j)[i]) / (2.0 * j as f64 * dt);
                        let x = grid.node(i);
                        let r = (wt + sign * (self.system().hamiltonian(&x, s[i], &p) - field.c_shift)).abs();
                        report.checked_points += 1;
                        if r > report.max_residual {
                            report.max_residual = r;
                            report.worst_point = x;
                            report.worst_time = t;
                        }
                    }
                }
            }
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NodeKind {
    Smooth,
    /// Adjacent to a kink, so central differences straddle it.
    NearKink,
    Kink,
}

fn neighbour(grid: &PeriodicGrid, s: &[f64], i: usize, d: usize, off: i64) -> f64 {
    let mut mi = grid.multi_index(i).map(|c| c as i64);
    mi[d] += off;
    s[grid.flat_index(mi)]
}

/// Flags nodes whose largest second difference exceeds `factor` times the
/// median one. The median is floored at `h^2` so that piecewise-linear
/// slices do not flag every node against a vanishing median.
pub(crate) fn node_kinds(grid: &PeriodicGrid, s: &[f64], factor: f64) -> Vec<NodeKind> {
    let h = grid.spacing();
    let second: Vec<f64> = (0..grid.len())
        .map(|i| {
            (0..grid.dim())
                .map(|d| (neighbour(grid, s, i, d, 1) - 2.0 * s[i] + neighbour(grid, s, i, d, -1)).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let mut sorted = second.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = factor * sorted[sorted.len() / 2].max(h * h);
    let kink: Vec<bool> = second.iter().map(|&v| v > threshold).collect();
    (0..grid.len())
        .map(|i| {
            if kink[i] {
                return NodeKind::Kink;
            }
            let near = (0..grid.dim()).any(|d| {
                [-1i64, 1].iter().any(|&o| {
                    let mut mi = grid.multi_index(i).map(|c| c as i64);
                    mi[d] += o;
                    kink[grid.flat_index(mi)]
                })
            });
            if near {
                NodeKind::NearKink
            } else {
                NodeKind::Smooth
            }
        })
        .collect()
}

pub(crate) fn central_gradient(grid: &PeriodicGrid, s: &[f64], i: usize) -> Vector {
    let h = grid.spacing();
    let mut p = [0.0; 2];
    for (d, pd) in p.iter_mut().enumerate().take(grid.dim()) {
        *pd = (neighbour(grid, s, i, d, 1) - neighbour(grid, s, i, d, -1)) / (2.0 * h);
    }
    p
}
