//! Forward and backward implicit action functions on the grid, and the
//! checks built on them: Markov composition, recovery of the initial value,
//! forward/backward duality and the Lipschitz bound in `c`.

use serde::Serialize;

use crate::characteristics::growth;
use crate::error::{Error, Result};
use crate::grid::{Point, PeriodicGrid};
use crate::sweep::{Direction, SliceSeries, Solver, SEED_CAP};

/// Grid values of `h_{x0,u0}(., t)` (forward) or `h^{x0,u0}(., t)`
/// (backward) on every time slice. Slice 0 is the penalized point seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionField {
    series: SliceSeries,
    anchor: Point,
    anchor_node: usize,
    u0: f64,
    direction: Direction,
    shift: f64,
}

impl ActionField {
    pub fn series(&self) -> &SliceSeries {
        &self.series
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.series.grid()
    }

    /// The anchor snapped to its grid node.
    pub fn anchor(&self) -> Point {
        self.anchor
    }

    pub fn anchor_node(&self) -> usize {
        self.anchor_node
    }

    pub fn u0(&self) -> f64 {
        self.u0
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Constant added to the Lagrangian.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn horizon(&self) -> f64 {
        self.series.horizon()
    }

    /// Interpolated value at `(x, t)`.
    pub fn value(&self, x: &Point, t: f64) -> Result<f64> {
        self.series.value(x, t)
    }

    /// Interpolated value at `x` on the final slice.
    pub fn final_value(&self, x: &Point) -> Result<f64> {
        self.series.final_value(x)
    }
}

/// Result of [`Solver::markov_residual`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovReport {
    pub residual: f64,
    /// For every node `x`, the anchor node `y` attaining the inner minimum.
    pub argmin: Vec<usize>,
}

impl Solver<'_> {
    /// Forward implicit action `h_{x0,u0}(., t)` for `t` in `[0, horizon]`.
    pub fn forward_action(&self, x0: &Point, u0: f64, horizon: f64) -> Result<ActionField> {
        self.action(x0, u0, horizon, Direction::Forward)
    }

    /// Backward implicit action `h^{x0,u0}(., t)` for `t` in `[0, horizon]`.
    pub fn backward_action(&self, x0: &Point, u0: f64, horizon: f64) -> Result<ActionField> {
        self.action(x0, u0, horizon, Direction::Backward)
    }

    fn action(&self, x0: &Point, u0: f64, horizon: f64, dir: Direction) -> Result<ActionField> {
        if !u0.is_finite() {
            return Err(Error::Domain(format!("non-finite anchor value {u0}")));
        }
        let steps = self.steps_for(horizon)?;
        let grid = *self.grid();
        let node = grid.nearest_node(x0)?;
        let penalty = match dir {
            Direction::Forward => u0 + SEED_CAP,
            Direction::Backward => u0 - SEED_CAP,
        };
        let mut seed = vec![penalty; grid.len()];
        seed[node] = u0;
        let series = self.sweep_stored(seed, steps, dir, None)?;
        Ok(ActionField {
            series,
            anchor: grid.node(node),
            anchor_node: node,
            u0,
            direction: dir,
            shift: self.shift(),
        })
    }

    /// Sup over the grid of `|h(x, t+s) - min_y h_{y, h(y,t)}(x, s)|`, with
    /// the anchors `y` restricted to every `stride`-th node.
    pub fn markov_residual(&self, field: &ActionField, t: f64, s: f64, stride: usize) -> Result<MarkovReport> {
        let dt = self.dt();
        if field.direction() != Direction::Forward {
            return Err(Error::Input("the Markov check needs a forward field".into()));
        }
        if t < 10.0 * dt - 1e-12 || s < dt - 1e-12 || stride == 0 {
            return Err(Error::Input(format!("need t >= 10 dt, s >= dt and stride >= 1 (t = {t}, s = {s})")));
        }
        if t + s > field.horizon() * (1.0 + 1e-12) {
            return Err(Error::Input(format!("t + s = {} exceeds the field horizon {}", t + s, field.horizon())));
        }
        let series = field.series();
        let kt = series.slice_index(t)?;
        let ks = series.slice_index(t + s)?;
        let grid = *self.grid();
        let mut best = vec![f64::INFINITY; grid.len()];
        let mut argmin = vec![0usize; grid.len()];
        for y in (0..grid.len()).step_by(stride) {
            let inner = self.forward_action(&grid.node(y), series.slice(kt)[y], s)?;
            for (i, &v) in inner.series().final_slice().iter().enumerate() {
                if v < best[i] {
                    best[i] = v;
                    argmin[i] = y;
                }
            }
        }
        let target = series.slice(ks);
        let residual = target.iter().zip(&best).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        Ok(MarkovReport { residual, argmin })
    }

    /// Finds `u0` with `h_{x0,u0}(x, t) = target` by bracketed root search
    /// in `u0`, on which the action is strictly increasing.
    pub fn solve_initial_value(&self, x0: &Point, x: &Point, t: f64, target: f64) -> Result<f64> {
        if t < 10.0 * self.dt() - 1e-12 {
            return Err(Error::Input(format!("t = {t} is below 10 dt")));
        }
        if !target.is_finite() {
            return Err(Error::Domain(format!("non-finite target {target}")));
        }
        let f = |u0: f64| -> Result<f64> { Ok(self.forward_action(x0, u0, t)?.final_value(x)? - target) };
        let lambda = self.lambda();
        let (a_t, b_inf) = self.speed_scale_bounds(t);
        let width = (target.abs() + 1.0) * (lambda * t).exp_m1() + (a_t.abs() + b_inf.abs()) * growth(lambda, t) + 1.0;
        let (mut lo, mut hi) = (target - width, target + width);
        let mut flo = f(lo)?;
        let mut fhi = f(hi)?;
        let mut step = width;
        let mut doublings = 0;
        while flo > 0.0 || fhi < 0.0 {
            doublings += 1;
            if doublings > 60 {
                return Err(Error::Unbounded(format!(
                    "no initial value brackets target {target} after 60 doublings"
                )));
            }
            step *= 2.0;
            if flo > 0.0 {
                hi = lo;
                fhi = flo;
                lo -= step;
                flo = f(lo)?;
            } else {
                lo = hi;
                flo = fhi;
                hi += step;
                fhi = f(hi)?;
            }
        }
        // Illinois false position keeps the bracket while converging fast.
        let mut side = 0i8;
        for _ in 0..200 {
            if flo == 0.0 {
                return Ok(lo);
            }
            if fhi == 0.0 {
                return Ok(hi);
            }
            let c = (lo * fhi - hi * flo) / (fhi - flo);
            let fc = f(c)?;
            if fc.abs() <= 1e-10 || hi - lo <= 1e-9 * (1.0 + c.abs()) {
                return Ok(c);
            }
            if fc > 0.0 {
                hi = c;
                fhi = fc;
                if side == -1 {
                    flo *= 0.5;
                }
                side = -1;
            } else {
                lo = c;
                flo = fc;
                if side == 1 {
                    fhi *= 0.5;
                }
                side = 1;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `sup L(x,0,v)` over speeds up to `diam / t`, and `inf L(x,0,.)`.
    fn speed_scale_bounds(&self, t: f64) -> (f64, f64) {
        let grid = self.grid();
        let speed = grid.diameter() / t;
        let mut a: f64 = f64::NEG_INFINITY;
        let mut b: f64 = f64::INFINITY;
        for i in (0..grid.len()).step_by((grid.len() / 64).max(1)) {
            let x = grid.node(i);
            b = b.min(-self.hamiltonian(&x, 0.0, &[0.0, 0.0]));
            for v in [[speed, 0.0], [-speed, 0.0], [0.0, speed], [0.0, -speed]] {
                a = a.max(self.lagrangian(&x, 0.0, &v));
            }
        }
        (a, b)
    }

    /// `|h^{x,u}(x0, t) - u0|` where `u = h_{x0,u0}(x, t)`.
    pub fn duality_roundtrip(&self, x0: &Point, u0: f64, x: &Point, t: f64) -> Result<f64> {
        if t < 10.0 * self.dt() - 1e-12 {
            return Err(Error::Input(format!("t = {t} is below 10 dt")));
        }
        let fwd = self.forward_action(x0, u0, t)?;
        let x_node = self.grid().node(self.grid().nearest_node(x)?);
        let u = fwd.final_value(&x_node)?;
        let bwd = self.backward_action(&x_node, u, t)?;
        Ok((bwd.final_value(&fwd.anchor())? - u0).abs())
    }

    /// Largest ratio `|h^{c1} - h^{c2}| / (e^{lambda t} t |c1 - c2|)` over all
    /// nodes and slice times in `[t_min, horizon]`.
    pub fn c_shift_bound_check(&self, x0: &Point, u0: f64, c1: f64, c2: f64, t_min: f64, horizon: f64) -> Result<f64> {
        if c1 == c2 {
            return Err(Error::Input("c1 and c2 must differ".into()));
        }
        if !(t_min > 0.0 && t_min <= horizon) {
            return Err(Error::Input(format!("need 0 < t_min <= horizon, got {t_min}, {horizon}")));
        }
        let f1 = self.with_shift(self.shift() + c1).forward_action(x0, u0, horizon)?;
        let f2 = self.with_shift(self.shift() + c2).forward_action(x0, u0, horizon)?;
        let lambda = self.lambda();
        let dc = (c1 - c2).abs();
        let mut worst: f64 = 0.0;
        let series = f1.series();
        for k in 1..series.len() {
            let t = series.time(k);
            if t < t_min - 1e-12 {
                continue;
            }
            let bound = (lambda * t).exp() * t * dc;
            for (a, b) in series.slice(k).iter().zip(f2.series().slice(k)) {
                worst = worst.max((a - b).abs() / bound);
            }
        }
        Ok(worst)
    }
}
