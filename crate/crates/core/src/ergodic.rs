//! The ergodic problem `H(x, u, Du) = c`: brackets for `c`, long-time
//! classification of `T^c_t phi`, the critical constant and the weak KAM
//! solution `phi_inf = liminf T^c_t phi`.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::characteristics::{apriori_bounds, sphere, x_samples};
use crate::error::{Error, Result};
use crate::grid::{sup_distance, GridFunction};
use crate::semigroup::{central_gradient, node_kinds, EvolveMode, NodeKind};
use crate::sweep::{Direction, Solver};

/// Long-time behaviour of `T^c_t phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Bounded,
    GrowsUp,
    GrowsDown,
}

/// Outcome of [`Solver::classify_c`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub c: f64,
    pub growth: Growth,
    /// Envelope of the evolution up to `time_reached`.
    pub sup: f64,
    pub inf: f64,
    /// Rate of change of the spatial mean over the last quarter of the run,
    /// or the mean rate up to the crossing when the blow-up bound was hit.
    pub drift: f64,
    pub time_reached: f64,
}

/// Which of the three long-time regimes the bracket endpoints fall in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    /// Grows down below `c` and up above it.
    UniqueC,
    /// Bounded for every tested `c`.
    AllCBounded,
    /// Bounded on one side of a threshold only.
    HalfLine,
}

/// Outcome of [`Solver::find_critical_c`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalValue {
    pub c: f64,
    pub case_label: CaseLabel,
    pub bracket: (f64, f64),
    /// Every classification performed, in order.
    pub history: Vec<Classification>,
}

/// A weak KAM solution and its certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicResult {
    pub c: f64,
    pub phi_inf: GridFunction,
    pub case_label: CaseLabel,
    /// `||T^c_tau phi_inf - phi_inf||` for the configured `tau`.
    pub fixed_point_residual: f64,
    /// Largest `|H(x, phi_inf, D phi_inf) - c|` over smooth nodes.
    pub stationary_residual: f64,
    pub kink_count: usize,
    pub horizon_used: f64,
    /// Whether polishing reached `fp_tol`.
    pub certified: bool,
    pub polish_iterations: usize,
}

/// Settings of the ergodic solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErgodicOptions {
    /// Horizon of each classification run.
    pub classify_horizon: f64,
    /// Horizon of the run that produces the liminf proxy.
    pub horizon: f64,
    pub tail_window: f64,
    /// Step of the fixed-point polish.
    pub tau: f64,
    pub fp_tol: f64,
    pub polish_max_iter: usize,
    pub tol_c: f64,
    /// Drifts below this are treated as bounded.
    pub drift_tol: f64,
    /// Returned when every `c` is bounded.
    pub default_c: f64,
    /// Defaults to ten times the a-priori constant `C` of the data box.
    pub blowup_bound: Option<f64>,
    pub kink_factor: f64,
}

impl Default for ErgodicOptions {
    fn default() -> Self {
        Self {
            classify_horizon: 10.0,
            horizon: 40.0,
            tail_window: 5.0,
            tau: 1.0,
            fp_tol: 1e-6,
            polish_max_iter: 50,
            tol_c: 1e-3,
            drift_tol: 1e-3,
            default_c: 0.0,
            blowup_bound: None,
            kink_factor: 10.0,
        }
    }
}

const BRACKET_RETRIES: usize = 10;

impl Solver<'_> {
    /// Constants `c_lo < c_hi` with `T^{c_lo}_1 phi <= phi <= T^{c_hi}_1 phi`,
    /// checked numerically and widened by doubling margins when needed.
    pub fn initial_bracket(&self, phi: &GridFunction) -> Result<(f64, f64)> {
        let sys = self.system();
        let lambda = sys.lambda();
        let norm = phi.sup_norm();
        let xs = x_samples(sys.dim());
        // inf over v of L(x,u,v) is -H(x,u,0)
        let mut a = f64::INFINITY;
        for x in &xs {
            for j in 0..=8 {
                let u = -norm + 2.0 * norm * j as f64 / 8.0;
                a = a.min(-sys.hamiltonian(x, u, &[0.0, 0.0]));
            }
        }
        // sup |L(x,0,v)| over |v| <= diam: the sup of the convex L sits on
        // the sphere and its inf is bounded below by -H(x,0,0)
        let diam = (sys.dim() as f64).sqrt() / 2.0;
        let mut b: f64 = 0.0;
        for x in &xs {
            b = b.max(sys.hamiltonian(x, 0.0, &[0.0, 0.0]).abs());
            for v in sphere(sys.dim(), diam) {
                b = b.max(sys.lagrangian(x, 0.0, &v).abs());
            }
        }
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Domain("non-finite bracket constants".into()));
        }
        let (r_half, r_full) = if lambda > 0.0 {
            (
                lambda * (0.5 * lambda).exp() / (0.5 * lambda).exp_m1(),
                lambda / -(-lambda).exp_m1(),
            )
        } else {
            (2.0, 1.0)
        };
        let c_hi0 = 2.0 * norm + 1.0 - a;
        let c2 = -b - r_half * norm;
        let c_lo0 = (-r_full * norm - b).min(c2 - 1.0);

        let mut margin = 0.5;
        for _ in 0..BRACKET_RETRIES {
            let c_hi = c_hi0 + margin;
            let c_lo = c_lo0 - margin;
            let up = self.with_shift(c_hi).backward_evolve(phi, 1.0, EvolveMode::Direct)?.final_function();
            let down = self.with_shift(c_lo).backward_evolve(phi, 1.0, EvolveMode::Direct)?.final_function();
            let ok_hi = up.values().iter().zip(phi.values()).all(|(t, p)| t >= p);
            let ok_lo = down.values().iter().zip(phi.values()).all(|(t, p)| t <= p);
            if ok_hi && ok_lo {
                return Ok((c_lo, c_hi));
            }
            margin *= 2.0;
        }
        Err(Error::Convergence { iterations: BRACKET_RETRIES, change: margin })
    }

    /// Default blow-up bound: ten times the a-priori constant `C` of the box
    /// `[-|phi| - 1, |phi| + 1]` over unit time.
    pub fn default_blowup_bound(&self, phi: &GridFunction) -> Result<f64> {
        let norm = phi.sup_norm();
        let bounds = apriori_bounds(self.system(), -norm - 1.0, norm + 1.0, 0.5, 1.0)?;
        Ok(10.0 * bounds.c.max(1.0))
    }

    /// Evolves `T^c_t phi` up to `horizon` and reports whether it leaves
    /// `[-blowup_bound, blowup_bound]` or keeps drifting at a steady rate.
    pub fn classify_c(
        &self,
        c: f64,
        phi: &GridFunction,
        horizon: f64,
        blowup_bound: f64,
        drift_tol: f64,
    ) -> Result<Classification> {
        if horizon < 5.0 {
            return Err(Error::Input(format!("classification horizon must be >= 5, got {horizon}")));
        }
        if !(blowup_bound > 0.0) {
            return Err(Error::Input(format!("blow-up bound must be positive, got {blowup_bound}")));
        }
        let solver = self.with_shift(c);
        let steps = solver.steps_for(horizon)?;
        let quarter = steps / 4;
        let marks = [steps - 2 * quarter, steps - quarter, steps];
        let mut means = [0.0; 3];
        let mut sup = f64::NEG_INFINITY;
        let mut inf = f64::INFINITY;
        let mut crossed: Option<(Growth, usize)> = None;
        solver.sweep(phi.values().to_vec(), steps, Direction::Forward, None, |k, s| {
            let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            sup = sup.max(hi);
            inf = inf.min(lo);
            if let Some(j) = marks.iter().position(|&m| m == k) {
                means[j] = s.iter().sum::<f64>() / s.len() as f64;
            }
            if hi > blowup_bound {
                crossed = Some((Growth::GrowsUp, k));
                return Ok(ControlFlow::Break(()));
            }
            if lo < -blowup_bound {
                crossed = Some((Growth::GrowsDown, k));
                return Ok(ControlFlow::Break(()));
            }
            Ok(ControlFlow::Continue(()))
        })?;
        let dt = self.dt();
        if let Some((growth, k)) = crossed {
            let t = k as f64 * dt;
            let m0 = phi.values().iter().sum::<f64>() / phi.values().len() as f64;
            let level = if growth == Growth::GrowsUp { sup } else { inf };
            return Ok(Classification { c, growth, sup, inf, drift: (level - m0) / t, time_reached: t });
        }
        let w = quarter as f64 * dt;
        let d1 = (means[1] - means[0]) / w;
        let d2 = (means[2] - means[1]) / w;
        // A bounded orbit settles, so its drift decays between the windows;
        // an unbounded one keeps a steady rate.
        let steady = d1 * d2 > 0.0 && d2.abs() >= 0.5 * d1.abs();
        let growth = if steady && d2.abs() > drift_tol {
            if d2 > 0.0 {
                Growth::GrowsUp
            } else {
                Growth::GrowsDown
            }
        } else {
            Growth::Bounded
        };
        Ok(Classification { c, growth, sup, inf, drift: d2, time_reached: horizon })
    }

    /// Locates the constant separating downward from upward growth.
    ///
    /// Between a grows-down and a grows-up endpoint the drift is used as a
    /// root function (Illinois false position), which converges in a few
    /// steps when the drift is affine in `c`.
    pub fn find_critical_c(&self, phi: &GridFunction, opts: &ErgodicOptions) -> Result<CriticalValue> {
        if opts.tol_c < 1e-3 {
            return Err(Error::Config(format!("tol_c must be >= 1e-3, got {}", opts.tol_c)));
        }
        // without u-dependence T^c (phi + a) = T^c phi + a, so only the
        // shape of phi matters
        let normalized;
        let phi = if self.lambda() == 0.0 {
            normalized = phi.map(|v| v - phi.min())?;
            &normalized
        } else {
            phi
        };
        let bound = match opts.blowup_bound {
            Some(b) => b,
            None => self.default_blowup_bound(phi)?,
        };
        let bracket = self.initial_bracket(phi)?;
        let mut history = Vec::new();
        let mut classify = |c: f64, history: &mut Vec<Classification>| -> Result<Classification> {
            let r = self.classify_c(c, phi, opts.classify_horizon, bound, opts.drift_tol)?;
            history.push(r);
            Ok(r)
        };
        let lo = classify(bracket.0, &mut history)?;
        let hi = classify(bracket.1, &mut history)?;
        use Growth::*;
        let (c, case_label) = match (lo.growth, hi.growth) {
            (Bounded, Bounded) => (opts.default_c, CaseLabel::AllCBounded),
            (GrowsDown, GrowsUp) => (self.drift_root(lo, hi, opts.tol_c, &mut history, &mut classify)?, CaseLabel::UniqueC),
            (GrowsDown, Bounded) | (Bounded, GrowsUp) => {
                (self.threshold(lo, hi, opts.tol_c, &mut history, &mut classify)?, CaseLabel::HalfLine)
            }
            _ => {
                return Err(Error::Inconsistency(format!(
                    "classification is not monotone in c: {:?} at {} but {:?} at {}",
                    lo.growth, lo.c, hi.growth, hi.c
                )))
            }
        };
        Ok(CriticalValue { c, case_label, bracket, history })
    }

    fn drift_root(
        &self,
        mut lo: Classification,
        mut hi: Classification,
        tol_c: f64,
        history: &mut Vec<Classification>,
        classify: &mut impl FnMut(f64, &mut Vec<Classification>) -> Result<Classification>,
    ) -> Result<f64> {
        let (mut dlo, mut dhi) = (lo.drift, hi.drift);
        let mut side = 0i8;
        for _ in 0..60 {
            if hi.c - lo.c <= tol_c {
                break;
            }
            let mut c = (lo.c * dhi - hi.c * dlo) / (dhi - dlo);
            // keep the probe away from the ends so the bracket always shrinks
            let margin = 0.01 * (hi.c - lo.c);
            c = c.clamp(lo.c + margin, hi.c - margin);
            let r = classify(c, history)?;
            match r.growth {
                Growth::Bounded => return Ok(c),
                Growth::GrowsDown => {
                    lo = r;
                    dlo = r.drift;
                    if side == -1 {
                        dhi *= 0.5;
                    }
                    side = -1;
                }
                Growth::GrowsUp => {
                    hi = r;
                    dhi = r.drift;
                    if side == 1 {
                        dlo *= 0.5;
                    }
                    side = 1;
                }
            }
        }
        Ok(0.5 * (lo.c + hi.c))
    }

    /// Bisects for the edge of the bounded half-line and returns the
    /// bounded side.
    fn threshold(
        &self,
        lo: Classification,
        hi: Classification,
        tol_c: f64,
        history: &mut Vec<Classification>,
        classify: &mut impl FnMut(f64, &mut Vec<Classification>) -> Result<Classification>,
    ) -> Result<f64> {
        let unbounded = if lo.growth == Growth::Bounded { hi.growth } else { lo.growth };
        let (mut a, mut b) = (lo.c, hi.c);
        while b - a > tol_c {
            let m = 0.5 * (a + b);
            let r = classify(m, history)?;
            if r.growth == Growth::Bounded {
                if unbounded == Growth::GrowsUp {
                    a = m;
                } else {
                    b = m;
                }
            } else if r.growth == unbounded {
                if unbounded == Growth::GrowsUp {
                    b = m;
                } else {
                    a = m;
                }
            } else {
                return Err(Error::Inconsistency(format!(
                    "{:?} at c = {m} inside a bracket whose unbounded end {:?}",
                    r.growth, unbounded
                )));
            }
        }
        Ok(if unbounded == Growth::GrowsUp { a } else { b })
    }

    /// Approximates `liminf T^c_t phi` by the running minimum over the last
    /// `tail_window` of `[0, horizon]`, then iterates `T^c_tau` towards a
    /// fixed point.
    pub fn weak_kam_solution(
        &self,
        c: f64,
        case_label: CaseLabel,
        phi: &GridFunction,
        opts: &ErgodicOptions,
    ) -> Result<ErgodicResult> {
        if !(opts.tail_window > 0.0 && opts.tail_window <= opts.horizon) {
            return Err(Error::Config(format!(
                "need 0 < tail_window <= horizon, got {} and {}",
                opts.tail_window, opts.horizon
            )));
        }
        let solver = self.with_shift(c);
        let steps = solver.steps_for(opts.horizon)?;
        let tail_start = steps - ((opts.tail_window / self.dt()).round() as usize).min(steps);
        let mut running = vec![f64::INFINITY; self.grid().len()];
        solver.sweep(phi.values().to_vec(), steps, Direction::Forward, None, |k, s| {
            if k >= tail_start {
                for (r, &v) in running.iter_mut().zip(s) {
                    *r = r.min(v);
                }
            }
            Ok(ControlFlow::Continue(()))
        })?;
        let mut psi = GridFunction::new(*self.grid(), running)?;
        let mut residual;
        let mut iterations = 0;
        loop {
            let next = solver.backward_evolve(&psi, opts.tau, EvolveMode::Direct)?.final_function();
            residual = sup_distance(next.values(), psi.values());
            iterations += 1;
            if residual <= opts.fp_tol || iterations >= opts.polish_max_iter {
                break;
            }
            psi = next;
        }
        let (stationary_residual, kink_count) = self.stationary_residual(&psi, c, opts.kink_factor);
        Ok(ErgodicResult {
            c,
            phi_inf: psi,
            case_label,
            fixed_point_residual: residual,
            stationary_residual,
            kink_count,
            horizon_used: opts.horizon,
            certified: residual <= opts.fp_tol,
            polish_iterations: iterations,
        })
    }

    /// `max |H(x, psi, D psi) - c|` over smooth nodes, and the kink count.
    pub fn stationary_residual(&self, psi: &GridFunction, c: f64, kink_factor: f64) -> (f64, usize) {
        let grid = *self.grid();
        let v = psi.values();
        let mut worst: f64 = 0.0;
        let mut kinks = 0;
        for (i, kind) in node_kinds(&grid, v, kink_factor).into_iter().enumerate() {
            match kind {
                NodeKind::Kink => kinks += 1,
                NodeKind::NearKink => {}
                NodeKind::Smooth => {
                    let p = central_gradient(&grid, v, i);
                    let r = (self.system().hamiltonian(&grid.node(i), v[i], &p) - c).abs();
                    worst = worst.max(r);
                }
            }
        }
        (worst, kinks)
    }

    /// [`Self::find_critical_c`] followed by [`Self::weak_kam_solution`].
    pub fn solve_ergodic(&self, phi: &GridFunction, opts: &ErgodicOptions) -> Result<(CriticalValue, ErgodicResult)> {
        let crit = self.find_critical_c(phi, opts)?;
        let result = self.weak_kam_solution(crit.c, crit.case_label, phi, opts)?;
        Ok((crit, result))
    }
}
