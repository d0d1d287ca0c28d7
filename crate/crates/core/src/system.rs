//! Contact Hamiltonians `H(x, u, p)`, their Lagrangians and the built-in model
//! families.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, norm, Point, Vector};

/// A contact Hamiltonian together with its Lagrangian and the constant
/// `lambda` bounding `|dH/du|`.
///
/// Only `hamiltonian`, the three partials, `lambda` and `dim` are required.
/// The Lagrangian and its partials default to the numeric Legendre transform;
/// systems with closed forms should override them since the solvers evaluate
/// the Lagrangian in their inner loops.
pub trait ContactSystem: Send + Sync {
    fn dim(&self) -> usize;
    fn lambda(&self) -> f64;
    fn hamiltonian(&self, x: &Point, u: f64, p: &Vector) -> f64;
    fn dh_dx(&self, x: &Point, u: f64, p: &Vector) -> Vector;
    fn dh_du(&self, x: &Point, u: f64, p: &Vector) -> f64;
    fn dh_dp(&self, x: &Point, u: f64, p: &Vector) -> Vector;

    /// `L(x,u,v) = sup_p <v,p> - H(x,u,p)`. Returns NaN when the supremum
    /// cannot be located.
    fn lagrangian(&self, x: &Point, u: f64, v: &Vector) -> f64 {
        numeric_legendre(self, x, u, v).map_or(f64::NAN, |(l, _)| l)
    }

    /// The maximizing momentum `p*`, equal to `dL/dv`.
    fn momentum(&self, x: &Point, u: f64, v: &Vector) -> Vector {
        numeric_legendre(self, x, u, v).map_or([f64::NAN; 2], |(_, p)| p)
    }

    /// `dL/dx = -dH/dx` at the dual momentum.
    fn dl_dx(&self, x: &Point, u: f64, v: &Vector) -> Vector {
        let p = self.momentum(x, u, v);
        let hx = self.dh_dx(x, u, &p);
        [-hx[0], -hx[1]]
    }

    /// `dL/du = -dH/du` at the dual momentum.
    fn dl_du(&self, x: &Point, u: f64, v: &Vector) -> f64 {
        let p = self.momentum(x, u, v);
        -self.dh_du(x, u, &p)
    }
}

impl<S: ContactSystem + ?Sized> ContactSystem for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn lambda(&self) -> f64 {
        (**self).lambda()
    }
    fn hamiltonian(&self, x: &Point, u: f64, p: &Vector) -> f64 {
        (**self).hamiltonian(x, u, p)
    }
    fn dh_dx(&self, x: &Point, u: f64, p: &Vector) -> Vector {
        (**self).dh_dx(x, u, p)
    }
    fn dh_du(&self, x: &Point, u: f64, p: &Vector) -> f64 {
        (**self).dh_du(x, u, p)
    }
    fn dh_dp(&self, x: &Point, u: f64, p: &Vector) -> Vector {
        (**self).dh_dp(x, u, p)
    }
    fn lagrangian(&self, x: &Point, u: f64, v: &Vector) -> f64 {
        (**self).lagrangian(x, u, v)
    }
    fn momentum(&self, x: &Point, u: f64, v: &Vector) -> Vector {
        (**self).momentum(x, u, v)
    }
    fn dl_dx(&self, x: &Point, u: f64, v: &Vector) -> Vector {
        (**self).dl_dx(x, u, v)
    }
    fn dl_du(&self, x: &Point, u: f64, v: &Vector) -> f64 {
        (**self).dl_du(x, u, v)
    }
}

const LEGENDRE_TOL: f64 = 1e-10;
const BRACKET_LIMIT: f64 = 1e8;

/// Computes `L(x,u,v)` and the maximizing momentum numerically from `H`
/// alone, ignoring any closed form the system may provide.
pub fn legendre_transform<S: ContactSystem + ?Sized>(
    sys: &S,
    x: &Point,
    u: f64,
    v: &Vector,
) -> Result<(f64, Vector)> {
    if !(x.iter().chain(v.iter()).all(|c| c.is_finite()) && u.is_finite()) {
        return Err(Error::Domain("non-finite argument to the Legendre transform".into()));
    }
    numeric_legendre(sys, x, u, v)
}

fn numeric_legendre<S: ContactSystem + ?Sized>(
    sys: &S,
    x: &Point,
    u: f64,
    v: &Vector,
) -> Result<(f64, Vector)> {
    let p = if sys.dim() == 1 {
        [maximize_1d(sys, x, u, v, [0.0, 0.0], [1.0, 0.0])?, 0.0]
    } else {
        maximize_2d(sys, x, u, v)?
    };
    let hp = sys.dh_dp(x, u, &p);
    let mismatch = ((hp[0] - v[0]).powi(2) + (hp[1] - v[1]).powi(2)).sqrt();
    if !(mismatch <= 1e-6 * (1.0 + norm(v))) {
        return Err(Error::Convexity(format!(
            "maximizer p = {p:?} does not invert dH/dp at v = {v:?} (mismatch {mismatch:e})"
        )));
    }
    Ok((dot(v, &p) - sys.hamiltonian(x, u, &p), p))
}

/// Maximizes `t -> <v, base + t e> - H` along the line through `base` with
/// direction `e`, by bracketing the sign change of the directional derivative
/// and bisecting it.
fn maximize_1d<S: ContactSystem + ?Sized>(
    sys: &S,
    x: &Point,
    u: f64,
    v: &Vector,
    base: Vector,
    e: Vector,
) -> Result<f64> {
    let slope = |t: f64| {
        let p = [base[0] + t * e[0], base[1] + t * e[1]];
        dot(v, &e) - dot(&sys.dh_dp(x, u, &p), &e)
    };
    let g0 = slope(0.0);
    if g0 == 0.0 {
        return Ok(0.0);
    }
    let dir = g0.signum();
    let (mut lo, mut hi) = (0.0, dir);
    while slope(hi) * dir > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi.abs() > BRACKET_LIMIT || !hi.is_finite() {
            return Err(Error::Convexity(format!(
                "no maximizer of <v,p> - H found along {e:?} for v = {v:?}; H is not superlinear"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= LEGENDRE_TOL * (1.0 + mid.abs()) {
            break;
        }
        if slope(mid) * dir > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn maximize_2d<S: ContactSystem + ?Sized>(sys: &S, x: &Point, u: f64, v: &Vector) -> Result<Vector> {
    let objective = |p: &Vector| dot(v, p) - sys.hamiltonian(x, u, p);
    let mut p = [0.0, 0.0];
    for _ in 0..100 {
        let hp = sys.dh_dp(x, u, &p);
        let g = [v[0] - hp[0], v[1] - hp[1]];
        if norm(&g) <= LEGENDRE_TOL {
            return Ok(p);
        }
        let hess = p_hessian(sys, x, u, &p);
        let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
        if !(det > 0.0 && hess[0][0] > 0.0) {
            break;
        }
        let step = [
            (hess[1][1] * g[0] - hess[0][1] * g[1]) / det,
            (hess[0][0] * g[1] - hess[1][0] * g[0]) / det,
        ];
        let f0 = objective(&p);
        let mut alpha = 1.0;
        loop {
            let trial = [p[0] + alpha * step[0], p[1] + alpha * step[1]];
            if objective(&trial) >= f0 || alpha < 1e-12 {
                p = trial;
                break;
            }
            alpha *= 0.5;
        }
        if norm(&step) * alpha <= LEGENDRE_TOL * (1.0 + norm(&p)) {
            return Ok(p);
        }
    }
    // Alternating line maximizations along the axes.
    let mut p = [0.0, 0.0];
    for _ in 0..500 {
        let old = p;
        let t0 = maximize_1d(sys, x, u, v, p, [1.0, 0.0])?;
        p[0] += t0;
        let t1 = maximize_1d(sys, x, u, v, p, [0.0, 1.0])?;
        p[1] += t1;
        if ((p[0] - old[0]).powi(2) + (p[1] - old[1]).powi(2)).sqrt() <= LEGENDRE_TOL {
            break;
        }
    }
    Ok(p)
}

/// Central-difference Hessian of `H` in `p`, built from `dH/dp`.
fn p_hessian<S: ContactSystem + ?Sized>(sys: &S, x: &Point, u: f64, p: &Vector) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for j in 0..sys.dim() {
        let eps = 1e-5 * (1.0 + p[j].abs());
        let mut a = *p;
        let mut b = *p;
        a[j] += eps;
        b[j] -= eps;
        let ga = sys.dh_dp(x, u, &a);
        let gb = sys.dh_dp(x, u, &b);
        for i in 0..2 {
            out[i][j] = (ga[i] - gb[i]) / (2.0 * eps);
        }
    }
    if sys.dim() == 1 {
        out[1][1] = 1.0;
        out[0][1] = 0.0;
        out[1][0] = 0.0;
    }
    out
}

/// The built-in model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `H = |p|^2 / 2`
    Classical,
    /// `H = |p|^2 / 2 + lambda u + V(x)`
    Discounted,
    /// `H = |p|^2 / 2 + V(x)`
    Mechanical,
    /// `H = |p|^2 / 2 + lambda sin(u) + V(x)`
    Nonmonotone,
    /// `H = cosh(|p|) + lambda u`
    Coshcase,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Classical,
        Family::Discounted,
        Family::Mechanical,
        Family::Nonmonotone,
        Family::Coshcase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Classical => "classical",
            Family::Discounted => "discounted",
            Family::Mechanical => "mechanical",
            Family::Nonmonotone => "nonmonotone",
            Family::Coshcase => "coshcase",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown family '{s}'")))
    }
}

/// Optional family parameters. Missing values take family defaults:
/// `lambda = 0.5` where the family has a `u` term, `amp = 1` for the
/// mechanical family and `amp = 0` otherwise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub amp: Option<f64>,
    #[serde(default)]
    pub dim: Option<usize>,
}

impl FamilyParams {
    pub fn lambda(lambda: f64) -> Self {
        Self { lambda: Some(lambda), ..Self::default() }
    }

    pub fn amp(amp: f64) -> Self {
        Self { amp: Some(amp), ..Self::default() }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_amp(mut self, amp: f64) -> Self {
        self.amp = Some(amp);
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }
}

/// A built-in family with closed-form Lagrangian and partials.
/// The potential is `V(x) = amp cos(2 pi x_1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BuiltinSystem {
    family: Family,
    lambda: f64,
    amp: f64,
    dim: usize,
}

/// Constructs a built-in family by name.
pub fn builtin(family: &str, params: &FamilyParams) -> Result<BuiltinSystem> {
    BuiltinSystem::new(family.parse()?, params)
}

impl BuiltinSystem {
    pub fn new(family: Family, params: &FamilyParams) -> Result<Self> {
        let dim = params.dim.unwrap_or(1);
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {dim}")));
        }
        let lambda = match family {
            Family::Classical | Family::Mechanical => {
                if params.lambda.is_some_and(|l| l != 0.0) {
                    return Err(Error::Config(format!("family {family} has lambda = 0")));
                }
                0.0
            }
            _ => params.lambda.unwrap_or(0.5),
        };
        let amp = match family {
            Family::Classical | Family::Coshcase => {
                if params.amp.is_some_and(|a| a != 0.0) {
                    return Err(Error::Config(format!("family {family} has no potential")));
                }
                0.0
            }
            Family::Mechanical => params.amp.unwrap_or(1.0),
            _ => params.amp.unwrap_or(0.0),
        };
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if !amp.is_finite() {
            return Err(Error::Config("amp must be finite".into()));
        }
        Ok(Self { family, lambda, amp, dim })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn amp(&self) -> f64 {
        self.amp
    }

    fn potential(&self, x: &Point) -> f64 {
        if self.amp == 0.0 {
            0.0
        } else {
            self.amp * (2.0 * PI * x[0]).cos()
        }
    }

    fn potential_grad(&self, x: &Point) -> Vector {
        if self.amp == 0.0 {
            [0.0, 0.0]
        } else {
            [-2.0 * PI * self.amp * (2.0 * PI * x[0]).sin(), 0.0]
        }
    }

    fn u_term(&self, u: f64) -> f64 {
        match self.family {
            Family::Classical | Family::Mechanical => 0.0,
            Family::Nonmonotone => self.lambda * u.sin(),
            Family::Discounted | Family::Coshcase => self.lambda * u,
        }
    }

    fn u_term_du(&self, u: f64) -> f64 {
        match self.family {
            Family::Classical | Family::Mechanical => 0.0,
            Family::Nonmonotone => self.lambda * u.cos(),
            Family::Discounted | Family::Coshcase => self.lambda,
        }
    }
}

/// `sinh(r) / r`, continuous at 0.
fn sinhc(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 + r * r / 6.0
    } else {
        r.sinh() / r
    }
}

/// `asinh(r) / r`, continuous at 0.
fn asinhc(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 - r * r / 6.0
    } else {
        r.asinh() / r
    }
}

impl ContactSystem for BuiltinSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn hamiltonian(&self, x: &Point, u: f64, p: &Vector) -> f64 {
        let kinetic = match self.family {
            Family::Coshcase => norm(p).cosh(),
            _ => 0.5 * dot(p, p),
        };
        kinetic + self.u_term(u) + self.potential(x)
    }

    fn dh_dx(&self, x: &Point, _u: f64, _p: &Vector) -> Vector {
        self.potential_grad(x)
    }

    fn dh_du(&self, _x: &Point, u: f64, _p: &Vector) -> f64 {
        self.u_term_du(u)
    }

    fn dh_dp(&self, _x: &Point, _u: f64, p: &Vector) -> Vector {
        match self.family {
            Family::Coshcase => {
                let s = sinhc(norm(p));
                [s * p[0], s * p[1]]
            }
            _ => *p,
        }
    }

    fn lagrangian(&self, x: &Point, u: f64, v: &Vector) -> f64 {
        let kinetic = match self.family {
            Family::Coshcase => {
                let r = norm(v);
                r * r.asinh() - (1.0 + r * r).sqrt()
            }
            _ => 0.5 * dot(v, v),
        };
        kinetic - self.u_term(u) - self.potential(x)
    }

    fn momentum(&self, _x: &Point, _u: f64, v: &Vector) -> Vector {
        match self.family {
            Family::Coshcase => {
                let s = asinhc(norm(v));
                [s * v[0], s * v[1]]
            }
            _ => *v,
        }
    }

    fn dl_dx(&self, x: &Point, _u: f64, _v: &Vector) -> Vector {
        let g = self.potential_grad(x);
        [-g[0], -g[1]]
    }

    fn dl_du(&self, _x: &Point, u: f64, _v: &Vector) -> f64 {
        -self.u_term_du(u)
    }
}

/// A user-supplied Hamiltonian given as a closure; partials are central
/// finite differences and the Lagrangian is the numeric Legendre transform.
pub struct FnSystem<F> {
    h: F,
    lambda: f64,
    dim: usize,
}

impl<F> FnSystem<F>
where
    F: Fn(&Point, f64, &Vector) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, lambda: f64, h: F) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { h, lambda, dim })
    }

    fn step(c: f64) -> f64 {
        1e-6 * (1.0 + c.abs())
    }
}

impl<F> ContactSystem for FnSystem<F>
where
    F: Fn(&Point, f64, &Vector) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn hamiltonian(&self, x: &Point, u: f64, p: &Vector) -> f64 {
        (self.h)(x, u, p)
    }

    fn dh_dx(&self, x: &Point, u: f64, p: &Vector) -> Vector {
        let mut out = [0.0; 2];
        for (j, o) in out.iter_mut().enumerate().take(self.dim) {
            let e = Self::step(x[j]);
            let mut a = *x;
            let mut b = *x;
            a[j] += e;
            b[j] -= e;
            *o = ((self.h)(&a, u, p) - (self.h)(&b, u, p)) / (2.0 * e);
        }
        out
    }

    fn dh_du(&self, x: &Point, u: f64, p: &Vector) -> f64 {
        let e = Self::step(u);
        ((self.h)(x, u + e, p) - (self.h)(x, u - e, p)) / (2.0 * e)
    }

    fn dh_dp(&self, x: &Point, u: f64, p: &Vector) -> Vector {
        let mut out = [0.0; 2];
        for (j, o) in out.iter_mut().enumerate().take(self.dim) {
            let e = Self::step(p[j]);
            let mut a = *p;
            let mut b = *p;
            a[j] += e;
            b[j] -= e;
            *o = ((self.h)(x, u, &a) - (self.h)(x, u, &b)) / (2.0 * e);
        }
        out
    }
}

/// Sampling region for [`check_assumptions`]: `x` ranges over the whole
/// torus, `u` over `[u_min, u_max]` and `p` over the ball of radius `p_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub u_min: f64,
    pub u_max: f64,
    pub p_radius: f64,
}

impl Default for SampleBox {
    fn default() -> Self {
        Self { u_min: -2.0, u_max: 2.0, p_radius: 4.0 }
    }
}

/// Outcome of one sampled assumption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub passed: bool,
    /// The worst measured value: the smallest Hessian eigenvalue for (H1),
    /// the smallest growth factor for (H2) and the largest excess
    /// `|H_u| - lambda` for (H3).
    pub worst: f64,
    pub witness: Witness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub x: Point,
    pub u: f64,
    pub p: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub positive_definite: AssumptionCheck,
    pub superlinear: AssumptionCheck,
    pub lipschitz_in_u: AssumptionCheck,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.positive_definite.passed && self.superlinear.passed && self.lipschitz_in_u.passed
    }
}

const H1_MIN_EIGENVALUE: f64 = 1e-8;
const H2_GROWTH_FACTOR: f64 = 1.5;
const H3_SLACK: f64 = 1e-9;

/// Samples the convexity, superlinearity and Lipschitz assumptions on `H`.
/// Failures are reported with the worst witness, never returned as errors.
pub fn check_assumptions<S: ContactSystem + ?Sized>(
    sys: &S,
    sample_box: &SampleBox,
    samples: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    let b = sample_box;
    if !(b.u_min.is_finite() && b.u_max.is_finite() && b.p_radius.is_finite())
        || b.u_min > b.u_max
        || b.p_radius <= 0.0
    {
        return Err(Error::Input(format!("invalid sample box {b:?}")));
    }
    let dim = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| -> Vector {
        if dim == 1 {
            [if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0]
        } else {
            let a = rng.random_range(0.0..2.0 * PI);
            [a.cos(), a.sin()]
        }
    };
    let init = Witness { x: [0.0; 2], u: 0.0, p: [0.0; 2] };
    let mut h1 = AssumptionCheck { passed: true, worst: f64::INFINITY, witness: init };
    let mut h2 = AssumptionCheck { passed: true, worst: f64::INFINITY, witness: init };
    let mut h3 = AssumptionCheck { passed: true, worst: f64::NEG_INFINITY, witness: init };
    let lambda = sys.lambda();
    for _ in 0..samples.max(1) {
        let mut x = [rng.random::<f64>(), rng.random::<f64>()];
        if dim == 1 {
            x[1] = 0.0;
        }
        let u = rng.random_range(b.u_min..=b.u_max);
        let e = unit(&mut rng);
        let r = b.p_radius * rng.random::<f64>();
        let p = [r * e[0], r * e[1]];
        let w = Witness { x, u, p };

        let hess = p_hessian(sys, &x, u, &p);
        let eig = if dim == 1 {
            hess[0][0]
        } else {
            let tr = hess[0][0] + hess[1][1];
            let off = 0.5 * (hess[0][1] + hess[1][0]);
            let det = hess[0][0] * hess[1][1] - off * off;
            0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt()
        };
        if !(eig >= h1.worst) {
            h1.worst = eig;
            h1.witness = w;
        }

        let zero = [0.0, 0.0];
        let h0 = sys.hamiltonian(&x, u, &zero);
        let g0 = dot(&sys.dh_dp(&x, u, &zero), &e);
        let q = |rho: f64| (sys.hamiltonian(&x, u, &[rho * e[0], rho * e[1]]) - h0 - rho * g0) / rho;
        let (q1, q8) = (q(1.0), q(8.0));
        let growth = if q1 > 0.0 { q8 / q1 } else { 0.0 };
        if !(growth >= h2.worst) {
            h2.worst = growth;
            h2.witness = Witness { x, u, p: e };
        }

        let excess = sys.dh_du(&x, u, &p).abs() - lambda;
        if !(excess <= h3.worst) {
            h3.worst = excess;
            h3.witness = w;
        }
    }
    h1.passed = h1.worst > H1_MIN_EIGENVALUE;
    h2.passed = h2.worst > H2_GROWTH_FACTOR;
    h3.passed = h3.worst <= H3_SLACK;
    Ok(AssumptionReport { positive_definite: h1, superlinear: h2, lipschitz_in_u: h3 })
}
