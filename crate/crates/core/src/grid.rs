//! Flat tori `T^1` and `T^2` with unit period, their uniform grids and grid
//! functions.
//!
//! Points and vectors are stored as `[f64; 2]`; on the circle the second
//! component is ignored and kept at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the torus (or of its universal cover), padded to two components.
pub type Point = [f64; 2];

/// A tangent or cotangent vector, padded to two components.
pub type Vector = [f64; 2];

pub const MAX_DIM: usize = 2;

pub(crate) fn dot(a: &Vector, b: &Vector) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn norm(a: &Vector) -> f64 {
    dot(a, a).sqrt()
}

fn check_finite(x: &Point) -> Result<()> {
    if x.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite point {x:?}")))
    }
}

pub(crate) fn wrap_coord(c: f64) -> f64 {
    let r = c - c.floor();
    // `c - floor(c)` can round up to exactly 1 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Minimal representative of `c` modulo 1 in `[-1/2, 1/2]`.
pub(crate) fn wrap_diff(c: f64) -> f64 {
    c - c.round()
}

/// Reduces `x` modulo 1 componentwise into `[0, 1)`.
pub fn wrap(x: &Point) -> Result<Point> {
    check_finite(x)?;
    Ok([wrap_coord(x[0]), wrap_coord(x[1])])
}

/// Flat distance on the torus: the Euclidean norm of the componentwise
/// minimal wrapped difference.
pub fn periodic_distance(x: &Point, y: &Point) -> Result<f64> {
    check_finite(x)?;
    check_finite(y)?;
    Ok(periodic_distance_unchecked(x, y))
}

pub(crate) fn periodic_distance_unchecked(x: &Point, y: &Point) -> f64 {
    let d0 = wrap_diff(x[0] - y[0]);
    let d1 = wrap_diff(x[1] - y[1]);
    (d0 * d0 + d1 * d1).sqrt()
}

/// Uniform grid with `n` nodes per axis on the unit torus of dimension 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 4 {
            return Err(Error::Config(format!("grid needs at least 4 points per axis, got {n}")));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Total number of nodes, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Diameter of the torus, `sqrt(dim) / 2`.
    pub fn diameter(&self) -> f64 {
        (self.dim as f64).sqrt() / 2.0
    }

    /// Multi-index of a flat node index (axis 0 varies fastest).
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.n, idx / self.n]
        }
    }

    /// Flat node index of a multi-index; components are reduced modulo `n`.
    pub fn flat_index(&self, mi: [i64; 2]) -> usize {
        let n = self.n as i64;
        let i0 = mi[0].rem_euclid(n) as usize;
        if self.dim == 1 {
            i0
        } else {
            i0 + self.n * (mi[1].rem_euclid(n) as usize)
        }
    }

    pub fn node(&self, idx: usize) -> Point {
        let h = self.spacing();
        let mi = self.multi_index(idx);
        if self.dim == 1 {
            [mi[0] as f64 * h, 0.0]
        } else {
            [mi[0] as f64 * h, mi[1] as f64 * h]
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Index of the node closest to `x` (ties resolved towards the lower index).
    pub fn nearest_node(&self, x: &Point) -> Result<usize> {
        let w = wrap(x)?;
        let n = self.n as f64;
        let r0 = (w[0] * n).round() as i64;
        let r1 = if self.dim == 2 { (w[1] * n).round() as i64 } else { 0 };
        Ok(self.flat_index([r0, r1]))
    }

    /// Multilinear periodic interpolation of nodal `values` at `x`.
    pub(crate) fn interpolate_values(&self, values: &[f64], x: &Point) -> f64 {
        let n = self.n;
        let s0 = snap(x[0] * n as f64);
        let f0 = s0.floor();
        let t0 = s0 - f0;
        let i0 = f0 as i64;
        if self.dim == 1 {
            let a = values[self.flat_index([i0, 0])];
            if t0 == 0.0 {
                return a;
            }
            let b = values[self.flat_index([i0 + 1, 0])];
            return a + t0 * (b - a);
        }
        let s1 = snap(x[1] * n as f64);
        let f1 = s1.floor();
        let t1 = s1 - f1;
        let i1 = f1 as i64;
        let v00 = values[self.flat_index([i0, i1])];
        let v10 = values[self.flat_index([i0 + 1, i1])];
        let v01 = values[self.flat_index([i0, i1 + 1])];
        let v11 = values[self.flat_index([i0 + 1, i1 + 1])];
        let lo = v00 + t0 * (v10 - v00);
        let hi = v01 + t0 * (v11 - v01);
        lo + t1 * (hi - lo)
    }
}

/// Rounds cell coordinates that sit on a node up to float noise, so that
/// interpolation reproduces nodal values exactly.
fn snap(s: f64) -> f64 {
    let r = s.round();
    if (s - r).abs() <= 1e-9 { r } else { s }
}

/// Nodal values on a [`PeriodicGrid`]; every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "expected {} nodal values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(&Point) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(|x| f(&x)).collect())
    }

    /// Periodic distance to `center`.
    pub fn distance_to(grid: PeriodicGrid, center: &Point) -> Result<Self> {
        check_finite(center)?;
        Self::from_fn(grid, |x| periodic_distance_unchecked(x, center))
    }

    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Multilinear interpolation with periodic wrap.
    pub fn interpolate(&self, x: &Point) -> Result<f64> {
        let w = wrap(x)?;
        Ok(self.grid.interpolate_values(&self.values, &w))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup norm `max |f|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup-norm distance to another function on the same grid.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Input("grid functions live on different grids".into()));
        }
        Ok(sup_distance(&self.values, &other.values))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap(&[1.25, 0.0]).unwrap()[0], 0.25);
        assert!((wrap(&[-0.1, 0.0]).unwrap()[0] - 0.9).abs() < 1e-15);
        assert_eq!(wrap(&[2.0, -1.0]).unwrap(), [0.0, 0.0]);
        assert!(wrap(&[f64::NAN, 0.0]).is_err());
        let tiny = wrap(&[-1e-20, 0.0]).unwrap()[0];
        assert!((0.0..1.0).contains(&tiny));
    }

    #[test]
    fn distance_examples() {
        assert!((periodic_distance(&[0.1, 0.0], &[0.9, 0.0]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(periodic_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let d = periodic_distance(&[0.9, 0.1], &[0.1, 0.9]).unwrap();
        assert!((d - 0.2 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn interpolation_examples() {
        let g = PeriodicGrid { dim: 1, n: 2 };
        let f = GridFunction::new(g, vec![0.0, 1.0]).unwrap();
        assert_eq!(f.interpolate(&[0.25, 0.0]).unwrap(), 0.5);
        assert_eq!(f.interpolate(&[0.75, 0.0]).unwrap(), 0.5);
        let c = GridFunction::constant(PeriodicGrid::new(2, 8).unwrap(), 3.0).unwrap();
        assert_eq!(c.interpolate(&[0.123, 0.987]).unwrap(), 3.0);
    }

    #[test]
    fn grid_validation() {
        assert!(PeriodicGrid::new(3, 10).is_err());
        assert!(PeriodicGrid::new(1, 3).is_err());
        let g = PeriodicGrid::new(2, 5).unwrap();
        assert_eq!(g.len(), 25);
        for i in 0..g.len() {
            let mi = g.multi_index(i);
            assert_eq!(g.flat_index([mi[0] as i64, mi[1] as i64]), i);
        }
        assert_eq!(g.spacing() * g.n() as f64, 1.0);
    }

    #[test]
    fn nearest_node_wraps() {
        let g = PeriodicGrid::new(1, 10).unwrap();
        assert_eq!(g.nearest_node(&[0.98, 0.0]).unwrap(), 0);
        assert_eq!(g.nearest_node(&[0.21, 0.0]).unwrap(), 2);
    }
}
