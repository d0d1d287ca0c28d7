//! The JSON run configuration and its validation.

use std::path::{Path, PathBuf};

use contact_hj::{
    io::load_grid_function, BuiltinSystem, Direction, ErgodicOptions, EvolveMode, Family, FamilyParams, FdConfig,
    GridFunction, PeriodicGrid, Point, Scheme,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "one")]
    pub dim: usize,
    pub n: usize,
}

fn one() -> usize {
    1
}

/// Data box `u0 in [a, b]`, `t in [delta, T]` of the a-priori bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBox {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl Default for DataBox {
    fn default() -> Self {
        Self { a: -1.0, b: 1.0, delta: 0.5, horizon: 1.0 }
    }
}

/// Initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiSpec {
    Constant(f64),
    DistanceTo(Vec<f64>),
    /// CSV in the grid-function format, relative to the config file.
    Samples(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directions {
    Forward,
    Backward,
    Both,
}

impl Directions {
    pub fn list(self) -> Vec<Direction> {
        match self {
            Directions::Forward => vec![Direction::Forward],
            Directions::Backward => vec![Direction::Backward],
            Directions::Both => vec![Direction::Forward, Direction::Backward],
        }
    }
}

/// Tolerances of the residual table. `verify` uses its own fixed suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub markov: f64,
    pub duality: f64,
    pub semigroup: f64,
    pub viscosity: f64,
    pub stationary: f64,
    pub oracle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { markov: 5e-3, duality: 5e-3, semigroup: 1e-2, viscosity: 5e-2, stationary: 5e-2, oracle: 2e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Family,
    #[serde(default)]
    pub params: FamilyParams,
    pub grid: GridSpec,
    pub dt: f64,
    #[serde(default, rename = "box")]
    pub data_box: DataBox,
    #[serde(default)]
    pub x0: Vec<f64>,
    #[serde(default)]
    pub u0: f64,
    #[serde(default)]
    pub phi: Option<PhiSpec>,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "both")]
    pub direction: Directions,
    #[serde(default = "direct")]
    pub mode: EvolveMode,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub ergodic: ErgodicOptions,
    #[serde(default)]
    pub fd: FdConfig,
    /// Every `stride`-th time slice is written to the CSV outputs.
    #[serde(default = "ten")]
    pub output_stride: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn both() -> Directions {
    Directions::Both
}

fn direct() -> EvolveMode {
    EvolveMode::Direct
}

fn ten() -> usize {
    10
}

pub const DEFAULT_SEED: u64 = 20240917;

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {msg}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.grid;
        if g.dim != 1 && g.dim != 2 {
            return Err(field("grid.dim", format!("must be 1 or 2, got {}", g.dim)));
        }
        if g.n < 4 {
            return Err(field("grid.n", format!("must be at least 4, got {}", g.n)));
        }
        if self.params.dim.is_some_and(|d| d != g.dim) {
            return Err(field("params.dim", "disagrees with grid.dim"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(field("dt", format!("must be positive, got {}", self.dt)));
        }
        let sys = self.system()?;
        let lambda = contact_hj::ContactSystem::lambda(&sys);
        if self.dt * lambda > 0.5 {
            return Err(field("dt", format!("dt * lambda = {} exceeds 0.5", self.dt * lambda)));
        }
        let b = &self.data_box;
        if !(b.a.is_finite() && b.b.is_finite() && b.a <= b.b) {
            return Err(field("box", format!("need finite a <= b, got a = {}, b = {}", b.a, b.b)));
        }
        if !(b.delta > 0.0) {
            return Err(field("box.delta", format!("must be positive, got {}", b.delta)));
        }
        if !(b.delta < b.horizon) {
            return Err(field("box.delta", format!("must be below box.T, got delta = {} >= T = {}", b.delta, b.horizon)));
        }
        if !self.x0.is_empty() && self.x0.len() != g.dim {
            return Err(field("x0", format!("needs {} coordinates, got {}", g.dim, self.x0.len())));
        }
        if self.x0.iter().any(|v| !v.is_finite()) || !self.u0.is_finite() {
            return Err(field("x0/u0", "must be finite"));
        }
        if !self.c.is_finite() {
            return Err(field("c", "must be finite"));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(field("horizon", format!("must be positive, got {h}")));
            }
        }
        match &self.phi {
            Some(PhiSpec::DistanceTo(p)) if p.len() != g.dim => {
                return Err(field("phi.distance_to", format!("needs {} coordinates, got {}", g.dim, p.len())));
            }
            Some(PhiSpec::Constant(v)) if !v.is_finite() => return Err(field("phi.constant", "must be finite")),
            _ => {}
        }
        if self.output_stride == 0 {
            return Err(field("output_stride", "must be at least 1"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("markov", t.markov),
            ("duality", t.duality),
            ("semigroup", t.semigroup),
            ("viscosity", t.viscosity),
            ("stationary", t.stationary),
            ("oracle", t.oracle),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(field(&format!("tolerances.{name}"), format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<BuiltinSystem, CliError> {
        let params = FamilyParams { dim: Some(self.grid.dim), ..self.params };
        BuiltinSystem::new(self.family, &params).map_err(|e| field("params", e))
    }

    pub fn grid(&self) -> Result<PeriodicGrid, CliError> {
        PeriodicGrid::new(self.grid.dim, self.grid.n).map_err(|e| field("grid", e))
    }

    pub fn scheme(&self, sys: &BuiltinSystem) -> Result<Scheme, CliError> {
        let b = &self.data_box;
        Scheme::new(self.dt).with_box(sys, b.a, b.b, b.delta, b.horizon).map_err(|e| field("box", e))
    }

    pub fn anchor(&self) -> Point {
        [self.x0.first().copied().unwrap_or(0.0), self.x0.get(1).copied().unwrap_or(0.0)]
    }

    pub fn horizon_or(&self, default: f64) -> f64 {
        self.horizon.unwrap_or(default)
    }

    /// The configured initial data, or `default` when none is given.
    pub fn initial_data(&self, base: &Path, default: PhiSpec) -> Result<GridFunction, CliError> {
        let grid = self.grid()?;
        let spec = self.phi.clone().unwrap_or(default);
        let f = match spec {
            PhiSpec::Constant(v) => GridFunction::constant(grid, v),
            PhiSpec::DistanceTo(p) => {
                GridFunction::distance_to(grid, &[p[0], p.get(1).copied().unwrap_or(0.0)])
            }
            PhiSpec::Samples(path) => {
                let f = load_grid_function(&base.join(path)).map_err(|e| field("phi.samples", e))?;
                if f.grid() != &grid {
                    return Err(field("phi.samples", format!("grid {:?} does not match grid {:?}", f.grid(), grid)));
                }
                Ok(f)
            }
        };
        f.map_err(|e| field("phi", e))
    }
}
