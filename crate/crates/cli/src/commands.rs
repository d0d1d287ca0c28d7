//! The subcommands. Each returns a summary and a residual table; `main`
//! turns them into `report.json`.

use std::path::Path;
use std::time::Instant;

use contact_hj::{
    apriori_bounds, cross_validate, fd_evolve,
    io::{save_grid_function, save_json, save_series},
    verify::family_suite,
    Check, ContactSystem, Direction, EvolveMode, GridFunction, Solver, SuiteConfig, ViscosityOptions,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{PhiSpec, RunConfig};
use crate::error::CliError;

pub struct Outcome {
    pub summary: Value,
    pub residuals: Vec<Check>,
    pub outputs: Vec<String>,
}

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
    /// Directory the config was read from; relative sample paths resolve here.
    pub base: &'a Path,
    pub seed: u64,
}

impl Context<'_> {
    fn save_series(&self, name: &str, series: &contact_hj::SliceSeries, value: &str, outputs: &mut Vec<String>) -> Result<(), CliError> {
        save_series(&self.out.join(name), series, self.cfg.output_stride, value)?;
        outputs.push(name.to_string());
        Ok(())
    }

    fn save_function(&self, name: &str, f: &GridFunction, outputs: &mut Vec<String>) -> Result<(), CliError> {
        save_grid_function(&self.out.join(name), f)?;
        outputs.push(name.to_string());
        Ok(())
    }

    fn save_json(&self, name: &str, v: &impl Serialize, outputs: &mut Vec<String>) -> Result<(), CliError> {
        save_json(&self.out.join(name), v)?;
        outputs.push(name.to_string());
        Ok(())
    }
}

fn dir_name(d: Direction) -> &'static str {
    match d {
        Direction::Forward => "forward",
        Direction::Backward => "backward",
    }
}

pub fn action(ctx: &Context<'_>) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let sys = cfg.system()?;
    let solver = Solver::new(&sys, cfg.grid()?, cfg.scheme(&sys)?)?.with_shift(cfg.c);
    let horizon = cfg.horizon_or(1.0);
    let x0 = cfg.anchor();
    let b = &cfg.data_box;
    let bounds = apriori_bounds(&sys, b.a, b.b, b.delta, b.horizon)?;
    let mut outputs = Vec::new();
    let mut residuals = Vec::new();
    let mut fields = Vec::new();
    for dir in cfg.direction.list() {
        let field = match dir {
            Direction::Forward => solver.forward_action(&x0, cfg.u0, horizon)?,
            Direction::Backward => solver.backward_action(&x0, cfg.u0, horizon)?,
        };
        let name = dir_name(dir);
        ctx.save_series(&format!("action_{name}.csv"), field.series(), "h", &mut outputs)?;
        let last = field.series().final_slice();
        fields.push(json!({
            "direction": name,
            "anchor": field.anchor(),
            "anchor_node": field.anchor_node(),
            "final_min": last.iter().copied().fold(f64::INFINITY, f64::min),
            "final_max": last.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }));
        if dir == Direction::Forward {
            let half = horizon / 2.0;
            let r = solver.markov_residual(&field, half, half, 4)?;
            residuals.push(Check::at_most(format!("Markov residual ({half}, {half})"), r.residual, cfg.tolerances.markov));
        }
    }
    let target = [x0[0] + 0.2, x0[1]];
    residuals.push(Check::at_most(
        "duality round trip",
        solver.duality_roundtrip(&x0, cfg.u0, &target, horizon)?,
        cfg.tolerances.duality,
    ));
    let summary = json!({ "horizon": horizon, "apriori": bounds, "fields": fields });
    Ok(Outcome { summary, residuals, outputs })
}

pub fn evolve(ctx: &Context<'_>) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let sys = cfg.system()?;
    let solver = Solver::new(&sys, cfg.grid()?, cfg.scheme(&sys)?)?.with_shift(cfg.c);
    let horizon = cfg.horizon_or(0.5);
    let phi = cfg.initial_data(ctx.base, PhiSpec::DistanceTo(vec![0.5; cfg.grid.dim]))?;
    let mut outputs = Vec::new();
    let mut residuals = Vec::new();
    let mut fields = Vec::new();
    for dir in cfg.direction.list() {
        let field = match dir {
            Direction::Forward => solver.forward_evolve(&phi, horizon, cfg.mode)?,
            Direction::Backward => solver.backward_evolve(&phi, horizon, cfg.mode)?,
        };
        let name = dir_name(dir);
        ctx.save_series(&format!("evolve_{name}.csv"), field.series(), "w", &mut outputs)?;
        ctx.save_function(&format!("final_{name}.csv"), &field.final_function(), &mut outputs)?;
        fields.push(json!({
            "direction": name,
            "picard_gaps": field.picard_gaps(),
            "final_min": field.final_function().min(),
            "final_max": field.final_function().max(),
        }));
        if dir == Direction::Backward {
            let r = solver.viscosity_residual(&field, &ViscosityOptions::default())?;
            residuals.push(
                Check::at_most("viscosity residual away from kinks", r.max_residual, cfg.tolerances.viscosity)
                    .with_detail(format!("{} kink nodes skipped", r.kink_count)),
            );
            let half = horizon / 2.0;
            residuals.push(Check::at_most(
                format!("semigroup residual ({half}, {half})"),
                solver.semigroup_residual(&phi, half, half)?,
                cfg.tolerances.semigroup,
            ));
        }
    }
    let summary = json!({ "horizon": horizon, "mode": cfg.mode, "fields": fields });
    Ok(Outcome { summary, residuals, outputs })
}

pub fn ergodic(ctx: &Context<'_>) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let sys = cfg.system()?;
    let solver = Solver::new(&sys, cfg.grid()?, cfg.scheme(&sys)?)?;
    let phi = cfg.initial_data(ctx.base, PhiSpec::Constant(0.0))?;
    let (crit, result) = solver.solve_ergodic(&phi, &cfg.ergodic)?;
    let mut outputs = Vec::new();
    ctx.save_function("phi_inf.csv", &result.phi_inf, &mut outputs)?;
    ctx.save_json("critical.json", &crit, &mut outputs)?;
    let residuals = vec![
        Check::at_most("fixed-point residual", result.fixed_point_residual, cfg.ergodic.fp_tol),
        Check::at_most("stationary residual away from kinks", result.stationary_residual, cfg.tolerances.stationary)
            .with_detail(format!("{} kink nodes skipped", result.kink_count)),
    ];
    let summary = json!({
        "c": crit.c,
        "case_label": crit.case_label,
        "bracket": crit.bracket,
        "certified": result.certified,
        "horizon_used": result.horizon_used,
        "polish_iterations": result.polish_iterations,
    });
    Ok(Outcome { summary, residuals, outputs })
}

pub fn verify(ctx: &Context<'_>) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let sys = cfg.system()?;
    let suite = SuiteConfig { n: cfg.grid.n, dt: cfg.dt, seed: ctx.seed };
    let residuals = family_suite(&sys, &suite);
    let failed = residuals.iter().filter(|c| !c.passed).count();
    let summary = json!({ "checks": residuals.len(), "failed": failed });
    Ok(Outcome { summary, residuals, outputs: Vec::new() })
}

pub fn oracle(ctx: &Context<'_>) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let sys = cfg.system()?;
    let solver = Solver::new(&sys, cfg.grid()?, cfg.scheme(&sys)?)?.with_shift(cfg.c);
    let horizon = cfg.horizon_or(0.5);
    let phi = cfg.initial_data(ctx.base, PhiSpec::DistanceTo(vec![0.5; cfg.grid.dim]))?;
    let run = fd_evolve(&sys, &phi, horizon, cfg.c, cfg.dt, &cfg.fd)?;
    let mut outputs = Vec::new();
    ctx.save_series("fd.csv", run.field.series(), "w", &mut outputs)?;
    let gap = cross_validate(&solver, &phi, horizon, &cfg.fd)?;
    let residuals = vec![Check::at_most("|semigroup - finite differences|", gap, cfg.tolerances.oracle)];
    let summary = json!({
        "horizon": horizon,
        "theta": run.theta,
        "internal_dt": run.dt,
        "theta_restarts": run.restarts,
    });
    Ok(Outcome { summary, residuals, outputs })
}

/// Best of `reps` wall-clock timings, in seconds.
fn time<T>(reps: usize, mut f: impl FnMut() -> contact_hj::Result<T>) -> Result<f64, CliError> {
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

pub fn bench(ctx: &Context<'_>) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let sys = cfg.system()?;
    let grid = cfg.grid()?;
    let solver = Solver::new(&sys, grid, cfg.scheme(&sys)?)?.with_shift(cfg.c);
    let horizon = cfg.horizon_or(0.1);
    let phi = cfg.initial_data(ctx.base, PhiSpec::DistanceTo(vec![0.5; cfg.grid.dim]))?;
    let timings = json!({
        "dp_step": time(5, || solver.dp_step(&phi, Direction::Backward))?,
        "backward_evolve_direct": time(3, || solver.backward_evolve(&phi, horizon, EvolveMode::Direct))?,
        "backward_evolve_picard": time(1, || solver.backward_evolve(&phi, horizon, EvolveMode::Picard))?,
        "forward_action": time(3, || solver.forward_action(&cfg.anchor(), cfg.u0, horizon))?,
        "fd_evolve": time(3, || fd_evolve(&sys, &phi, horizon, cfg.c, cfg.dt, &cfg.fd))?,
    });
    let mut outputs = Vec::new();
    ctx.save_json("bench.json", &timings, &mut outputs)?;
    let summary = json!({
        "horizon": horizon,
        "nodes": grid.len(),
        "threads": rayon::current_num_threads(),
        "dim": sys.dim(),
        "seconds": timings,
    });
    Ok(Outcome { summary, residuals: Vec::new(), outputs })
}
