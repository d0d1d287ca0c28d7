//! CSV and JSON output. Floats in CSV files carry 12 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::characteristics::Trajectory;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, PeriodicGrid};
use crate::sweep::SliceSeries;
use crate::system::ContactSystem;

/// Formats `v` with 12 significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let e = v.abs().log10().floor() as i32;
    if (-5..12).contains(&e) {
        let decimals = (11 - e).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            let t = s.trim_end_matches('0').trim_end_matches('.');
            if t == "-0" { "0".into() } else { t.to_string() }
        } else {
            s
        }
    } else {
        format!("{v:.11e}")
    }
}

/// Opens `path` for writing, creating parent directories.
fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn coord_names(dim: usize) -> &'static [&'static str] {
    if dim == 1 {
        &["x"]
    } else {
        &["x", "y"]
    }
}

/// Writes `index..., x..., value` rows.
pub fn write_grid_function_csv<W: Write>(out: W, f: &GridFunction) -> Result<()> {
    let grid = f.grid();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = if grid.dim() == 1 { vec!["i"] } else { vec!["i", "j"] };
    header.extend(coord_names(grid.dim()));
    header.push("value");
    w.write_record(&header)?;
    for (idx, &v) in f.values().iter().enumerate() {
        let mi = grid.multi_index(idx);
        let x = grid.node(idx);
        let mut rec: Vec<String> = mi.iter().take(grid.dim()).map(|i| i.to_string()).collect();
        rec.extend(x.iter().take(grid.dim()).map(|&c| fmt_sig(c)));
        rec.push(fmt_sig(v));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_grid_function(path: &Path, f: &GridFunction) -> Result<()> {
    write_grid_function_csv(create(path)?, f)
}

/// Reads a file written by [`write_grid_function_csv`]. The grid is
/// inferred from the index columns.
pub fn load_grid_function(path: &Path) -> Result<GridFunction> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let dim = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["i", "x", "value"] => 1,
        ["i", "j", "x", "y", "value"] => 2,
        other => {
            return Err(Error::Input(format!(
                "{}: expected columns (i, x, value) or (i, j, x, y, value), got {other:?}",
                path.display()
            )))
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec[k].trim().parse::<f64>().map_err(|e| Error::Input(format!("{}: bad number {:?}: {e}", path.display(), &rec[k])))
        };
        let idx: Vec<usize> = (0..dim)
            .map(|k| rec[k].trim().parse::<usize>().map_err(|e| Error::Input(format!("{}: bad index: {e}", path.display()))))
            .collect::<Result<_>>()?;
        rows.push((idx, parse(2 * dim)?));
    }
    let n = if dim == 1 { rows.len() } else { (rows.len() as f64).sqrt().round() as usize };
    if n.pow(dim as u32) != rows.len() {
        return Err(Error::Input(format!("{}: {} rows do not form a {dim}-D grid", path.display(), rows.len())));
    }
    let grid = PeriodicGrid::new(dim, n)?;
    let mut values = vec![f64::NAN; grid.len()];
    for (idx, v) in rows {
        let mi = [idx[0] as i64, idx.get(1).copied().unwrap_or(0) as i64];
        if idx.iter().any(|&i| i >= n) {
            return Err(Error::Input(format!("{}: index {idx:?} outside the grid", path.display())));
        }
        values[grid.flat_index(mi)] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Input(format!("{}: missing or duplicate nodes", path.display())));
    }
    GridFunction::new(grid, values)
}

/// Writes `t, x..., <value_name>` rows for every `stride`-th slice (the
/// last slice is always included).
pub fn write_series_csv<W: Write>(out: W, series: &SliceSeries, stride: usize, value_name: &str) -> Result<()> {
    let grid = series.grid();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t"];
    header.extend(coord_names(grid.dim()));
    header.push(value_name);
    w.write_record(&header)?;
    let last = series.len() - 1;
    let stride = stride.max(1);
    for k in (0..series.len()).filter(|&k| k % stride == 0 || k == last) {
        let t = fmt_sig(series.time(k));
        for (i, &v) in series.slice(k).iter().enumerate() {
            let x = grid.node(i);
            let mut rec = vec![t.clone()];
            rec.extend(x.iter().take(grid.dim()).map(|&c| fmt_sig(c)));
            rec.push(fmt_sig(v));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_series(path: &Path, series: &SliceSeries, stride: usize, value_name: &str) -> Result<()> {
    write_series_csv(create(path)?, series, stride, value_name)
}

/// Writes `s, x..., u, p..., H` rows.
pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory, sys: &dyn ContactSystem) -> Result<()> {
    let dim = sys.dim();
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = if dim == 1 {
        vec!["s", "x", "u", "p", "H"]
    } else {
        vec!["s", "x", "y", "u", "p_x", "p_y", "H"]
    };
    w.write_record(&header)?;
    for (s, st) in traj.times.iter().zip(&traj.states) {
        let mut rec = vec![fmt_sig(*s)];
        rec.extend(st.x.iter().take(dim).map(|&c| fmt_sig(c)));
        rec.push(fmt_sig(st.u));
        rec.extend(st.p.iter().take(dim).map(|&c| fmt_sig(c)));
        rec.push(fmt_sig(sys.hamiltonian(&st.x, st.u, &st.p)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory(path: &Path, traj: &Trajectory, sys: &dyn ContactSystem) -> Result<()> {
    write_trajectory_csv(create(path)?, traj, sys)
}

/// Pretty-printed JSON with a trailing newline.
pub fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.1), "0.1");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(123456.0), "123456");
        assert_eq!(fmt_sig(1e-7), "1.00000000000e-7");
        assert_eq!(fmt_sig(0.0), "0");
        let v = 0.606530659713;
        assert_eq!(fmt_sig(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn grid_function_round_trip() {
        let dir = std::env::temp_dir().join(format!("contact-hj-io-{}", std::process::id()));
        for dim in [1, 2] {
            let grid = PeriodicGrid::new(dim, 6).unwrap();
            let f = GridFunction::from_fn(grid, |x| (x[0] - 0.3 * x[1]).sin()).unwrap();
            let path = dir.join(format!("f{dim}.csv"));
            save_grid_function(&path, &f).unwrap();
            let g = load_grid_function(&path).unwrap();
            assert_eq!(g.grid(), f.grid());
            assert!(g.sup_distance(&f).unwrap() < 1e-11);
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
