//! CSV and JSON artefacts of a run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::grid::Field;
use crate::{Error, Result, Trajectory};

/// 17 significant digits: round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Time-major table `t,<prefix>_1,...`.
pub fn write_series(path: &Path, prefix: &str, times: &[f64], rows: &[Vec<f64>]) -> Result<()> {
    let width = rows.first().map_or(0, Vec::len);
    let mut out = String::from("t");
    for j in 1..=width {
        write!(out, ",{prefix}_{j}").unwrap();
    }
    out.push('\n');
    for (t, row) in times.iter().zip(rows) {
        out.push_str(&fmt_f64(*t));
        for x in row {
            out.push(',');
            out.push_str(&fmt_f64(*x));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parse a table written by [`write_series`] into `(times, rows)`.
pub fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty table", path.display())))?;
    let width = header.split(',').count();
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), i + 2)))?;
        if cells.len() != width {
            return Err(Error::Config(format!(
                "{} line {}: expected {width} columns, found {}",
                path.display(),
                i + 2,
                cells.len()
            )));
        }
        times.push(cells[0]);
        rows.push(cells[1..].to_vec());
    }
    Ok((times, rows))
}

/// `node,x[,y],value` for one state field.
pub fn write_snapshot(path: &Path, field: &Field) -> Result<()> {
    let grid = field.grid();
    let mut out = String::from(if grid.dim() == 2 {
        "node,x,y,value\n"
    } else {
        "node,x,value\n"
    });
    for (k, u) in field.values().iter().enumerate() {
        let c = grid.coords(k);
        write!(out, "{k},{}", fmt_f64(c[0])).unwrap();
        if grid.dim() == 2 {
            write!(out, ",{}", fmt_f64(c[1])).unwrap();
        }
        writeln!(out, ",{}", fmt_f64(*u)).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Write every table of a trajectory under `dir`; returns the paths written.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir.join("snapshots"))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, prefix: &str, rows: &[Vec<f64>]| -> Result<()> {
        let path = dir.join(name);
        write_series(&path, prefix, &traj.times, rows)?;
        written.push(path);
        Ok(())
    };
    emit("kappa.csv", "kappa", &traj.kappa)?;
    emit("v.csv", "v", &traj.v)?;
    emit("readings.csv", "r", &traj.readings)?;
    let envelopes: Vec<Vec<f64>> = traj
        .intervals
        .iter()
        .map(|row| row.iter().flat_map(|w| [w.lo, w.hi]).collect())
        .collect();
    let path = dir.join("intervals.csv");
    let width = traj.intervals.first().map_or(0, Vec::len);
    let mut header = String::from("t");
    for j in 1..=width {
        write!(header, ",lo_{j},hi_{j}").unwrap();
    }
    let mut out = header + "\n";
    for (t, row) in traj.times.iter().zip(&envelopes) {
        out.push_str(&fmt_f64(*t));
        for x in row {
            out.push(',');
            out.push_str(&fmt_f64(*x));
        }
        out.push('\n');
    }
    fs::write(&path, out)?;
    written.push(path);
    for (step, field) in &traj.snapshots {
        let path = dir.join("snapshots").join(format!("step_{step:07}.csv"));
        write_snapshot(&path, field)?;
        written.push(path);
    }
    Ok(written)
}
