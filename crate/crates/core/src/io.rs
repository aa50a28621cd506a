//! CSV files for measures, traces, experiment tables, plans and duals.
//!
//! Floats are written as `{:.16e}` (17 significant digits); missing values
//! are empty fields. Headers:
//!
//! | file       | header                                                              |
//! |------------|---------------------------------------------------------------------|
//! | measure    | `x,weight,density` (1D) or `x,y,weight,density` (2D)                |
//! | trace      | `iteration,successive_W1,objective,defect`                          |
//! | experiment | `N,seed,pure_nash_found,W1_to_ref,gamma_defect,epsilon_N,sweeps_used` |
//! | plan       | `type_node,strategy_node,mass`                                      |
//! | duals      | `side,node,potential`                                               |

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::finite_games::ExperimentRow;
use crate::measures::{Coupling, DiscreteMeasure};
use crate::model::{Grid, Point};
use crate::solvers::TraceRow;
use crate::transport::{PointCloud, TransportResult};

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// One row per node, zero-weight nodes included. `density` is against `m0`.
pub fn write_measure<W: Write>(out: W, nu: &DiscreteMeasure, m0: &[f64]) -> Result<()> {
    let density = nu.density_wrt(m0)?;
    let grid = nu.grid();
    let mut w = writer(out);
    if grid.dim() == 1 {
        w.write_record(["x", "weight", "density"]).map_err(csv_err)?;
    } else {
        w.write_record(["x", "y", "weight", "density"]).map_err(csv_err)?;
    }
    for (k, (&wt, &d)) in nu.weights().iter().zip(&density).enumerate() {
        let p = grid.point(k);
        let mut rec = vec![format_f64(p[0])];
        if grid.dim() == 2 {
            rec.push(format_f64(p[1]));
        }
        rec.push(format_f64(wt));
        rec.push(format_f64(d));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

/// Reads a measure file as weighted atoms, dropping zero-weight rows.
pub fn read_measure<R: Read>(input: R) -> Result<PointCloud> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let x = col("x").ok_or_else(|| Error::Csv("missing `x` column".into()))?;
    let y = col("y");
    let wcol = col("weight").ok_or_else(|| Error::Csv("missing `weight` column".into()))?;
    let mut points: Vec<Point> = Vec::new();
    let mut weights = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |k: usize| -> Result<f64> {
            let s = rec.get(k).ok_or_else(|| Error::Csv(format!("row {} is short", line + 2)))?;
            s.trim().parse().map_err(|_| Error::Csv(format!("row {}: `{s}` is not a number", line + 2)))
        };
        let weight = field(wcol)?;
        if weight == 0.0 {
            continue;
        }
        points.push([field(x)?, y.map(field).transpose()?.unwrap_or(0.0)]);
        weights.push(weight);
    }
    if points.is_empty() {
        return Err(Error::Csv("no atoms with positive weight".into()));
    }
    PointCloud::new(points, weights)
}

/// Reads a measure file written for `grid`: one row per node, in node order,
/// coordinates matching to `1e-9` of the grid spacing.
pub fn read_measure_on<R: Read>(input: R, grid: Arc<Grid>) -> Result<DiscreteMeasure> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let wcol = col("weight").ok_or_else(|| Error::Csv("missing `weight` column".into()))?;
    let coords: Vec<usize> = ["x", "y"].iter().take(grid.dim()).filter_map(|c| col(c)).collect();
    if coords.len() != grid.dim() {
        return Err(Error::Csv(format!("expected {} coordinate columns", grid.dim())));
    }
    let slack = 1e-9 * grid.min_spacing();
    let mut weights = Vec::with_capacity(grid.len());
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if k >= grid.len() {
            return Err(Error::Csv(format!("more rows than the {} grid nodes", grid.len())));
        }
        let field = |c: usize| -> Result<f64> {
            let s = rec.get(c).ok_or_else(|| Error::Csv(format!("row {} is short", k + 2)))?;
            s.trim().parse().map_err(|_| Error::Csv(format!("row {}: `{s}` is not a number", k + 2)))
        };
        let p = grid.point(k);
        for (axis, &c) in coords.iter().enumerate() {
            if (field(c)? - p[axis]).abs() > slack {
                return Err(Error::Csv(format!("row {} is not at grid node {k}", k + 2)));
            }
        }
        weights.push(field(wcol)?);
    }
    if weights.len() != grid.len() {
        return Err(Error::Csv(format!("{} rows for {} grid nodes", weights.len(), grid.len())));
    }
    DiscreteMeasure::new(grid, weights)
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["iteration", "successive_W1", "objective", "defect"]).map_err(csv_err)?;
    for row in trace {
        w.write_record([
            row.iteration.to_string(),
            format_opt(row.successive_w1),
            format_opt(row.objective),
            format_f64(row.defect),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn write_experiment<W: Write>(out: W, rows: &[ExperimentRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["N", "seed", "pure_nash_found", "W1_to_ref", "gamma_defect", "epsilon_N", "sweeps_used"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.seed.to_string(),
            r.pure_nash_found.to_string(),
            format_f64(r.w1_to_ref),
            format_f64(r.gamma_defect),
            format_opt(r.epsilon_n),
            r.sweeps_used.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn write_plan<W: Write>(out: W, plan: &Coupling) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["type_node", "strategy_node", "mass"]).map_err(csv_err)?;
    for &(i, j, m) in plan.entries() {
        w.write_record([i.to_string(), j.to_string(), format_f64(m)]).map_err(csv_err)?;
    }
    finish(w)
}

pub fn write_duals<W: Write>(out: W, result: &TransportResult) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["side", "node", "potential"]).map_err(csv_err)?;
    let sides = [("type", &result.dual_type_potential), ("strategy", &result.dual_strategy_potential)];
    for (side, values) in sides {
        for (k, v) in values.iter().enumerate() {
            w.write_record([side.to_string(), k.to_string(), format_f64(*v)]).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Square matrix with a leading label column.
pub fn write_matrix<W: Write>(out: W, labels: &[String], values: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(out);
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (label, row) in labels.iter().zip(values) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| format_f64(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}
