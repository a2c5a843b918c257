//! CSV form of strategies and value functions.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! reloaded table is bit-identical to the one written.

use std::collections::BTreeMap;
use std::path::Path;

use mfmpe_core::{EquilibriumGenerator, Prescription, SimplexGrid, ValueFunction};

use crate::error::{CliError, Result};

pub const THETA_FILE: &str = "theta.csv";
pub const VALUE_FILE: &str = "value.csv";
pub const PLOT_FILE: &str = "plotdata.csv";

/// Stage label: `"inf"` for stationary tables, else the 1-based stage.
fn stage_label(stationary: bool, t: usize) -> String {
    if stationary {
        "inf".to_string()
    } else {
        t.to_string()
    }
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Load(format!("{}: {other:?}", path.display())),
    }
}

fn coordinate_header(n: usize) -> Vec<String> {
    (0..n).map(|x| format!("z{x}")).collect()
}

pub fn write_theta(path: &Path, theta: &EquilibriumGenerator, grid: &SimplexGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["stage".to_string()];
    header.extend(coordinate_header(grid.n_types()));
    header.extend(["type", "action", "probability"].map(String::from));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, table) in theta.tables().iter().enumerate() {
        let stage = stage_label(theta.is_stationary(), i + 1);
        for (p, gamma) in table.iter().enumerate() {
            for x in 0..gamma.n_types() {
                for a in 0..gamma.n_actions() {
                    let mut rec = vec![stage.clone()];
                    rec.extend(grid.point(p).as_slice().iter().map(|v| v.to_string()));
                    rec.extend([x.to_string(), a.to_string(), gamma.prob(x, a).to_string()]);
                    w.write_record(&rec).map_err(|e| csv_err(path, e))?;
                }
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `values[i]` is written under stage `i + 1`, or `"inf"` if `stationary`.
pub fn write_values(path: &Path, values: &[ValueFunction], stationary: bool, grid: &SimplexGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["stage".to_string()];
    header.extend(coordinate_header(grid.n_types()));
    header.extend(["type", "value"].map(String::from));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, v) in values.iter().enumerate() {
        let stage = stage_label(stationary, i + 1);
        for p in 0..grid.len() {
            for x in 0..grid.n_types() {
                let mut rec = vec![stage.clone()];
                rec.extend(grid.point(p).as_slice().iter().map(|c| c.to_string()));
                rec.extend([x.to_string(), v.get(p, x).to_string()]);
                w.write_record(&rec).map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Per-point plot table for two-type models: `z0`, `gamma(a|x)` for every
/// type and every action but the first, then `V(z, x)`. Rows run by `z0`
/// ascending, which is grid order.
pub fn write_plotdata(path: &Path, table: &[Prescription], value: &ValueFunction, grid: &SimplexGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let na = table[0].n_actions();
    let mut header = vec!["z0".to_string()];
    for x in 0..2 {
        header.extend((1..na).map(|a| format!("gamma{a}_{x}")));
    }
    header.extend(["V0", "V1"].map(String::from));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (p, gamma) in table.iter().enumerate() {
        let mut rec = vec![grid.point(p)[0].to_string()];
        for x in 0..2 {
            rec.extend((1..na).map(|a| gamma.prob(x, a).to_string()));
        }
        rec.extend([value.get(p, 0).to_string(), value.get(p, 1).to_string()]);
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Per-type action probabilities for one grid point, filled as rows arrive.
type PartialRows = Vec<Vec<Option<f64>>>;

struct Row {
    stage: String,
    point: usize,
    x: usize,
    rest: Vec<f64>,
}

fn read_rows(path: &Path, grid: &SimplexGrid, tail: &[&str]) -> Result<Vec<Row>> {
    let bad = |line: u64, msg: String| CliError::Load(format!("{} line {line}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let n = grid.n_types();
    let mut expected = vec!["stage".to_string()];
    expected.extend(coordinate_header(n));
    expected.push("type".to_string());
    expected.extend(tail.iter().map(|s| s.to_string()));
    let header: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    if header != expected {
        return Err(bad(1, format!("header {header:?}, expected {expected:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| bad(line, format!("column {}: {e}", expected[i])))
        };
        let z = (1..=n).map(num).collect::<Result<Vec<f64>>>()?;
        let point = grid
            .locate(&z)
            .ok_or_else(|| bad(line, format!("{z:?} is not a point of the M={} grid", grid.resolution())))?;
        let x: usize = rec[n + 1].parse().map_err(|e| bad(line, format!("type: {e}")))?;
        if x >= n {
            return Err(bad(line, format!("type {x} out of range")));
        }
        let rest = (n + 2..rec.len()).map(num).collect::<Result<Vec<f64>>>()?;
        rows.push(Row { stage: rec[0].to_string(), point, x, rest });
    }
    Ok(rows)
}

/// Stage labels in file order must be `"inf"` alone or `1..=T`.
fn stage_index(label: &str, path: &Path) -> Result<Option<usize>> {
    if label == "inf" {
        return Ok(None);
    }
    match label.parse::<usize>() {
        Ok(t) if t >= 1 => Ok(Some(t)),
        _ => Err(CliError::Load(format!("{}: bad stage label {label:?}", path.display()))),
    }
}

pub fn read_theta(path: &Path, grid: &SimplexGrid, n_actions: usize) -> Result<EquilibriumGenerator> {
    let rows = read_rows(path, grid, &["action", "probability"])?;
    let n = grid.n_types();
    let mut stages: BTreeMap<Option<usize>, Vec<PartialRows>> = BTreeMap::new();
    for row in rows {
        let stage = stage_index(&row.stage, path)?;
        let a = row.rest[0];
        if a.fract() != 0.0 || a < 0.0 || a as usize >= n_actions {
            return Err(CliError::Load(format!("{}: action {a} out of range", path.display())));
        }
        let table = stages.entry(stage).or_insert_with(|| vec![vec![vec![None; n_actions]; n]; grid.len()]);
        table[row.point][row.x][a as usize] = Some(row.rest[1]);
    }
    let stationary = stages.contains_key(&None);
    if stationary && stages.len() != 1 {
        return Err(CliError::Load(format!("{}: mixes stationary and staged rows", path.display())));
    }
    if !stationary && stages.keys().enumerate().any(|(i, k)| *k != Some(i + 1)) {
        return Err(CliError::Load(format!("{}: stages are not 1..=T", path.display())));
    }
    let mut tables = Vec::with_capacity(stages.len());
    for (stage, table) in stages {
        let mut out = Vec::with_capacity(grid.len());
        for (p, rows) in table.into_iter().enumerate() {
            let rows = rows
                .into_iter()
                .map(|r| r.into_iter().collect::<Option<Vec<f64>>>())
                .collect::<Option<Vec<Vec<f64>>>>()
                .ok_or_else(|| CliError::Load(format!("{}: stage {stage:?} point {p} incomplete", path.display())))?;
            out.push(Prescription::new(rows).map_err(|e| CliError::Load(format!("{}: {e}", path.display())))?);
        }
        tables.push(out);
    }
    if tables.is_empty() {
        return Err(CliError::Load(format!("{}: no rows", path.display())));
    }
    Ok(if stationary {
        EquilibriumGenerator::stationary(tables.remove(0))
    } else {
        EquilibriumGenerator::finite(tables)
    })
}

/// Returns the tables in stage order and whether they are stationary.
pub fn read_values(path: &Path, grid: &SimplexGrid) -> Result<(Vec<ValueFunction>, bool)> {
    let rows = read_rows(path, grid, &["value"])?;
    let n = grid.n_types();
    let mut stages: BTreeMap<Option<usize>, Vec<Option<f64>>> = BTreeMap::new();
    for row in rows {
        let stage = stage_index(&row.stage, path)?;
        let v = stages.entry(stage).or_insert_with(|| vec![None; grid.len() * n]);
        v[row.point * n + row.x] = Some(row.rest[0]);
    }
    let stationary = stages.contains_key(&None);
    if stages.is_empty() || (stationary && stages.len() != 1) {
        return Err(CliError::Load(format!("{}: expected one stationary table or stages 1..=T+1", path.display())));
    }
    if !stationary && stages.keys().enumerate().any(|(i, k)| *k != Some(i + 1)) {
        return Err(CliError::Load(format!("{}: stages are not 1..=T+1", path.display())));
    }
    let mut out = Vec::new();
    for (stage, flat) in stages {
        let flat = flat
            .into_iter()
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::Load(format!("{}: stage {stage:?} incomplete", path.display())))?;
        out.push(ValueFunction::from_flat(grid.len(), n, flat)?);
    }
    Ok((out, stationary))
}
