//! Small parsing and output helpers.

use std::io::Write;
use std::path::Path;

use blwave_core::transform::SampledGrid;
use serde::Serialize;

use crate::Failure;

pub fn parse_q(s: &str) -> Result<f64, String> {
    match s.trim() {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        v => v.parse::<f64>().map_err(|e| format!("{v}: {e}")),
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| Failure::Validation(format!("bad {what}: {s:?}"))))
        .collect()
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| Failure::Compute(format!("cannot write {}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let mut w = sink(out)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Compute(e.to_string()))?;
    writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| Failure::Compute(e.to_string()))
}

/// Writes through a closure to `out` or stdout.
pub fn write_with(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), Failure> {
    let mut w = sink(out)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Failure::Compute(e.to_string()))
}

/// Rows `x[, y[, z]], value` covering a full tensor grid, in any order; a header line is skipped.
pub fn read_grid_csv(path: &Path) -> Result<SampledGrid, Failure> {
    let bad = |m: String| Failure::Validation(format!("{}: {m}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if rows.is_empty() && lineno == 0 => continue,
            Err(_) => return Err(bad(format!("line {}: not numeric", lineno + 1))),
        }
    }
    let width = rows.first().map(|r| r.len()).ok_or_else(|| bad("no samples".into()))?;
    if !(2..=4).contains(&width) || rows.iter().any(|r| r.len() != width) {
        return Err(bad("rows need 2 to 4 columns, all of the same width".into()));
    }
    let dim = width - 1;
    let mut axes: Vec<Vec<f64>> = (0..dim)
        .map(|l| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[l]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let size: usize = axes.iter().map(|a| a.len()).product();
    if size != rows.len() {
        return Err(bad(format!("{} rows do not form a tensor grid of {size} points", rows.len())));
    }
    let mut values = vec![f64::NAN; size];
    for r in &rows {
        let mut flat = 0;
        let mut stride = 1;
        for l in 0..dim {
            let j = axes[l].binary_search_by(|x| x.total_cmp(&r[l])).expect("value is on the axis");
            flat += j * stride;
            stride *= axes[l].len();
        }
        values[flat] = r[dim];
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(bad("duplicate grid points".into()));
    }
    SampledGrid::new(std::mem::take(&mut axes), values).map_err(Failure::from)
}
