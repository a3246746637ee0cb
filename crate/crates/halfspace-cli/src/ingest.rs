//! Boundary-datum ingestion from CSV sample files, and the matching export.
//!
//! Format: header `x1,…,x{n-1},component,value`, one row per grid point and
//! component.  Points must form a full uniform lattice on `[-R, R]^{n-1}`
//! symmetric about the origin; components are 1-based and contiguous; values
//! are real doubles.

use std::path::Path;

use halfspace::datum::BoundaryData;
use halfspace::grid::GridSpec;
use halfspace::linalg::{cr, C64};

use crate::Failure;

/// Highest derivative order attachable to CSV data (second-order stencils).
pub const CSV_MAX_ELL: usize = 2;

fn bad_row(line: u64, msg: impl std::fmt::Display) -> Failure {
    Failure::config(format!("datum csv row at line {line}: {msg}"))
}

/// Reads a datum CSV file and wraps it (with finite-difference derivatives
/// through order `ell`) as [`BoundaryData`].
pub fn read_datum_csv(path: &Path, ell: usize, p: f64) -> Result<BoundaryData, Failure> {
    if ell > CSV_MAX_ELL {
        return Err(Failure::config(format!(
            "derivative order {ell} exceeds the cap {CSV_MAX_ELL} for CSV data"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::config(format!("datum csv {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Failure::config(format!("datum csv header: {e}")))?
        .clone();
    let cols = headers.len();
    if cols < 3 {
        return Err(Failure::config(
            "datum csv needs columns x1,…,component,value".to_string(),
        ));
    }
    let d = cols - 2;
    for j in 0..d {
        let want = format!("x{}", j + 1);
        if headers.get(j) != Some(want.as_str()) {
            return Err(Failure::config(format!(
                "datum csv column {} is '{}', expected '{want}'",
                j + 1,
                headers.get(j).unwrap_or("")
            )));
        }
    }
    if headers.get(d) != Some("component") || headers.get(d + 1) != Some("value") {
        return Err(Failure::config(
            "datum csv trailing columns must be 'component,value'".to_string(),
        ));
    }

    let mut rows: Vec<(Vec<f64>, usize, f64, u64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Failure::config(format!("datum csv: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols {
            return Err(bad_row(line, format!("expected {cols} fields, got {}", record.len())));
        }
        let mut coords = Vec::with_capacity(d);
        for j in 0..d {
            let v: f64 = record[j]
                .parse()
                .map_err(|e| bad_row(line, format!("coordinate x{}: {e}", j + 1)))?;
            if !v.is_finite() {
                return Err(bad_row(line, format!("coordinate x{} is not finite", j + 1)));
            }
            coords.push(v);
        }
        let comp: usize = record[d]
            .parse()
            .map_err(|e| bad_row(line, format!("component: {e}")))?;
        if comp == 0 {
            return Err(bad_row(line, "component indices are 1-based"));
        }
        let value: f64 = record[d + 1]
            .parse()
            .map_err(|e| bad_row(line, format!("value: {e}")))?;
        if !value.is_finite() {
            return Err(bad_row(line, "value is not finite"));
        }
        rows.push((coords, comp, value, line));
    }
    if rows.is_empty() {
        return Err(Failure::config("datum csv has no data rows".to_string()));
    }

    // Reconstruct the axis from the first coordinate's values and demand a
    // uniform lattice symmetric about the origin.
    let mut axis: Vec<f64> = rows.iter().map(|(c, _, _, _)| c[0]).collect();
    axis.sort_by(f64::total_cmp);
    axis.dedup();
    let npts = axis.len();
    let half_width = *axis.last().expect("nonempty");
    if npts < 2 || half_width <= 0.0 {
        return Err(Failure::config("datum csv grid is degenerate".to_string()));
    }
    let spacing = 2.0 * half_width / (npts - 1) as f64;
    let tol = 1e-9 * spacing;
    if (axis[0] + half_width).abs() > tol {
        return Err(Failure::config(format!(
            "datum csv grid is not symmetric: axis runs [{}, {}]",
            axis[0], half_width
        )));
    }
    for (k, pair) in axis.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if (step - spacing).abs() > tol {
            return Err(Failure::config(format!(
                "datum csv grid is not uniform: step {} after node {} differs from {}",
                step, k, spacing
            )));
        }
    }
    let grid = GridSpec::new(d + 1, half_width, npts).map_err(Failure::from)?;

    let m = rows.iter().map(|&(_, comp, _, _)| comp).max().unwrap_or(0);
    let total = grid.total_points();
    let mut samples = vec![vec![C64::ZERO; total]; m];
    let mut seen = vec![false; m * total];
    for (coords, comp, value, line) in &rows {
        let mut idx = Vec::with_capacity(d);
        for (j, &x) in coords.iter().enumerate() {
            match grid.snap_axis(x, 1e-9) {
                Some(k) => idx.push(k),
                None => {
                    return Err(bad_row(
                        *line,
                        format!("coordinate x{} = {x} is not a lattice node", j + 1),
                    ))
                }
            }
        }
        let flat = grid.flatten(&idx);
        let slot = (comp - 1) * total + flat;
        if seen[slot] {
            return Err(bad_row(*line, "duplicate (point, component) sample"));
        }
        seen[slot] = true;
        samples[comp - 1][flat] = cr(*value);
    }
    if let Some(slot) = seen.iter().position(|&s| !s) {
        let comp = slot / total + 1;
        let point = grid.point(slot % total);
        return Err(Failure::config(format!(
            "datum csv is missing component {comp} at {point:?}"
        )));
    }

    BoundaryData::from_samples(&grid, samples, ell, p).map_err(Failure::from)
}

/// Serializes the raw samples of a datum in the ingestion CSV format
/// (doubles with 17 significant digits, so the round trip is bit-exact).
///
/// Only real-valued data can be exported; a nonzero imaginary part is an
/// error.
pub fn datum_csv(data: &BoundaryData) -> Result<String, Failure> {
    use std::fmt::Write as _;
    let grid = data.grid();
    let d = grid.dim();
    let gamma0 = vec![0usize; d];
    let samples = data.samples(&gamma0).map_err(Failure::from)?;
    let mut out = String::new();
    for j in 1..=d {
        let _ = write!(out, "x{j},");
    }
    out.push_str("component,value\n");
    for flat in 0..grid.total_points() {
        let point = grid.point(flat);
        for (comp, arr) in samples.iter().enumerate() {
            let z = arr[flat];
            if z.im != 0.0 {
                return Err(Failure::config(
                    "datum csv stores real samples; component has a nonzero imaginary part"
                        .to_string(),
                ));
            }
            for x in &point {
                let _ = write!(out, "{x:.16e},");
            }
            let _ = writeln!(out, "{},{:.16e}", comp + 1, z.re);
        }
    }
    Ok(out)
}
