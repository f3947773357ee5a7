use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use super::{CellResult, ExperimentConfig, GridResult, Layout};
use crate::error::{Error, Result};

/// A header and string rows, ready for CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// 17 significant digits; `inf`, `-inf` and `NA` for the non-finite values.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_float(s: &str) -> Result<f64> {
    match s.trim() {
        "NA" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t.parse().map_err(|_| Error::Validation(format!("not a number: {s:?}"))),
    }
}

impl Table {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Validation(e.to_string()))
    }
}

fn cell_order(a: &CellResult, b: &CellResult) -> Ordering {
    a.tau
        .total_cmp(&b.tau)
        .then(a.alpha1.total_cmp(&b.alpha1))
        .then(a.n.cmp(&b.n))
        .then(a.method.cmp(&b.method))
}

/// One row per cell and method, sorted by (τ, α₁, n, method).
pub fn aggregate_to_table(results: &[CellResult], layout: Layout) -> Table {
    let mut cells: Vec<&CellResult> = results.iter().collect();
    cells.sort_by(|a, b| cell_order(a, b));
    let mut header = vec!["tau", "alpha1", "n", "method", "msi_mean", "msi_sd"];
    if layout == Layout::Curve {
        header.extend(["scaled_loss_mean", "scaled_loss_sd", "theory_trace", "replicates", "nonconverged", "failures"]);
    }
    let rows = cells
        .into_iter()
        .map(|c| {
            let mut row = vec![
                format_float(c.tau),
                format_float(c.alpha1),
                c.n.to_string(),
                c.method.clone(),
                format_float(c.msi_mean),
                format_float(c.msi_sd),
            ];
            if layout == Layout::Curve {
                row.extend([
                    format_float(c.scaled_loss_mean),
                    format_float(c.scaled_loss_sd),
                    format_float(c.theory_trace),
                    c.replicate_count.to_string(),
                    c.nonconverged.to_string(),
                    c.failures.to_string(),
                ]);
            }
            row
        })
        .collect();
    Table { header: header.into_iter().map(String::from).collect(), rows }
}

#[derive(Serialize)]
struct Bundle<'a> {
    config: &'a ExperimentConfig,
    result: &'a GridResult,
}

/// Writes the CSV table and, if requested, the JSON bundle. Creates the
/// output directory when missing and returns the paths written.
pub fn write_outputs(result: &GridResult, config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = &config.outputs;
    fs::create_dir_all(&out.dir)?;
    let mut written = Vec::new();
    let csv_path = out.csv_path();
    fs::write(&csv_path, aggregate_to_table(&result.cells, config.layout).to_csv()?)?;
    written.push(csv_path);
    if out.json {
        let path = out.json_path();
        let mut f = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, &Bundle { config, result })?;
        f.write_all(b"\n")?;
        written.push(path);
    }
    Ok(written)
}
