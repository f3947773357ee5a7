//! Parsing of CSV data, numeric grids and model descriptions.

use std::path::Path;

use ppda_core::mixture::{Dataset, LabeledDataset, ModelSpec};
use ppda_core::{Error, Result};

#[derive(Debug)]
pub struct CsvData {
    pub header: Option<Vec<String>>,
    pub data: Dataset,
    /// Raw labels column, when one was selected.
    pub labels: Option<Vec<String>>,
}

fn is_number(s: &str) -> bool {
    s.trim().parse::<f64>().is_ok()
}

fn label_index(selector: &str, header: Option<&[String]>, width: usize) -> Result<usize> {
    if let Some(h) = header {
        if let Some(j) = h.iter().position(|name| name == selector) {
            return Ok(j);
        }
    }
    match selector.parse::<usize>() {
        Ok(j) if j < width => Ok(j),
        _ => Err(Error::Validation(format!("labels column {selector:?} not found"))),
    }
}

/// Reads a comma-separated numeric table. A first row with any non-numeric
/// field is taken as the header. The labels column, selected by header name
/// or 0-based index, is removed from the feature matrix.
pub fn read_csv(path: &Path, labels: Option<&str>) -> Result<CsvData> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Validation(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        records.push((line, rec));
    }
    let mut header = None;
    if let Some((_, first)) = records.first() {
        if first.iter().any(|f| !is_number(f)) {
            header = Some(first.iter().map(String::from).collect::<Vec<_>>());
            records.remove(0);
        }
    }
    if records.is_empty() {
        return Err(Error::Validation("no data rows".into()));
    }
    let width = records[0].1.len();
    let label_col = labels.map(|s| label_index(s, header.as_deref(), width)).transpose()?;
    let mut values = Vec::new();
    let mut label_values = Vec::new();
    for (line, rec) in &records {
        for (j, field) in rec.iter().enumerate() {
            if Some(j) == label_col {
                label_values.push(field.to_string());
                continue;
            }
            let x: f64 = field
                .parse()
                .map_err(|_| Error::Validation(format!("line {line}: column {j}: {field:?} is not a number")))?;
            if !x.is_finite() {
                return Err(Error::Validation(format!("line {line}: column {j}: {field:?} is not finite")));
            }
            values.push(x);
        }
    }
    let p = width - usize::from(label_col.is_some());
    if p == 0 {
        return Err(Error::Validation("no feature columns".into()));
    }
    let data = Dataset::from_row_major(records.len(), p, values)?;
    Ok(CsvData { header, data, labels: label_col.map(|_| label_values) })
}

/// The lexicographically larger of the two label values marks group 1.
pub fn binary_labels(raw: &[String]) -> Result<(Vec<u8>, [String; 2])> {
    let mut distinct: Vec<&String> = raw.iter().collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() != 2 {
        return Err(Error::Validation(format!(
            "labels column must hold exactly two distinct values, found {}",
            distinct.len()
        )));
    }
    let one = distinct[1].clone();
    let codes = raw.iter().map(|v| u8::from(*v == one)).collect();
    Ok((codes, [distinct[0].clone(), one]))
}

pub fn labeled(data: &Dataset, raw: &[String]) -> Result<(LabeledDataset, [String; 2])> {
    let (codes, names) = binary_labels(raw)?;
    Ok((LabeledDataset::new(data.clone(), codes)?, names))
}

fn parse_value(s: &str, allow_inf: bool) -> Result<f64> {
    let t = s.trim();
    if allow_inf && (t == "inf" || t == "Inf") {
        return Ok(f64::INFINITY);
    }
    let x: f64 = t.parse().map_err(|_| Error::Validation(format!("not a number: {s:?}")))?;
    if !x.is_finite() {
        return Err(Error::Validation(format!("not a finite number: {s:?}")));
    }
    Ok(x)
}

/// `a:b:n` for n evenly spaced points from a to b, or a comma list.
pub fn parse_grid(s: &str, allow_inf: bool) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let a = parse_value(parts[0], false)?;
        let b = parse_value(parts[1], false)?;
        let n: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("grid {s:?}: point count must be a positive integer")))?;
        return match n {
            0 => Err(Error::Validation(format!("grid {s:?}: point count must be positive"))),
            1 => Ok(vec![a]),
            _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
        };
    }
    if parts.len() != 1 {
        return Err(Error::Validation(format!("grid {s:?}: expected a:b:n or a comma list")));
    }
    s.split(',').map(|v| parse_value(v, allow_inf)).collect()
}

pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| parse_value(v, false)).collect()
}

/// Rows separated by ';', entries by ','.
pub fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';').map(parse_vector).collect()
}

pub fn read_model(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}
