//! CSV datasets: coordinate columns, then outcome columns, then covariates.
//! Empty cells and `NA` mark missing outcomes.

use std::path::Path;

use crate::data::{Dataset, DUPLICATE_TOL};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mesh::find_duplicate;

/// Column layout of a data file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schema {
    pub coords: usize,
    pub outcomes: usize,
    /// Prepend a constant covariate unless one named `intercept` exists.
    pub intercept: bool,
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn number(s: &str, line: usize, col: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Data { line, msg: format!("column {col}: {s:?} is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Data { line, msg: format!("column {col}: non-finite value") });
    }
    Ok(v)
}

/// Parses a dataset from CSV text.
pub fn parse_csv<R: std::io::Read>(reader: R, schema: Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let (d, q) = (schema.coords, schema.outcomes);
    if d == 0 || header.len() < d + q {
        return Err(Error::Data {
            line: 1,
            msg: format!("header has {} columns; need {d} coordinates and {q} outcomes", header.len()),
        });
    }
    let p = header.len() - d - q;
    let mut coords = Vec::new();
    let mut y = Vec::new();
    let mut cov = Vec::new();
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Data { line, msg: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::Data { line, msg: format!("expected {} fields, found {}", header.len(), rec.len()) });
        }
        for c in 0..d {
            coords.push(number(&rec[c], line, &header[c])?);
        }
        for c in d..d + q {
            y.push(if is_missing(&rec[c]) { f64::NAN } else { number(&rec[c], line, &header[c])? });
        }
        for c in d + q..header.len() {
            cov.push(number(&rec[c], line, &header[c])?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("data file"));
    }
    let mut covariates = Matrix::from_vec(n, p, cov);
    let mut covariate_names: Vec<String> = header[d + q..].to_vec();
    if schema.intercept && !covariate_names.iter().any(|c| c == "intercept") {
        covariates = Matrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { covariates[(r, c - 1)] });
        covariate_names.insert(0, "intercept".into());
    }
    let data = Dataset {
        coords: Matrix::from_vec(n, d, coords),
        y: Matrix::from_vec(n, q, y),
        covariates,
        coord_names: header[..d].to_vec(),
        outcome_names: header[d..d + q].to_vec(),
        covariate_names,
    };
    if let Some((a, b)) = find_duplicate(&data.coords, DUPLICATE_TOL) {
        return Err(Error::Data { line: b + 2, msg: format!("duplicate location of line {}", a + 2) });
    }
    data.validate()?;
    Ok(data)
}

pub fn load_csv(path: &Path, schema: Schema) -> Result<Dataset> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_csv(std::io::BufReader::new(f), schema)
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        // shortest representation that parses back to the same value
        format!("{v}")
    }
}

pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = data.coord_names.clone();
    header.extend(data.outcome_names.iter().cloned());
    header.extend(data.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for r in 0..data.n() {
        let row: Vec<String> = data
            .coords
            .row(r)
            .iter()
            .chain(data.y.row(r))
            .chain(data.covariates.row(r))
            .map(|&v| cell(v))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a numeric matrix with a header; `NaN` becomes `NA`.
pub fn write_matrix(path: &Path, header: &[String], rows: &Matrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in 0..rows.rows() {
        w.write_record(rows.row(r).iter().map(|&v| cell(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric matrix written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, Matrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut vals = Vec::new();
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Data { line, msg: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::Data { line, msg: format!("expected {} fields, found {}", header.len(), rec.len()) });
        }
        for (c, s) in rec.iter().enumerate() {
            vals.push(if is_missing(s) { f64::NAN } else { number(s, line, &header[c])? });
        }
        n += 1;
    }
    Ok((header.clone(), Matrix::from_vec(n, header.len(), vals)))
}
