use std::path::Path;

use anyhow::{bail, Context, Result};
use faer::Mat;

/// Numeric CSV without quoting. A first row that does not parse as numbers
/// is taken as a header and skipped.
pub fn read_matrix(path: &Path) -> Result<Mat<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if k == 0 => continue,
            Err(e) => bail!("{}: line {}: {e}", path.display(), k + 1),
        }
    }
    let Some(first) = rows.first() else {
        bail!("{}: no numeric rows", path.display());
    };
    let d = first.len();
    if let Some(k) = rows.iter().position(|r| r.len() != d) {
        bail!(
            "{}: row {} has {} columns, expected {d}",
            path.display(),
            k + 1,
            rows[k].len()
        );
    }
    Ok(Mat::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

/// A single column, or a single row, as a vector.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    match (m.nrows(), m.ncols()) {
        (_, 1) => Ok((0..m.nrows()).map(|i| m[(i, 0)]).collect()),
        (1, _) => Ok((0..m.ncols()).map(|j| m[(0, j)]).collect()),
        (r, c) => bail!("{}: expected a vector, found a {r}x{c} matrix", path.display()),
    }
}

pub fn vector_csv(header: &str, values: &[f64]) -> String {
    let mut s = format!("index,{header}\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{},{v}\n", i + 1));
    }
    s
}
