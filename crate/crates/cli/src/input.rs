//! Covariate CSV ingestion: a header row whose first column is `site_id`,
//! then one numeric column per covariate.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sitesel::ot::{ColumnScale, SiteTable};
use sitesel::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    /// SHA-256 of the raw file bytes.
    pub sha256: String,
    pub sites: usize,
    pub covariates: Vec<String>,
    /// Per-column affine map applied before solving, when standardized.
    pub standardization: Option<Vec<ColumnScale>>,
}

pub struct Loaded {
    pub table: SiteTable,
    pub info: InputInfo,
}

pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses the CSV text into ids, covariate names and rows.
pub fn parse_csv(text: &[u8]) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>), Error> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text);
    let headers = reader
        .headers()
        .map_err(|e| Error::Input(format!("line 1: {e}")))?
        .clone();
    if headers.get(0).map(str::trim) != Some("site_id") {
        return Err(Error::Input("line 1: first column must be named site_id".into()));
    }
    if headers.len() < 2 {
        return Err(Error::Input("line 1: at least one covariate column is required".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Input(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        ids.push(record[0].trim().to_string());
        let mut row = Vec::with_capacity(names.len());
        for (c, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::Input(format!(
                    "line {line}, column {} ({}): cannot parse {cell:?} as a finite number",
                    c + 1,
                    names[c - 1]
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Input("no site rows after the header".into()));
    }
    Ok((ids, names, rows))
}

pub fn load(path: &Path, standardize: bool) -> Result<Loaded, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let (ids, names, rows) = parse_csv(&bytes)?;
    let raw = SiteTable::from_named_rows(ids, &rows)?;
    let table = if standardize { raw.standardized() } else { raw };
    let info = InputInfo {
        path: path.display().to_string(),
        sha256: fingerprint(&bytes),
        sites: table.len(),
        covariates: names,
        standardization: table.standardization().map(<[ColumnScale]>::to_vec),
    };
    Ok(Loaded { table, info })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_well_formed() {
        let (ids, names, rows) = parse_csv(b"site_id,x,y\na,1,2\nb, 3 ,4.5\n").unwrap();
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(names, vec!["x", "y"]);
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.5]]);
    }

    #[test]
    fn reports_cell_coordinates() {
        let err = parse_csv(b"site_id,x,y\na,1,2\nb,3,oops\n").unwrap_err().to_string();
        assert!(err.contains("line 3, column 3 (y)"), "{err}");
        let err = parse_csv(b"site_id,x\na,NaN\n").unwrap_err().to_string();
        assert!(err.contains("line 2, column 2 (x)"), "{err}");
    }

    #[test]
    fn rejects_bad_headers_and_shapes() {
        assert!(parse_csv(b"id,x\na,1\n").is_err());
        assert!(parse_csv(b"site_id\na\n").is_err());
        assert!(parse_csv(b"site_id,x\n").is_err());
        let err = parse_csv(b"site_id,x\na,1\nb,2,3\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn fingerprint_tracks_bytes() {
        assert_eq!(fingerprint(b"abc"), fingerprint(b"abc"));
        assert_ne!(fingerprint(b"abc"), fingerprint(b"abd"));
    }
}
