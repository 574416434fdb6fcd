//! Output formats. Every file starts with the same metadata block so a run can
//! be reproduced from its outputs alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::fock::{CVec, FockDim, StateVector, C64};
use crate::metrics::WignerGrid;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    /// Fully resolved configuration of the run.
    pub config: Value,
}

impl Metadata {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| invalid_json(&e))?;
        let canonical = serde_json::to_string(&config).map_err(|e| invalid_json(&e))?;
        Ok(Self {
            version: VERSION.to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(canonical.as_bytes()),
            seed,
            config,
        })
    }

    /// `#`-prefixed lines for the top of a CSV file.
    pub fn csv_header(&self) -> String {
        format!(
            "# gridforge {}\n# command: {}\n# config_sha256: {}\n# seed: {}\n# config: {}\n",
            self.version, self.command, self.config_sha256, self.seed, self.config
        )
    }
}

fn invalid_json(e: &serde_json::Error) -> Error {
    Error::InvalidArgument(format!("json: {e}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// 17 significant digits, so values round-trip bit for bit.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s.trim() {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t.parse().map_err(|_| Error::InvalidArgument(format!("not a number: {t:?}"))),
    }
}

/// One row of a CSV table. Implementors fix the column order.
pub trait CsvRow {
    fn columns() -> &'static [&'static str];
    fn cells(&self) -> Vec<String>;
}

pub fn csv_table<R: CsvRow>(meta: &Metadata, rows: &[R]) -> String {
    let mut out = meta.csv_header();
    out.push_str(&R::columns().join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.cells().join(","));
        out.push('\n');
    }
    out
}

/// JSON document with the metadata under "meta" and `body` merged in.
pub fn json_document(meta: &Metadata, body: Value) -> Result<String> {
    let mut doc = serde_json::Map::new();
    doc.insert("meta".into(), serde_json::to_value(meta).map_err(|e| invalid_json(&e))?);
    match body {
        Value::Object(m) => doc.extend(m),
        other => {
            doc.insert("data".into(), other);
        }
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| invalid_json(&e))?;
    s.push('\n');
    Ok(s)
}

pub fn json_table<R: Serialize>(meta: &Metadata, rows: &[R]) -> Result<String> {
    json_document(meta, serde_json::json!({ "rows": rows }))
}

/// Metadata lines, `# dim` (basis size, n_max + 1) and `# r_db` lines, then
/// `re,im` per Fock level.
pub fn state_csv(meta: &Metadata, psi: &StateVector, r_db: f64) -> String {
    let mut out = meta.csv_header();
    let _ = writeln!(out, "# dim: {}\n# r_db: {}", psi.dim.size(), fmt_f64(r_db));
    out.push_str("re,im\n");
    for a in psi.amps.iter() {
        let _ = writeln!(out, "{},{}", fmt_f64(a.re), fmt_f64(a.im));
    }
    out
}

/// Inverse of [`state_csv`]; returns the state and its r_db.
pub fn parse_state_csv(text: &str) -> Result<(StateVector, f64)> {
    let mut dim = None;
    let mut r_db = None;
    let mut amps = vec![];
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("dim:") {
                dim = Some(v.trim().parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad dim {v:?}")))?);
            } else if let Some(v) = rest.trim().strip_prefix("r_db:") {
                r_db = Some(parse_f64(v)?);
            }
            continue;
        }
        if line.trim().is_empty() || line == "re,im" {
            continue;
        }
        let (re, im) = line.split_once(',').ok_or_else(|| Error::InvalidArgument(format!("bad row {line:?}")))?;
        amps.push(C64::new(parse_f64(re)?, parse_f64(im)?));
    }
    let (Some(dim), Some(r_db)) = (dim, r_db) else {
        return invalid("state file lacks dim or r_db header");
    };
    if dim == 0 {
        return invalid("state dim must be positive");
    }
    let psi = StateVector::new(FockDim::new(dim - 1)?, CVec::from_vec(amps))?;
    Ok((psi, r_db))
}

/// Matrix of W values, one x per row and one p per column.
pub fn wigner_csv(meta: &Metadata, grid: &WignerGrid) -> String {
    let mut out = meta.csv_header();
    let _ = writeln!(out, "# rows: x_axis ({}), columns: p_axis ({})", grid.x_axis.len(), grid.p_axis.len());
    for i in 0..grid.values.nrows() {
        let row: Vec<String> = (0..grid.values.ncols()).map(|j| fmt_f64(grid.values[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Axes, grid integral and warning of a Wigner grid.
pub fn wigner_axes_json(meta: &Metadata, grid: &WignerGrid) -> Result<String> {
    json_document(meta, serde_json::to_value(grid).map_err(|e| invalid_json(&e))?)
}

pub fn marginal_csv(meta: &Metadata, axis_name: &str, axis: &[f64], values: &[f64]) -> String {
    let mut out = meta.csv_header();
    let _ = writeln!(out, "{axis_name},density");
    for (a, v) in axis.iter().zip(values) {
        let _ = writeln!(out, "{},{}", fmt_f64(*a), fmt_f64(*v));
    }
    out
}

/// Non-comment lines of a CSV file split on commas.
pub fn read_csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{linspace, wigner};

    fn meta() -> Metadata {
        Metadata::new("test", &serde_json::json!({"a": 1, "b": [0.1, 2.5]}), 7).unwrap()
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0, -0.0] {
            let s = fmt_f64(v);
            assert_eq!(parse_f64(&s).unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert!(parse_f64(&fmt_f64(f64::NAN)).unwrap().is_nan());
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(meta().config_sha256, meta().config_sha256);
        let other = Metadata::new("test", &serde_json::json!({"a": 2}), 7).unwrap();
        assert_ne!(meta().config_sha256, other.config_sha256);
    }

    #[test]
    fn header_lines_are_comments() {
        let h = meta().csv_header();
        assert!(h.lines().all(|l| l.starts_with("# ")));
        assert!(h.contains("seed: 7"));
        assert!(h.contains(VERSION));
    }

    #[test]
    fn state_round_trip() {
        let dim = FockDim::new(30).unwrap();
        let psi = crate::gates::squeezed_vacuum(0.4, dim).unwrap();
        let psi = crate::gates::apply_displacement(&psi, C64::new(0.3, -0.2));
        let text = state_csv(&meta(), &psi, 3.47);
        let (back, r_db) = parse_state_csv(&text).unwrap();
        assert_eq!(back, psi);
        assert_eq!(r_db, 3.47);
    }

    #[test]
    fn malformed_state_rejected() {
        assert!(parse_state_csv("re,im\n1,0\n").is_err());
        assert!(parse_state_csv("# dim: 20\n# r_db: 0\nre,im\n1;0\n").is_err());
    }

    #[test]
    fn wigner_matrix_shape() {
        let psi = StateVector::vacuum(FockDim::new(20).unwrap());
        let xs = linspace(-2.0, 2.0, 5);
        let ps = linspace(-1.0, 1.0, 3);
        let g = wigner(&psi, &xs, &ps).unwrap();
        let rows = read_csv_rows(&wigner_csv(&meta(), &g));
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.len() == 3));
        assert_eq!(parse_f64(&rows[2][1]).unwrap(), g.values[(2, 1)]);
        let axes: Value = serde_json::from_str(&wigner_axes_json(&meta(), &g).unwrap()).unwrap();
        assert_eq!(axes["x_axis"].as_array().unwrap().len(), 5);
        assert_eq!(axes["meta"]["seed"], 7);
    }

    #[test]
    fn json_document_keeps_meta_and_body() {
        let doc: Value = serde_json::from_str(&json_document(&meta(), serde_json::json!({"x": 1.5})).unwrap()).unwrap();
        assert_eq!(doc["x"], 1.5);
        assert_eq!(doc["meta"]["command"], "test");
        let arr: Value = serde_json::from_str(&json_document(&meta(), serde_json::json!([1, 2])).unwrap()).unwrap();
        assert_eq!(arr["data"][1], 2);
    }
}
