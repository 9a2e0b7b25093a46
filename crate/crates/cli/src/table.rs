//! Result rows and their CSV form.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::CliError;

pub const COLUMNS: [&str; 13] = [
    "p",
    "epsilon",
    "t",
    "x",
    "quantity",
    "value",
    "error_bound",
    "method",
    "regime",
    "prediction",
    "ratio_to_prediction",
    "converged",
    "note",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    NotConverged,
    Failed,
}

impl Status {
    fn name(&self) -> &'static str {
        match self {
            Status::Converged => "true",
            Status::NotConverged => "false",
            Status::Failed => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub p: f64,
    pub epsilon: Option<f64>,
    pub t: Option<f64>,
    pub x: Option<f64>,
    pub quantity: &'static str,
    pub value: f64,
    pub error_bound: f64,
    /// Module that produced `value`.
    pub method: &'static str,
    pub regime: &'static str,
    pub prediction: Option<f64>,
    pub status: Status,
    pub note: String,
}

impl Row {
    /// `value/prediction`, absent without a nonzero prediction.
    pub fn ratio(&self) -> Option<f64> {
        self.prediction
            .filter(|p| *p != 0.0)
            .map(|p| self.value / p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    /// `#`-prefixed lines written before the header.
    pub provenance: Vec<String>,
    pub rows: Vec<Row>,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Keep free text inside one CSV cell.
fn cell(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

impl ResultTable {
    pub fn failed(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.status == Status::Failed)
            .count()
    }

    pub fn unconverged(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.status == Status::NotConverged)
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in &self.provenance {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        for r in &self.rows {
            let fields = [
                num(r.p),
                opt(r.epsilon),
                opt(r.t),
                opt(r.x),
                r.quantity.to_string(),
                num(r.value),
                num(r.error_bound),
                r.method.to_string(),
                r.regime.to_string(),
                opt(r.prediction),
                opt(r.ratio()),
                r.status.name().to_string(),
                cell(&r.note),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> Row {
        Row {
            p: 2.0,
            epsilon: Some(0.1),
            t: Some(0.9),
            x: Some(1.0),
            quantity: "mean",
            value: -0.05,
            error_bound: 1e-10,
            method: "moments",
            regime: "supercritical",
            prediction: Some(-0.04),
            status: Status::Converged,
            note: "a,b".into(),
        }
    }

    #[test]
    fn csv_layout() {
        let t = ResultTable {
            provenance: vec!["experiment=mean".into()],
            rows: vec![row()],
        };
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# experiment=mean");
        assert_eq!(lines[1], COLUMNS.join(","));
        let cells: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(cells.len(), COLUMNS.len());
        assert_eq!(cells[5], "-5.0000000000000003e-2");
        assert_eq!(cells[10], "1.2500000000000000e0");
        assert_eq!(cells[12], "a;b");
    }

    #[test]
    fn ratio_only_with_prediction() {
        let mut r = row();
        r.prediction = None;
        let t = ResultTable {
            provenance: vec![],
            rows: vec![r],
        };
        let csv = t.to_csv();
        let cells: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(cells[9], "");
        assert_eq!(cells[10], "");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
