//! Self-describing artifacts: JSON documents with a `header` object and CSV
//! tables whose first line is `# {header}`. Files are written atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CliError;

pub const ARTIFACT_VERSION: &str = "skewlab-artifact/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub artifact_version: String,
    pub command: String,
    pub map: String,
    pub seed: u64,
    pub config: Value,
}

impl Header {
    pub fn new(command: &str, map: &str, seed: u64, config: Value) -> Self {
        Header { artifact_version: ARTIFACT_VERSION.into(), command: command.into(), map: map.into(), seed, config }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("header serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    /// Acceptance criterion this check instantiates, if any.
    pub criterion: Option<u32>,
}

impl Check {
    pub fn below(name: &str, value: f64, threshold: f64, criterion: Option<u32>) -> Self {
        Check { name: name.into(), passed: value < threshold, value, threshold, criterion }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64, criterion: Option<u32>) -> Self {
        Check { name: name.into(), passed: value >= threshold, value, threshold, criterion }
    }

    pub fn flag(name: &str, ok: bool, criterion: Option<u32>) -> Self {
        Check { name: name.into(), passed: ok, value: ok as u8 as f64, threshold: 1.0, criterion }
    }
}

/// Series of a plot-data table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plot {
    pub figure: String,
    pub x_label: String,
    pub y_label: String,
    pub series: String,
    pub points: Vec<[f64; 2]>,
}

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(path)
}

/// The JSON summary document of a command.
pub fn summary_json(header: &Header, checks: &[Check], plots: &[Plot], result: Value) -> Vec<u8> {
    let status = if checks.iter().all(|c| c.passed) { "pass" } else { "soft_fail" };
    let doc = json!({
        "header": header,
        "status": status,
        "checks": checks,
        "plots": plots,
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("summary serializes");
    s.push('\n');
    s.into_bytes()
}

/// The header of a JSON or CSV artifact.
pub fn read_header(path: &Path) -> Result<(Header, Option<Value>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let bad = |m: &str| CliError::Config(format!("{}: {m}", path.display()));
    if let Some(first) = text.lines().next().and_then(|l| l.strip_prefix("# ")) {
        let v: Value = serde_json::from_str(first).map_err(|e| bad(&e.to_string()))?;
        let h = serde_json::from_value(v).map_err(|e| bad(&format!("header: {e}")))?;
        return Ok((h, None));
    }
    let mut v: Value = serde_json::from_str(&text).map_err(|e| bad(&e.to_string()))?;
    let h = v.get_mut("header").map(Value::take).ok_or_else(|| bad("missing header"))?;
    let h = serde_json::from_value(h).map_err(|e| bad(&format!("header: {e}")))?;
    Ok((h, Some(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_csv_headers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let h = Header::new("green", "monomial2", 3, json!({"tol": 1e-10}));
        write_atomic(dir.path(), "a.json", &summary_json(&h, &[], &[], json!({"value": 1.0}))).unwrap();
        let mut csv = Vec::new();
        skewlab::io::write_csv(&mut csv, &h.to_value(), &["x".to_string()], vec![vec![1.0]]).unwrap();
        write_atomic(dir.path(), "b.csv", &csv).unwrap();
        let (a, body) = read_header(&dir.path().join("a.json")).unwrap();
        let (b, none) = read_header(&dir.path().join("b.csv")).unwrap();
        assert_eq!(a, h);
        assert_eq!(b, h);
        assert_eq!(body.unwrap()["status"], "pass");
        assert!(none.is_none());
    }
}
