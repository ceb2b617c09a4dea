//! Self-describing CSV: a first line `# {json header}` followed by a
//! standard CSV table.

use crate::error::{Error, Result};

pub fn write_csv<W: std::io::Write, I>(
    mut out: W,
    header: &serde_json::Value,
    columns: &[String],
    rows: I,
) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    writeln!(out, "# {}", serde_json::to_string(header).map_err(|e| Error::Io(e.to_string()))?)?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(columns).map_err(io)?;
    for r in rows {
        w.write_record(r.iter().map(|x| format!("{x:e}"))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a file written by [`write_csv`]; every row must have `width` fields.
pub fn read_csv(text: &str, width: usize) -> Result<(serde_json::Value, Vec<Vec<f64>>)> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let json =
        first.strip_prefix("# ").ok_or(Error::Parse { line: 1, msg: "missing '# {json}' header line".into() })?;
    let header: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    let mut rdr = csv::Reader::from_reader(rest.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { line: i + 3, msg: e.to_string() })?;
        if rec.len() != width {
            return Err(Error::Parse { line: i + 3, msg: format!("expected {width} fields, found {}", rec.len()) });
        }
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse { line: i + 3, msg: e.to_string() }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
