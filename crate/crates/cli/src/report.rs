//! Consolidation of an artifact bundle.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifact::{read_header, write_atomic, Check, Header, Plot, ARTIFACT_VERSION};
use crate::commands::{Ctx, Outcome};
use crate::config::Common;
use crate::error::CliError;

pub const CRITERIA: [(u32, &str); 13] = [
    (1, "Lattès multiplier law"),
    (2, "skew multiplier law"),
    (3, "smallest exponent"),
    (4, "fibration pushforward"),
    (5, "1D product structure"),
    (6, "normal-form exactness and order"),
    (7, "closed-form iterates"),
    (8, "global semiconjugacy"),
    (9, "direction coherence"),
    (10, "exact pencil invariance"),
    (11, "Green function"),
    (12, "counting audit"),
    (13, "sampler sanity"),
];

/// Criteria whose miss is a soft result.
const SOFT_CRITERIA: [u32; 1] = [12];

#[derive(Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ReportParams {
    /// Artifact files or directories (scanned for `.json` and `.csv`).
    bundle: Vec<String>,
}

fn is_report_output(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name == "report.json" || name.starts_with("plot_")
}

fn collect(bundle: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in bundle {
        let p = PathBuf::from(entry);
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(&p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| matches!(f.extension().and_then(|x| x.to_str()), Some("json" | "csv")))
                .filter(|f| !is_report_output(f))
                .collect();
            inner.sort();
            files.extend(inner);
        } else if p.is_file() {
            files.push(p);
        } else {
            return Err(CliError::Io(format!("{entry}: no such file or directory")));
        }
    }
    Ok(files)
}

fn plot_csv(header: &Value, plots: &[Plot]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    buf.extend(format!("# {}\n", serde_json::to_string(header).expect("serializes")).into_bytes());
    let mut w = csv::Writer::from_writer(&mut buf);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["x", "y", "series"]).map_err(io)?;
    for p in plots {
        for pt in &p.points {
            w.write_record([format!("{:e}", pt[0]), format!("{:e}", pt[1]), p.series.clone()]).map_err(io)?;
        }
    }
    w.flush()?;
    drop(w);
    Ok(buf)
}

pub fn report(ctx: &Ctx) -> Result<Outcome, CliError> {
    let (common, params): (Common, ReportParams) = ctx.raw.resolve("report")?;
    let files = collect(&params.bundle)?;
    let mut loaded: Vec<(PathBuf, Header, Option<Value>)> = Vec::new();
    for f in files {
        let (h, body) = read_header(&f)?;
        loaded.push((f, h, body));
    }
    let mut versions: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (f, h, _) in &loaded {
        versions.entry(h.artifact_version.clone()).or_default().push(f.display().to_string());
    }
    if versions.len() > 1 || versions.keys().any(|v| v != ARTIFACT_VERSION) {
        let names: Vec<String> = versions.iter().map(|(v, fs)| format!("{v} ({} files)", fs.len())).collect();
        return Err(CliError::Version(format!("found {}; this build reads {ARTIFACT_VERSION}", names.join(", "))));
    }

    let mut artifacts = Vec::new();
    let mut seeds: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut by_criterion: BTreeMap<u32, Vec<(String, Check)>> = BTreeMap::new();
    let mut figures: BTreeMap<String, Vec<Plot>> = BTreeMap::new();
    for (f, h, body) in &loaded {
        let name = f.display().to_string();
        artifacts.push(json!({"file": name, "command": h.command, "map": h.map, "seed": h.seed}));
        seeds.entry(h.seed.to_string()).or_default().push(name.clone());
        let Some(body) = body else { continue };
        if let Some(checks) = body.get("checks") {
            let checks: Vec<Check> =
                serde_json::from_value(checks.clone()).map_err(|e| CliError::Config(format!("{name}: checks: {e}")))?;
            for c in checks {
                if let Some(id) = c.criterion {
                    by_criterion.entry(id).or_default().push((name.clone(), c));
                }
            }
        }
        if let Some(plots) = body.get("plots") {
            let plots: Vec<Plot> =
                serde_json::from_value(plots.clone()).map_err(|e| CliError::Config(format!("{name}: plots: {e}")))?;
            for p in plots {
                figures.entry(p.figure.clone()).or_default().push(p);
            }
        }
    }

    let acceptance: Vec<Value> = CRITERIA
        .iter()
        .map(|(id, title)| {
            let checks = by_criterion.get(id).map(Vec::as_slice).unwrap_or(&[]);
            let status = if checks.is_empty() {
                "not_run"
            } else if checks.iter().all(|(_, c)| c.passed) {
                "pass"
            } else if SOFT_CRITERIA.contains(id) {
                "soft"
            } else {
                "fail"
            };
            let details: Vec<Value> = checks
                .iter()
                .map(|(f, c)| json!({"file": f, "check": c.name, "passed": c.passed, "value": c.value, "threshold": c.threshold}))
                .collect();
            json!({"id": id, "name": title, "status": status, "checks": details})
        })
        .collect();

    let config = json!({
        "map": common.map,
        "seed": common.seed,
        "precision": common.precision.unwrap_or_default(),
        "threads": common.threads,
        "report": params,
    });
    let header = Header::new("report", common.map.as_deref().unwrap_or(""), common.seed, config);
    let mut out_files = Vec::new();
    let mut plot_files = Vec::new();
    for (fig, plots) in &figures {
        let name = format!("plot_{fig}.csv");
        out_files.push(write_atomic(&ctx.out, &name, &plot_csv(&header.to_value(), plots)?)?);
        plot_files.push(name);
    }
    let failed = acceptance.iter().filter(|a| a["status"] == "fail").count();
    let doc = json!({
        "header": header,
        "status": "ok",
        "artifacts": artifacts,
        "seeds": seeds,
        "acceptance": acceptance,
        "failed_criteria": failed,
        "plot_data": plot_files,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializes");
    s.push('\n');
    out_files.push(write_atomic(&ctx.out, "report.json", s.as_bytes())?);
    Ok(Outcome { files: out_files, soft: false })
}
