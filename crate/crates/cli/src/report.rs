//! CSV rows and JSON summaries, written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use morrey::verifier::InequalityReport;
use serde::{Deserialize, Serialize};

use crate::suite::{CheckSummary, Outcome};

pub const CSV_HEADER: [&str; 9] =
    ["check_id", "corpus_item_id", "lhs", "rhs", "ratio", "resolution", "truncation", "seed", "notes"];

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// 17 significant digits: round-trips every finite `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn truncation_field(r: &InequalityReport) -> String {
    r.truncation.map_or_else(|| "none".to_string(), |t| format!("{}..{}", t.j_min, t.j_max_sum))
}

pub fn write_csv<W: Write>(rows: &[InequalityReport], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        let mut notes = r.notes.clone();
        if r.degenerate {
            notes.push_str(if notes.is_empty() { "degenerate" } else { ";degenerate" });
        }
        out.write_record([
            r.check_id.clone(),
            r.corpus_item_id.clone(),
            format_float(r.lhs),
            format_float(r.rhs),
            format_float(r.ratio),
            r.resolution.to_string(),
            truncation_field(r),
            r.seed.to_string(),
            notes,
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// The JSON document written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub seed: u64,
    pub rows: usize,
    pub passed: bool,
    pub failures: Vec<String>,
    pub checks: Vec<CheckSummary>,
}

impl Summary {
    pub fn of(command: &str, seed: u64, outcome: &Outcome) -> Self {
        Self {
            command: command.to_string(),
            seed,
            rows: outcome.reports.len(),
            passed: outcome.passed(),
            failures: outcome.failures.clone(),
            checks: outcome.summaries.clone(),
        }
    }
}

/// Write `bytes` to `path` through `path.partial` and a rename, so an
/// interrupted run never leaves a truncated file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    {
        let mut f = fs::File::create(&partial)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&partial, path)
}

/// Write `<stem>.csv` and `<stem>-summary.json` (or the default names for the
/// `report` stem) into `dir`.
pub fn write_outcome(dir: &Path, stem: &str, command: &str, seed: u64, outcome: &Outcome) -> std::io::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let (csv_name, json_name) = if stem == "report" {
        (REPORT_FILE.to_string(), SUMMARY_FILE.to_string())
    } else {
        (format!("{stem}.csv"), format!("{stem}-summary.json"))
    };
    let mut buf = Vec::new();
    write_csv(&outcome.reports, &mut buf).map_err(std::io::Error::other)?;
    let csv_path = dir.join(csv_name);
    write_atomic(&csv_path, &buf)?;
    let mut json = serde_json::to_vec_pretty(&Summary::of(command, seed, outcome)).map_err(std::io::Error::other)?;
    json.push(b'\n');
    let json_path = dir.join(json_name);
    write_atomic(&json_path, &json)?;
    Ok((csv_path, json_path))
}

/// Summaries found in `dir` and its immediate subdirectories, sorted by path.
pub fn collect_summaries(dir: &Path) -> std::io::Result<Vec<(PathBuf, Summary)>> {
    let mut candidates = Vec::new();
    let mut scan = |d: &Path| -> std::io::Result<()> {
        for entry in fs::read_dir(d)? {
            let p = entry?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if p.is_file() && (name == SUMMARY_FILE || name.ends_with("-summary.json")) {
                candidates.push(p);
            }
        }
        Ok(())
    };
    scan(dir)?;
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            scan(&p)?;
        }
    }
    candidates.sort();
    let mut out = Vec::new();
    for p in candidates {
        let text = fs::read_to_string(&p)?;
        let s: Summary = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))?;
        out.push((p, s));
    }
    Ok(out)
}

/// Plain-text table of one summary.
pub fn render(path: &Path, s: &Summary) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |d| format!("{:.2}%", 100.0 * d));
    let mut out = format!(
        "{} ({}, seed {}, {} rows, {})\n",
        path.display(),
        s.command,
        s.seed,
        s.rows,
        if s.passed { "passed" } else { "FAILED" }
    );
    for c in &s.checks {
        let k = &c.constant;
        out.push_str(&format!(
            "  {:<60} n={:<4} max={:<12.6e} median={:<12.6e} d(res+1)={:<8} d(widen)={}\n",
            k.check_id,
            k.count,
            k.max,
            k.median,
            opt(k.stability_delta),
            opt(c.widening_delta)
        ));
    }
    for f in &s.failures {
        out.push_str(&format!("  failure: {f}\n"));
    }
    out
}
