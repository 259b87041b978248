//! Report files: `results.csv` (a timestamped comment line, a header row,
//! then sorted data rows) and `summary.json` with per-check pass/fail.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

/// The in-memory result of one experiment run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub experiment: &'static str,
    pub csv_header: String,
    /// Data rows, sorted before writing so worker scheduling never changes
    /// the file.
    pub csv_rows: Vec<String>,
    pub summary: serde_json::Value,
    /// Conjunction of every threshold check in the summary.
    pub pass: bool,
}

impl RunOutput {
    /// The CSV body: header plus sorted rows. Everything below the
    /// timestamped first line is a pure function of the config.
    pub fn csv_body(&self) -> String {
        let mut out = String::with_capacity(self.csv_rows.len() * 64);
        out.push_str(&self.csv_header);
        out.push('\n');
        for row in &self.csv_rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}

/// Write `results.csv` and `summary.json` into `out_dir`, returning both
/// paths.
pub fn write_reports(out_dir: impl AsRef<Path>, run: &RunOutput) -> Result<(PathBuf, PathBuf)> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;

    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let csv_path = out_dir.join("results.csv");
    let csv = format!("# experiment={} generated_unix_ms={stamp}\n{}", run.experiment, run.csv_body());
    std::fs::write(&csv_path, csv)
        .with_context(|| format!("cannot write {}", csv_path.display()))?;

    let json_path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&run.summary).context("summary serialization")?;
    std::fs::write(&json_path, json)
        .with_context(|| format!("cannot write {}", json_path.display()))?;

    Ok((csv_path, json_path))
}

/// Strip the timestamped first line of a results.csv, leaving the
/// deterministic body.
pub fn csv_body_of_file(path: impl AsRef<Path>) -> Result<String> {
    let text = std::fs::read_to_string(path.as_ref())?;
    match text.split_once('\n') {
        Some((first, rest)) if first.starts_with('#') => Ok(rest.to_string()),
        _ => Ok(text),
    }
}

/// Format a float the way every report column does: shortest
/// round-trippable decimal with a `.` separator.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_body_excludes_timestamp_line() {
        let run = RunOutput {
            experiment: "speed",
            csv_header: "a,b".into(),
            csv_rows: vec!["1,2".into()],
            summary: serde_json::json!({"pass": true}),
            pass: true,
        };
        let dir = std::env::temp_dir().join(format!("report-test-{}", std::process::id()));
        let (csv, _) = write_reports(&dir, &run).unwrap();
        let body = csv_body_of_file(&csv).unwrap();
        assert_eq!(body, "a,b\n1,2\n");
        let raw = std::fs::read_to_string(&csv).unwrap();
        assert!(raw.starts_with("# experiment=speed generated_unix_ms="));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
