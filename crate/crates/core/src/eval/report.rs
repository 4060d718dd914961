use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::benchmark::BenchmarkResult;
use super::pipeline::AblationConfig;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const CSV_HEADER: &str = "config,shuffle,iteration,accuracy,precision,recall,f1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Usage(format!(
                "unknown report format {s:?}; use csv or markdown"
            ))),
        }
    }
}

/// One row per run in result order.
pub fn render_csv(result: &BenchmarkResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &result.runs {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.config, r.shuffle, r.iteration, m.accuracy, m.precision, m.recall, m.f1
        );
    }
    out
}

/// Summary table per configuration, with accuracy deltas against the
/// no-augmentation baseline of the same classifier when it was run.
pub fn render_markdown(result: &BenchmarkResult) -> String {
    let summaries = result.summaries();
    let mut out = String::from("# Ablation results\n\n");
    out.push_str(
        "Deltas are differences of mean accuracy in absolute percentage points against the \
         no-augmentation baseline of the same classifier. Improvements quoted elsewhere as \
         percentages may be relative changes instead; compare with care.\n\n",
    );
    out.push_str("| config | runs | mean accuracy | std | mean macro-F1 | delta vs baseline (points) |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|\n");
    for s in &summaries {
        let baseline = s
            .config
            .parse::<AblationConfig>()
            .ok()
            .filter(|c| !c.is_baseline())
            .and_then(|c| result.summary(&c.baseline().name()));
        let delta = baseline.map_or_else(
            || "-".to_string(),
            |b| format!("{:+.2}", 100.0 * (s.mean_accuracy - b.mean_accuracy)),
        );
        let _ = writeln!(
            out,
            "| {} | {} | {:.4} | {:.4} | {:.4} | {} |",
            s.config, s.runs, s.mean_accuracy, s.std_accuracy, s.mean_f1, delta
        );
    }
    out
}

pub fn render_report(result: &BenchmarkResult, format: ReportFormat) -> Result<String> {
    if result.runs.is_empty() {
        return Err(Error::Usage("benchmark result has no runs".into()));
    }
    Ok(match format {
        ReportFormat::Csv => render_csv(result),
        ReportFormat::Markdown => render_markdown(result),
    })
}

/// Renders and writes the report through a temporary file and a rename.
pub fn emit_report(result: &BenchmarkResult, format: ReportFormat, path: &Path) -> Result<()> {
    write_atomic(path, render_report(result, format)?.as_bytes())
}
