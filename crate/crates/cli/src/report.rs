//! Aggregation of per-seed reports into mean and sample standard deviation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use masker_core::eval::{ReliabilityReport, REPORT_CSV_HEADER};

use crate::CliError;

/// Columns of the CSV header that hold metrics.
const FIRST_METRIC: usize = 3;

pub fn metric_names() -> &'static [&'static str] {
    &REPORT_CSV_HEADER[FIRST_METRIC..]
}

/// Mean and sample standard deviation (n - 1); the deviation is 0 for a
/// single value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub seeds: Vec<u64>,
    /// One entry per metric with at least one value, in header order.
    pub metrics: Vec<MetricSummary>,
}

impl MethodSummary {
    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

/// Groups reports by method (first appearance order) and summarizes each
/// metric over seeds.
pub fn aggregate(reports: &[ReliabilityReport]) -> Vec<MethodSummary> {
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|method| {
            let rows: Vec<(u64, Vec<String>)> = reports
                .iter()
                .filter(|r| r.method == method)
                .map(|r| (r.seed, r.csv_row()))
                .collect();
            let metrics = metric_names()
                .iter()
                .enumerate()
                .filter_map(|(j, name)| {
                    let xs: Vec<f64> = rows
                        .iter()
                        .filter_map(|(_, row)| row[FIRST_METRIC + j].parse().ok())
                        .collect();
                    (!xs.is_empty()).then(|| {
                        let (mean, std) = mean_std(&xs);
                        MetricSummary { metric: (*name).to_owned(), mean, std, n: xs.len() }
                    })
                })
                .collect();
            MethodSummary {
                method: method.to_owned(),
                seeds: rows.iter().map(|(s, _)| *s).collect(),
                metrics,
            }
        })
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// One CSV row per report under the standard header.
pub fn write_rows(path: &Path, reports: &[ReliabilityReport]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(REPORT_CSV_HEADER).map_err(|e| csv_error(path, e))?;
    for r in reports {
        w.write_record(r.csv_row()).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_summary_csv(path: &Path, hash: &str, summaries: &[MethodSummary]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["method", "metric", "mean", "std", "n", "config_hash"])
        .map_err(|e| csv_error(path, e))?;
    for s in summaries {
        for m in &s.metrics {
            w.write_record([&s.method, &m.metric, &m.mean.to_string(), &m.std.to_string(), &m.n.to_string(), hash])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Markdown table in percent, standard deviation as a subscript.
pub fn markdown(hash: &str, summaries: &[MethodSummary]) -> String {
    let columns: Vec<&str> = metric_names()
        .iter()
        .copied()
        .filter(|name| summaries.iter().any(|s| s.get(name).is_some()))
        .collect();
    let seeds: BTreeSet<u64> = summaries.iter().flat_map(|s| s.seeds.iter().copied()).collect();
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let mut out = String::new();
    let _ = writeln!(out, "config `{hash}`, seeds {}\n", seeds.join(", "));
    let _ = writeln!(out, "| method | {} |", columns.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(columns.len()));
    for s in summaries {
        let cells: Vec<String> = columns
            .iter()
            .map(|c| match s.get(c) {
                Some(m) => format!("{:.1}<sub>±{:.1}</sub>", 100.0 * m.mean, 100.0 * m.std),
                None => "-".into(),
            })
            .collect();
        let _ = writeln!(out, "| {} | {} |", s.method, cells.join(" | "));
    }
    out
}

/// Writes `report.csv`, `summary.csv` and `report.md` under `out`.
pub fn write_all(out: &Path, hash: &str, reports: &[ReliabilityReport]) -> Result<Vec<PathBuf>, CliError> {
    let summaries = aggregate(reports);
    let rows = out.join("report.csv");
    write_rows(&rows, reports)?;
    let summary = out.join("summary.csv");
    write_summary_csv(&summary, hash, &summaries)?;
    let md = out.join("report.md");
    std::fs::write(&md, markdown(hash, &summaries)).map_err(|e| CliError::io(&md, e))?;
    Ok(vec![rows, summary, md])
}
