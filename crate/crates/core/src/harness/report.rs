use std::fmt::Write as _;

use super::metrics::{compute_metrics, format_fraction, format_percent, Metrics};
use super::plan::ratio_label;
use super::sweep::{ExperimentReport, SweepRow};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

type Cell = fn(&SweepRow, fn(Option<f64>) -> String) -> String;

/// Rows of the ratio-by-column matrix.
const MATRIX: [(&str, Cell); 9] = [
    ("Normal (Train, Test)", |r, _| format!("({}, {})", r.plan.normal.final_train, r.plan.normal.test)),
    ("Bipolar (Train, Test)", |r, _| format!("({}, {})", r.plan.bipolar.final_train, r.plan.bipolar.test)),
    ("Accuracy rate", |r, f| f(r.test_metrics.accuracy)),
    ("Sensitivity", |r, f| f(r.test_metrics.sensitivity)),
    ("Specificity", |r, f| f(r.test_metrics.specificity)),
    ("Precision", |r, f| f(r.test_metrics.precision)),
    ("F1-score", |r, f| f(r.test_metrics.f1)),
    ("CV accuracy (mean)", |r, f| f(r.cv_metrics.accuracy)),
    ("CV F1-score (mean)", |r, f| f(r.cv_metrics.f1)),
];

fn full_precision(m: Option<f64>) -> String {
    m.map_or_else(|| format_fraction(None), |v| format!("{v}"))
}

/// The row with the best test accuracy; ties go to the lower ratio.
fn best_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().fold(None, |best: Option<&SweepRow>, r| match best {
        Some(b) if b.test_metrics.accuracy.unwrap_or(-1.0) >= r.test_metrics.accuracy.unwrap_or(-1.0) => Some(b),
        _ => Some(r),
    })
}

fn comparison_cells(r: &SweepRow) -> Vec<String> {
    let m: &Metrics = &r.test_metrics;
    let increasing = if r.ratio > 0.0 {
        format!("GAN ({})", ratio_label(r.ratio))
    } else {
        "None (Base-0%)".to_string()
    };
    vec![
        "Current study".to_string(),
        format!("{} Normal {} Bipolar", r.plan.normal.class_total, r.plan.bipolar.class_total),
        increasing,
        "CNN".to_string(),
        format_percent(m.sensitivity),
        format_percent(m.specificity),
        format_percent(m.precision),
        format_percent(m.accuracy),
        format_percent(m.f1),
    ]
}

const COMPARISON_HEADER: [&str; 9] = [
    "Model",
    "Summary",
    "Increasing",
    "Classifier",
    "Sensitivity",
    "Specificity",
    "Precision",
    "Accuracy",
    "F1-score",
];

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

/// Ratio-by-column matrix plus the comparison row of the best ratio. CSV
/// carries full-precision fractions, markdown percentages.
pub fn render_report(report: &ExperimentReport, format: ReportFormat) -> Result<String> {
    let mut header = vec!["Metric".to_string()];
    header.extend(report.rows.iter().map(|r| ratio_label(r.ratio)));
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
            w.write_record(&header).map_err(csv_err)?;
            for (name, cell) in MATRIX {
                let mut rec = vec![name.to_string()];
                rec.extend(report.rows.iter().map(|r| cell(r, full_precision)));
                w.write_record(&rec).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => {
            let mut out = String::from("# Impact of data augmentation\n\n");
            out.push_str(&md_row(&header));
            out.push_str(&md_row(&vec!["---".to_string(); header.len()]));
            for (name, cell) in MATRIX {
                let mut rec = vec![name.to_string()];
                rec.extend(report.rows.iter().map(|r| cell(r, format_percent)));
                out.push_str(&md_row(&rec));
            }
            out.push_str("\n# Comparison\n\n");
            let h: Vec<String> = COMPARISON_HEADER.iter().map(|s| s.to_string()).collect();
            out.push_str(&md_row(&h));
            out.push_str(&md_row(&vec!["---".to_string(); h.len()]));
            if let Some(best) = best_row(&report.rows) {
                out.push_str(&md_row(&comparison_cells(best)));
            }
            let notes: Vec<&String> = report.rows.iter().flat_map(|r| &r.plan.warnings).collect();
            if !notes.is_empty() {
                out.push_str("\n# Notes\n\n");
                for n in notes {
                    writeln!(out, "- {n}").expect("write to string");
                }
            }
            writeln!(out, "\nSeed: {}", report.seed).expect("write to string");
            Ok(out)
        }
    }
}

/// One JSON object per line.
pub fn log_line(row: &SweepRow) -> Result<String> {
    serde_json::to_string(row)
        .map(|s| s + "\n")
        .map_err(|e| Error::Config(format!("experiment log: {e}")))
}

/// Rebuilds a report from an experiment log, checking that every stored
/// metric matches its confusion matrix.
pub fn parse_log(text: &str) -> Result<ExperimentReport> {
    let mut rows: Vec<SweepRow> = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: SweepRow = serde_json::from_str(line)
            .map_err(|e| Error::Config(format!("experiment log line {}: {e}", n + 1)))?;
        if compute_metrics(&row.test_confusion) != row.test_metrics {
            return Err(Error::Config(format!(
                "experiment log line {}: metrics disagree with the confusion matrix",
                n + 1
            )));
        }
        rows.push(row);
    }
    let seed = rows
        .first()
        .map(|r| r.seed)
        .ok_or_else(|| Error::Config("experiment log is empty".into()))?;
    rows.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
    Ok(ExperimentReport { seed, rows })
}
