use std::path::Path;

use super::grid::MetricsReport;
use crate::error::{ensure, Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub row_name: String,
    pub replicate: usize,
    pub overall_acc: f64,
    pub runtime_s: f64,
    pub per_class: Vec<f64>,
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes `metrics.csv` (one line per replicate), `summary.csv` (one line
/// per row, failed rows included) and `confusion_<row>.csv` into `dir`.
pub fn write_metrics(report: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let acc_cols = report.class_names.iter().map(|c| format!("acc_{c}"));

    let mut w = writer(&dir.join(METRICS_FILE))?;
    let header: Vec<String> =
        ["row_name", "replicate", "overall_acc", "runtime_s"].iter().map(|s| s.to_string()).chain(acc_cols.clone()).collect();
    w.write_record(&header)?;
    for row in &report.rows {
        for r in &row.replicates {
            let mut rec = vec![row.name.clone(), r.replicate.to_string(), f4(r.overall), f4(r.runtime_s)];
            rec.extend(r.per_class.iter().map(|&a| f4(a)));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(dir.join(METRICS_FILE), e))?;

    let mut w = writer(&dir.join(SUMMARY_FILE))?;
    let header: Vec<String> = ["row_name", "status", "replicates", "mean_acc", "min_acc", "max_acc", "mean_runtime_s"]
        .iter()
        .map(|s| s.to_string())
        .chain(acc_cols)
        .collect();
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec = vec![row.name.clone()];
        match &row.failure {
            Some(msg) => {
                rec.push(format!("failed: {msg}"));
                rec.push("0".into());
                rec.extend(std::iter::repeat_n(String::new(), 4 + report.class_names.len()));
            }
            None => {
                rec.push("ok".into());
                rec.push(row.replicates.len().to_string());
                rec.extend([row.mean(), row.min(), row.max(), row.mean_runtime_s()].map(f4));
                rec.extend(row.mean_per_class().into_iter().map(f4));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(dir.join(SUMMARY_FILE), e))?;

    for row in report.rows.iter().filter(|r| r.failure.is_none()) {
        let path = dir.join(format!("confusion_{}.csv", file_stem(&row.name)));
        let mut w = writer(&path)?;
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(report.class_names.iter().cloned());
        w.write_record(&header)?;
        for (name, counts) in report.class_names.iter().zip(row.total_confusion()) {
            let mut rec = vec![name.clone()];
            rec.extend(counts.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.parse().map_err(|_| Error::format("metrics csv", format!("line {line}: bad number {field:?}")))
}

/// Parses `metrics.csv` text, checking the header and row widths.
pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let fixed = ["row_name", "replicate", "overall_acc", "runtime_s"];
    ensure!(
        header.len() >= fixed.len() && header.iter().zip(fixed).all(|(a, b)| a == b),
        "metrics csv header must start with {}",
        fixed.join(",")
    );
    ensure!(header.iter().skip(4).all(|h| h.starts_with("acc_")), "per-class columns must be named acc_<class>");
    let k = header.len() - fixed.len();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(Error::format("metrics csv", format!("line {line}: {} fields, expected {}", rec.len(), header.len())));
        }
        let replicate =
            rec[1].parse().map_err(|_| Error::format("metrics csv", format!("line {line}: bad replicate {:?}", &rec[1])))?;
        let per_class = (0..k).map(|c| parse_f64(&rec[4 + c], line)).collect::<Result<_>>()?;
        out.push(MetricsRow {
            row_name: rec[0].to_string(),
            replicate,
            overall_acc: parse_f64(&rec[2], line)?,
            runtime_s: parse_f64(&rec[3], line)?,
            per_class,
        });
    }
    Ok(out)
}
