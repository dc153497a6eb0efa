use std::path::Path;

use super::train::EpochLog;
use crate::error::{Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    })
}

/// Columns: `epoch,mean_loss,train_accuracy,lr,momentum`.
pub fn write_training_log(path: impl AsRef<Path>, log: &[EpochLog]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["epoch", "mean_loss", "train_accuracy", "lr", "momentum"])?;
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            format!("{:.6}", e.mean_loss),
            format!("{:.6}", e.train_accuracy),
            format!("{:.8}", e.lr),
            format!("{:.6}", e.momentum),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Columns: `record_id,true_class,predicted_class,p_0..p_{K-1}`.
pub fn write_predictions_csv(
    path: impl AsRef<Path>,
    labels: &[usize],
    predicted: &[usize],
    probabilities: &[Vec<f32>],
) -> Result<()> {
    let path = path.as_ref();
    let k = probabilities.first().map_or(0, Vec::len);
    let mut w = writer(path)?;
    let mut header = vec!["record_id".to_string(), "true_class".into(), "predicted_class".into()];
    header.extend((0..k).map(|c| format!("p_{c}")));
    w.write_record(&header)?;
    for (i, ((l, p), probs)) in labels.iter().zip(predicted).zip(probabilities).enumerate() {
        let mut rec = vec![i.to_string(), l.to_string(), p.to_string()];
        rec.extend(probs.iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One predictions row.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub record_id: usize,
    pub true_class: usize,
    pub predicted_class: usize,
    pub probabilities: Vec<f64>,
}

/// Parses a predictions CSV, checking the header and row widths.
pub fn read_predictions_csv(text: &str) -> Result<Vec<PredictionRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let fixed = ["record_id", "true_class", "predicted_class"];
    if header.len() < 3 || header.iter().take(3).ne(fixed) {
        return Err(Error::format("predictions csv", "unexpected header"));
    }
    for (c, name) in header.iter().skip(3).enumerate() {
        if name != format!("p_{c}") {
            return Err(Error::format("predictions csv", format!("unexpected column {name}")));
        }
    }
    let bad = |what: &str| Error::format("predictions csv", what.to_string());
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(bad("row width differs from header"));
        }
        let int = |i: usize| rec[i].parse::<usize>().map_err(|_| bad("bad integer field"));
        rows.push(PredictionRow {
            record_id: int(0)?,
            true_class: int(1)?,
            predicted_class: int(2)?,
            probabilities: rec
                .iter()
                .skip(3)
                .map(|v| v.parse::<f64>().map_err(|_| bad("bad probability")))
                .collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}
