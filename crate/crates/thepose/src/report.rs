//! JSON and text renderings of metrics, loss traces and neighbor graphs.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Map, Value};
use thepose_core::head::LossRecord;
use thepose_core::metrics::{MetricsReport, MetricsRow};
use thepose_core::net::HybridGraph;

use crate::error::{CliError, Result};

pub fn row_json(row: &MetricsRow) -> Value {
    let mut m = Map::new();
    m.insert("count".into(), json!(row.count));
    for (label, v) in row.cells() {
        m.insert(label.into(), json!(v));
    }
    m.insert("mean_rotation_err_deg".into(), json!(row.mean_rotation_err));
    m.insert("mean_translation_err_cm".into(), json!(row.mean_translation_err));
    Value::Object(m)
}

pub fn report_json(report: &MetricsReport) -> Value {
    let per: Map<String, Value> =
        report.per_category.iter().map(|(c, row)| (c.name().to_string(), row_json(row))).collect();
    json!({ "categories": per, "mean": row_json(&report.mean) })
}

/// Aligned table: one line per category plus the mean, columns in the
/// usual IoU then degree/centimeter order.
pub fn report_table(report: &MetricsReport) -> String {
    let mut rows: Vec<(String, &MetricsRow)> =
        report.per_category.iter().map(|(c, r)| (c.name().to_string(), r)).collect();
    rows.push(("mean".into(), &report.mean));
    labeled_table("category", &rows)
}

/// Table with a free first column, used for sweeps.
pub fn labeled_table(first: &str, rows: &[(String, &MetricsRow)]) -> String {
    let labels = MetricsRow::default().cells().map(|(l, _)| l);
    let lead = rows.iter().map(|(n, _)| n.len()).chain([first.len()]).max().unwrap_or(0);
    let widths: Vec<usize> = labels.iter().map(|l| l.len().max(6)).collect();
    let mut out = format!("{first:<lead$}");
    for (l, w) in labels.iter().zip(&widths) {
        write!(out, "  {l:>w$}").unwrap();
    }
    out.push('\n');
    for (name, row) in rows {
        write!(out, "{name:<lead$}").unwrap();
        for ((_, v), w) in row.cells().iter().zip(&widths) {
            write!(out, "  {v:>w$.1}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_loss_csv(path: &Path, trace: &[LossRecord]) -> Result<()> {
    let io = |e: csv::Error| CliError::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["step", "lr", "loss", "loss_r", "loss_t", "loss_s"]).map_err(io)?;
    for r in trace {
        let l = &r.loss;
        w.write_record([
            r.step.to_string(),
            r.lr.to_string(),
            l.total.to_string(),
            l.rotation.to_string(),
            l.translation.to_string(),
            l.size.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn graph_json(graph: &HybridGraph) -> Value {
    let neighbors: Vec<&[usize]> = (0..graph.len()).map(|i| graph.neighbors(i)).collect();
    let distances: Vec<&[f64]> = (0..graph.len()).map(|i| graph.distances(i)).collect();
    json!({
        "n": graph.len(),
        "k": graph.k(),
        "alpha": graph.alpha(),
        "neighbors": neighbors,
        "distances": distances,
    })
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
