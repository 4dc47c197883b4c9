//! Writes a confusion matrix as CSV, JSON metrics and a PGM heatmap.

use std::path::Path;

use super::{ConfusionMatrix, MetricsError, MetricsReport, Result};

pub const CONFUSION_CSV: &str = "confusion.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const CONFUSION_PGM: &str = "confusion.pgm";

const CELL_PX: usize = 32;

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let k = cm.num_classes();
    let mut out = String::from("true\\pred");
    for name in cm.names() {
        out.push(',');
        out.push_str(&csv_field(name));
    }
    out.push('\n');
    for t in 0..k {
        out.push_str(&csv_field(&cm.names()[t]));
        for p in 0..k {
            out.push_str(&format!(",{}", cm.get(t, p)));
        }
        out.push('\n');
    }
    out
}

/// Row-normalized heatmap: 0 is white (empty row share), 255 black (whole
/// row in this cell). Rows without samples stay white.
fn confusion_pgm(cm: &ConfusionMatrix) -> Vec<u8> {
    let k = cm.num_classes();
    let side = k * CELL_PX;
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    let shades: Vec<u8> = (0..k * k)
        .map(|i| {
            let support = cm.support(i / k);
            if support == 0 {
                0
            } else {
                (cm.get(i / k, i % k) as f64 / support as f64 * 255.0).round() as u8
            }
        })
        .collect();
    for y in 0..side {
        for x in 0..side {
            out.push(shades[(y / CELL_PX) * k + x / CELL_PX]);
        }
    }
    out
}

/// Writes `confusion.csv`, `metrics.json` and `confusion.pgm` into `out_dir`.
pub fn render_report(cm: &ConfusionMatrix, report: &MetricsReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|source| MetricsError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    write(&out_dir.join(CONFUSION_CSV), confusion_csv(cm).as_bytes())?;
    let mut json = serde_json::to_string_pretty(report).map_err(|e| MetricsError::Format(e.to_string()))?;
    json.push('\n');
    write(&out_dir.join(METRICS_JSON), json.as_bytes())?;
    write(&out_dir.join(CONFUSION_PGM), &confusion_pgm(cm))
}

/// Parses a file written by [`render_report`] back into a matrix.
pub fn read_confusion_csv(path: &Path) -> Result<ConfusionMatrix> {
    let bad = |msg: String| MetricsError::Format(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let rows: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(e.to_string()))?;
    let (header, body) = rows.split_first().ok_or_else(|| bad("empty file".into()))?;
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if body.len() != names.len() {
        return Err(bad(format!("{} rows for {} classes", body.len(), names.len())));
    }
    let mut counts = Vec::with_capacity(names.len() * names.len());
    for (row, name) in body.iter().zip(&names) {
        if row.get(0) != Some(name.as_str()) || row.len() != names.len() + 1 {
            return Err(bad(format!("malformed row for class {name}")));
        }
        for cell in row.iter().skip(1) {
            counts.push(cell.parse().map_err(|_| bad(format!("bad count {cell:?}")))?);
        }
    }
    ConfusionMatrix::from_counts(names, counts)
}
