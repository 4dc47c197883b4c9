//! Confusion matrices and the rates derived from them.
//!
//! Rows index the true class and columns the predicted class. Rates with a
//! zero denominator are reported as 0 and flagged as undefined.

mod report;

pub use report::{read_confusion_csv, render_report, CONFUSION_CSV, CONFUSION_PGM, METRICS_JSON};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    names: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(MetricsError::Input("need at least one class".into()));
        }
        let k = names.len();
        Ok(Self {
            names,
            counts: vec![0; k * k],
        })
    }

    /// Classes named `"0"`, `"1"`, ...
    pub fn unnamed(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| i.to_string()).collect())
    }

    /// Builds a matrix from a row-major `K×K` count table.
    pub fn from_counts(names: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        let k = names.len();
        if k == 0 || counts.len() != k * k {
            return Err(MetricsError::Input(format!("{} counts for {k} classes", counts.len())));
        }
        Ok(Self { names, counts })
    }

    /// Counts `(truth, prediction)` pairs.
    pub fn from_labels(truth: &[usize], pred: &[usize], names: Vec<String>) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(MetricsError::Input(format!(
                "{} true labels but {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let mut cm = Self::new(names)?;
        for (&t, &p) in truth.iter().zip(pred) {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        let k = self.num_classes();
        if truth >= k || pred >= k {
            return Err(MetricsError::Input(format!(
                "label pair ({truth}, {pred}) outside 0..{k}"
            )));
        }
        self.counts[truth * k + pred] += 1;
        Ok(())
    }

    /// Adds another shard's counts; class lists must agree.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.names != other.names {
            return Err(MetricsError::Input(
                "cannot merge matrices over different classes".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes() + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.num_classes()).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.num_classes()).map(|t| self.get(t, class)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|c| self.get(c, c)).sum()
    }

    fn require_samples(&self) -> Result<u64> {
        match self.total() {
            0 => Err(MetricsError::Input("confusion matrix is empty".into())),
            n => Ok(n),
        }
    }

    pub fn accuracy(&self) -> Result<f64> {
        let n = self.require_samples()?;
        Ok(self.trace() as f64 / n as f64)
    }

    pub fn per_class(&self) -> Vec<ClassMetrics> {
        (0..self.num_classes())
            .map(|c| {
                let tp = self.get(c, c);
                let support = self.support(c);
                let predicted = self.predicted(c);
                let (precision, precision_undefined) = ratio(tp, predicted);
                let (recall, recall_undefined) = ratio(tp, support);
                let f1_undefined = precision + recall == 0.0;
                let f1 = if f1_undefined {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    name: self.names[c].clone(),
                    precision,
                    recall,
                    f1,
                    support,
                    precision_undefined,
                    recall_undefined,
                    f1_undefined,
                }
            })
            .collect()
    }

    /// Σ (support_c / N) · F1_c.
    pub fn weighted_f1(&self) -> Result<f64> {
        let n = self.require_samples()? as f64;
        Ok(self.per_class().iter().map(|m| m.support as f64 / n * m.f1).sum())
    }

    pub fn report(&self) -> Result<MetricsReport> {
        Ok(MetricsReport {
            accuracy: self.accuracy()?,
            weighted_f1: self.weighted_f1()?,
            weighted_f1_scheme: "support-weighted mean of per-class F1".into(),
            orientation: "rows=true,cols=predicted".into(),
            total: self.total(),
            classes: self.per_class(),
        })
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub weighted_f1_scheme: String,
    pub orientation: String,
    pub total: u64,
    pub classes: Vec<ClassMetrics>,
}
