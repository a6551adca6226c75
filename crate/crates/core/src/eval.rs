//! Disaggregation metrics: RMSE, ANE, on/off confusion counts, accuracy and F1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default on/off threshold, watts.
pub const DEFAULT_THRESHOLD: f64 = 10.0;

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "truth has {} samples but prediction has {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    Ok(())
}

/// Root mean squared error, watts.
pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let sq: f64 = truth.iter().zip(pred).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((sq / truth.len() as f64).sqrt())
}

/// `|Σ truth − Σ pred| / Σ truth`.
pub fn ane(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let t: f64 = truth.iter().sum();
    let p: f64 = pred.iter().sum();
    if !(t > 0.0) {
        return Err(Error::Empty("total true energy is zero".into()));
    }
    Ok((t - p).abs() / t)
}

/// ON iff the value is strictly above `threshold`.
pub fn on_off_states(series: &[f64], threshold: f64) -> Vec<bool> {
    series.iter().map(|&v| v > threshold).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

pub fn confusion(truth: &[bool], pred: &[bool]) -> Result<ConfusionCounts> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "truth has {} states but prediction has {}",
            truth.len(),
            pred.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in truth.iter().zip(pred) {
        match (t, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::Empty("accuracy of zero time slices".into()));
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

/// Harmonic mean of precision and recall; 0 whenever there are no true positives.
pub fn f1(c: &ConfusionCounts) -> f64 {
    if c.tp == 0 {
        return 0.0;
    }
    let (p, r) = (c.precision(), c.recall());
    2.0 * p * r / (p + r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplianceMetrics {
    pub ane: f64,
    pub rmse: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    pub n_points: usize,
}

/// All four metrics for one appliance's aligned watt series.
///
/// ANE is reported as 0 when both truth and prediction carry no energy, and
/// is an error when only the truth is empty of energy.
pub fn evaluate_appliance(truth: &[f64], pred: &[f64], threshold: f64) -> Result<ApplianceMetrics> {
    check_pair(truth, pred)?;
    let counts = confusion(&on_off_states(truth, threshold), &on_off_states(pred, threshold))?;
    let ane = if truth.iter().sum::<f64>() == 0.0 && pred.iter().sum::<f64>() == 0.0 {
        0.0
    } else {
        ane(truth, pred)?
    };
    Ok(ApplianceMetrics {
        ane,
        rmse: rmse(truth, pred)?,
        accuracy: accuracy(&counts)?,
        f1: f1(&counts),
        counts,
        n_points: truth.len(),
    })
}

/// Scalar metrics averaged across appliances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub ane: f64,
    pub rmse: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Unweighted mean of each metric.
pub fn aggregate_overall(per_appliance: &[ApplianceMetrics]) -> Result<OverallMetrics> {
    if per_appliance.is_empty() {
        return Err(Error::Empty("no appliances to aggregate".into()));
    }
    let n = per_appliance.len() as f64;
    let mean = |f: fn(&ApplianceMetrics) -> f64| per_appliance.iter().map(f).sum::<f64>() / n;
    Ok(OverallMetrics {
        ane: mean(|m| m.ane),
        rmse: mean(|m| m.rmse),
        accuracy: mean(|m| m.accuracy),
        f1: mean(|m| m.f1),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMetrics {
    pub appliance: String,
    pub metrics: ApplianceMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub appliances: Vec<NamedMetrics>,
    pub overall: OverallMetrics,
    /// ANE of the summed true series against the summed predictions, when
    /// every appliance was evaluated over the same time slices.
    pub combined_ane: Option<f64>,
}

impl MetricsReport {
    pub fn from_metrics(appliances: Vec<NamedMetrics>, combined_ane: Option<f64>) -> Result<Self> {
        let all: Vec<ApplianceMetrics> = appliances.iter().map(|a| a.metrics).collect();
        Ok(MetricsReport { overall: aggregate_overall(&all)?, appliances, combined_ane })
    }

    /// Evaluates every `(name, truth, pred, threshold)` entry and aggregates.
    pub fn evaluate(entries: &[(String, Vec<f64>, Vec<f64>, f64)]) -> Result<Self> {
        let mut named = Vec::with_capacity(entries.len());
        for (name, truth, pred, threshold) in entries {
            let metrics = evaluate_appliance(truth, pred, *threshold)
                .map_err(|e| annotate(e, name))?;
            named.push(NamedMetrics { appliance: name.clone(), metrics });
        }
        let same_len = entries.windows(2).all(|w| w[0].1.len() == w[1].1.len());
        let combined_ane = if same_len && !entries.is_empty() {
            let n = entries[0].1.len();
            let sum = |pick: fn(&(String, Vec<f64>, Vec<f64>, f64)) -> &Vec<f64>| {
                (0..n).map(|t| entries.iter().map(|e| pick(e)[t]).sum::<f64>()).collect::<Vec<f64>>()
            };
            ane(&sum(|e| &e.1), &sum(|e| &e.2)).ok()
        } else {
            None
        };
        Self::from_metrics(named, combined_ane)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Metric rows by appliance columns plus `Overall`; accuracy and F1 in percent.
    pub fn write_table_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["Metrics".to_string()];
        header.extend(self.appliances.iter().map(|a| a.appliance.clone()));
        header.push("Overall".into());
        w.write_record(&header)?;
        let rows: [(&str, fn(&ApplianceMetrics) -> f64, f64); 4] = [
            ("ANE", |m| m.ane, self.overall.ane),
            ("RMSE", |m| m.rmse, self.overall.rmse),
            ("Accuracy (%)", |m| 100.0 * m.accuracy, 100.0 * self.overall.accuracy),
            ("F1 (%)", |m| 100.0 * m.f1, 100.0 * self.overall.f1),
        ];
        for (name, pick, overall) in rows {
            let mut rec = vec![name.to_string()];
            rec.extend(self.appliances.iter().map(|a| pick(&a.metrics).to_string()));
            rec.push(overall.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn annotate(e: Error, name: &str) -> Error {
    match e {
        Error::Shape(m) => Error::Shape(format!("{name}: {m}")),
        Error::Empty(m) => Error::Empty(format!("{name}: {m}")),
        other => other,
    }
}
