//! Power series, normalization and windowed datasets.

mod refit;
mod synth;
mod window;

pub use refit::{load_refit_csv, read_series_csv, write_series_csv, write_series_json, RefitData, REFIT_APPLIANCE_COLUMNS, REFIT_HEADER, REFIT_SAMPLE_SECONDS};
pub use synth::{generate_synthetic, ApplianceSpec, DutyKind, SyntheticConfig, SyntheticHousehold};
pub use window::{
    make_windows, split_index, split_train_test, stitch_at, stitch_predictions, SplitData, WindowedDataset,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest standard deviation used when scaling.
pub const STD_FLOOR: f64 = 1e-8;

/// A named power channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub label: String,
    /// Unix seconds, nondecreasing.
    pub timestamps: Vec<i64>,
    /// Watts.
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(label: impl Into<String>, timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Shape(format!(
                "series has {} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parse("timestamps must be nondecreasing".into()));
        }
        Ok(TimeSeries { label: label.into(), timestamps, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        TimeSeries {
            label: self.label.clone(),
            timestamps: self.timestamps[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
        }
    }

    /// Median spacing between consecutive timestamps, if there are at least two.
    pub fn median_spacing(&self) -> Option<f64> {
        let mut diffs: Vec<i64> = self.timestamps.windows(2).map(|w| w[1] - w[0]).collect();
        if diffs.is_empty() {
            return None;
        }
        diffs.sort_unstable();
        Some(diffs[diffs.len() / 2] as f64)
    }

    /// Indices `i` where the step from `i - 1` to `i` exceeds twice `nominal`.
    pub fn gaps(&self, nominal: f64) -> Vec<usize> {
        self.timestamps
            .windows(2)
            .enumerate()
            .filter(|(_, w)| (w[1] - w[0]) as f64 > 2.0 * nominal)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Mean and population standard deviation used to scale one channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats { mean: 0.0, std: 1.0 }
    }

    pub fn normalize(&self, watts: f64) -> f64 {
        (watts - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Statistics over `values[range]`; the deviation is floored at [`STD_FLOOR`].
pub fn compute_norm_stats(values: &[f64], range: std::ops::Range<usize>) -> Result<NormStats> {
    let Some(slice) = values.get(range.clone()).filter(|s| !s.is_empty()) else {
        return Err(Error::Empty(format!(
            "cannot compute statistics over range {:?} of {} samples",
            range,
            values.len()
        )));
    };
    let n = slice.len() as f64;
    let mean = slice.iter().sum::<f64>() / n;
    let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(NormStats { mean, std: var.sqrt().max(STD_FLOOR) })
}

pub fn normalize(watts: f64, stats: &NormStats) -> f64 {
    stats.normalize(watts)
}

pub fn denormalize(z: f64, stats: &NormStats) -> f64 {
    stats.denormalize(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stats_examples() {
        let s = compute_norm_stats(&[2.0, 2.0, 2.0], 0..3).unwrap();
        assert_eq!(s, NormStats { mean: 2.0, std: STD_FLOOR });
        let s = compute_norm_stats(&[0.0, 10.0], 0..2).unwrap();
        assert_eq!(s, NormStats { mean: 5.0, std: 5.0 });
        assert!(compute_norm_stats(&[1.0], 1..1).is_err());
        assert!(compute_norm_stats(&[1.0], 0..2).is_err());
    }

    #[test]
    fn training_range_only() {
        let mut v = vec![1.0, 3.0, 5.0, 100.0, 200.0];
        let a = compute_norm_stats(&v, 0..3).unwrap();
        v[4] = -7.0;
        assert_eq!(compute_norm_stats(&v, 0..3).unwrap(), a);
    }

    #[test]
    fn normalize_examples() {
        let s = NormStats { mean: 4.0, std: 2.0 };
        assert_eq!(normalize(4.0, &s), 0.0);
        assert_eq!(normalize(10.0, &s), 3.0);
        assert_eq!(denormalize(3.0, &s), 10.0);
        assert_eq!(normalize(-12.5, &NormStats::identity()), -12.5);
    }

    #[test]
    fn gap_detection() {
        let s = TimeSeries::new("x", vec![0, 8, 16, 56, 64], vec![0.0; 5]).unwrap();
        assert_eq!(s.median_spacing(), Some(8.0));
        assert_eq!(s.gaps(8.0), vec![3]);
    }

    proptest! {
        #[test]
        fn normalize_round_trips(x in -1e5f64..1e5, mean in -1e4f64..1e4, std in 1e-3f64..1e4) {
            let s = NormStats { mean, std };
            prop_assert!((s.denormalize(s.normalize(x)) - x).abs() <= 1e-9 * x.abs().max(1.0));
            prop_assert!((s.normalize(s.denormalize(x)) - x).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}
