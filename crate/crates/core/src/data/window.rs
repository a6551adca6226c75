//! Chronological splitting, sliding windows and stitching predictions back together.

use super::{compute_norm_stats, NormStats, TimeSeries};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Paired mains/appliance windows in normalized units.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    /// `[N, W]` normalized mains windows.
    pub inputs: Tensor,
    /// `[N, W]` normalized appliance windows.
    pub targets: Tensor,
    /// Start index of each window in the source series.
    pub starts: Vec<usize>,
    pub input_stats: NormStats,
    pub target_stats: NormStats,
    pub window_len: usize,
    pub stride: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn target(&self, i: usize) -> &[f64] {
        self.targets.row(i)
    }

    /// Keeps only the windows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<WindowedDataset> {
        let w = self.window_len;
        let mut inputs = Vec::with_capacity(indices.len() * w);
        let mut targets = Vec::with_capacity(indices.len() * w);
        let mut starts = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Shape(format!("window {i} out of range for {} windows", self.len())));
            }
            inputs.extend_from_slice(self.input(i));
            targets.extend_from_slice(self.target(i));
            starts.push(self.starts[i]);
        }
        Ok(WindowedDataset {
            inputs: Tensor::from_vec(&[indices.len(), w], inputs)?,
            targets: Tensor::from_vec(&[indices.len(), w], targets)?,
            starts,
            ..self.clone()
        })
    }
}

fn check_aligned(mains: &TimeSeries, appliance: &TimeSeries) -> Result<()> {
    if mains.len() != appliance.len() {
        return Err(Error::Shape(format!(
            "mains has {} samples but appliance has {}",
            mains.len(),
            appliance.len()
        )));
    }
    if mains.timestamps != appliance.timestamps {
        return Err(Error::Shape("mains and appliance timestamps are not aligned".into()));
    }
    Ok(())
}

/// Slides a `window`-sample window with step `stride` over aligned series.
///
/// Windows that straddle a timestamp jump of more than twice the median
/// spacing are left out.
pub fn make_windows(
    mains: &TimeSeries,
    appliance: &TimeSeries,
    window: usize,
    stride: usize,
    input_stats: NormStats,
    target_stats: NormStats,
) -> Result<WindowedDataset> {
    check_aligned(mains, appliance)?;
    if window == 0 || stride == 0 {
        return Err(Error::Config(format!("window ({window}) and stride ({stride}) must be positive")));
    }
    if mains.len() < window {
        return Err(Error::Empty(format!(
            "series of {} samples is shorter than the {}-sample window",
            mains.len(),
            window
        )));
    }
    // gap_before[i] counts gaps at indices <= i
    let mut gap_before = vec![0usize; mains.len()];
    if let Some(nominal) = mains.median_spacing() {
        for g in mains.gaps(nominal) {
            gap_before[g] = 1;
        }
        for i in 1..gap_before.len() {
            gap_before[i] += gap_before[i - 1];
        }
    }

    let n = (mains.len() - window) / stride + 1;
    let mut inputs = Vec::with_capacity(n * window);
    let mut targets = Vec::with_capacity(n * window);
    let mut starts = Vec::with_capacity(n);
    for k in 0..n {
        let s = k * stride;
        if gap_before[s + window - 1] != gap_before[s] {
            continue;
        }
        inputs.extend(mains.values[s..s + window].iter().map(|&v| input_stats.normalize(v)));
        targets.extend(appliance.values[s..s + window].iter().map(|&v| target_stats.normalize(v)));
        starts.push(s);
    }
    if starts.is_empty() {
        return Err(Error::Empty("every window spans a timestamp gap".into()));
    }
    Ok(WindowedDataset {
        inputs: Tensor::from_vec(&[starts.len(), window], inputs)?,
        targets: Tensor::from_vec(&[starts.len(), window], targets)?,
        starts,
        input_stats,
        target_stats,
        window_len: window,
        stride,
    })
}

/// `floor(fraction * len)`, requiring both sides to be nonempty.
pub fn split_index(len: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let idx = (train_fraction * len as f64 + 1e-9).floor() as usize;
    if idx == 0 || idx >= len {
        return Err(Error::Empty(format!(
            "splitting {len} samples at fraction {train_fraction} leaves an empty side"
        )));
    }
    Ok(idx)
}

/// Chronological train/test split with statistics from the training prefix.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub train_mains: TimeSeries,
    pub train_appliance: TimeSeries,
    pub test_mains: TimeSeries,
    pub test_appliance: TimeSeries,
    pub split_index: usize,
    pub input_stats: NormStats,
    pub target_stats: NormStats,
}

impl SplitData {
    pub fn train_windows(&self, window: usize, stride: usize) -> Result<WindowedDataset> {
        make_windows(&self.train_mains, &self.train_appliance, window, stride, self.input_stats, self.target_stats)
    }

    pub fn test_windows(&self, window: usize, stride: usize) -> Result<WindowedDataset> {
        make_windows(&self.test_mains, &self.test_appliance, window, stride, self.input_stats, self.target_stats)
    }
}

pub fn split_train_test(mains: &TimeSeries, appliance: &TimeSeries, train_fraction: f64) -> Result<SplitData> {
    check_aligned(mains, appliance)?;
    let idx = split_index(mains.len(), train_fraction)?;
    Ok(SplitData {
        input_stats: compute_norm_stats(&mains.values, 0..idx)?,
        target_stats: compute_norm_stats(&appliance.values, 0..idx)?,
        train_mains: mains.slice(0..idx),
        train_appliance: appliance.slice(0..idx),
        test_mains: mains.slice(idx..mains.len()),
        test_appliance: appliance.slice(idx..appliance.len()),
        split_index: idx,
    })
}

/// Averages `[N, W]` window predictions placed at `starts` over `total_len`
/// positions, then denormalizes and clamps to nonnegative watts. Every
/// position must be covered by at least one window.
pub fn stitch_at(preds: &Tensor, starts: &[usize], total_len: usize, stats: &NormStats) -> Result<Vec<f64>> {
    if preds.shape().len() != 2 || preds.rows() != starts.len() {
        return Err(Error::Shape(format!(
            "{} window starts for predictions of shape {:?}",
            starts.len(),
            preds.shape()
        )));
    }
    let w = preds.cols();
    let mut sum = vec![0.0; total_len];
    let mut count = vec![0u32; total_len];
    for (i, &s) in starts.iter().enumerate() {
        if s + w > total_len {
            return Err(Error::Shape(format!(
                "window at {s} of width {w} runs past {total_len} samples"
            )));
        }
        for (j, &p) in preds.row(i).iter().enumerate() {
            sum[s + j] += p;
            count[s + j] += 1;
        }
    }
    if let Some(hole) = count.iter().position(|&c| c == 0) {
        return Err(Error::Shape(format!("position {hole} is not covered by any window")));
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| stats.denormalize(s / c as f64).max(0.0))
        .collect())
}

/// Stitches windows taken every `stride` samples from the start. The result
/// covers `(N - 1) * stride + W` samples, which must not exceed `total_len`.
pub fn stitch_predictions(preds: &Tensor, stride: usize, total_len: usize, stats: &NormStats) -> Result<Vec<f64>> {
    if preds.shape().len() != 2 || preds.rows() == 0 || stride == 0 {
        return Err(Error::Shape(format!(
            "cannot stitch predictions of shape {:?} with stride {stride}",
            preds.shape()
        )));
    }
    let (n, w) = (preds.rows(), preds.cols());
    if stride > w {
        return Err(Error::Shape(format!("stride {stride} exceeds window {w}, leaving holes")));
    }
    let covered = (n - 1) * stride + w;
    if covered > total_len {
        return Err(Error::Shape(format!(
            "{n} windows of {w} at stride {stride} cover {covered} samples, more than {total_len}"
        )));
    }
    let starts: Vec<usize> = (0..n).map(|k| k * stride).collect();
    stitch_at(preds, &starts, covered, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(len: usize) -> (TimeSeries, TimeSeries) {
        let ts: Vec<i64> = (0..len as i64).map(|i| i * 8).collect();
        let mains = TimeSeries::new("aggregate", ts.clone(), (0..len).map(|i| 100.0 + i as f64).collect()).unwrap();
        let app = TimeSeries::new("kettle", ts, (0..len).map(|i| (i % 7) as f64).collect()).unwrap();
        (mains, app)
    }

    #[test]
    fn window_counts() {
        let id = NormStats::identity();
        let (m, a) = series(100);
        assert_eq!(make_windows(&m, &a, 100, 1, id, id).unwrap().len(), 1);
        let (m, a) = series(103);
        assert_eq!(make_windows(&m, &a, 100, 1, id, id).unwrap().len(), 4);
        let (m, a) = series(99);
        assert!(make_windows(&m, &a, 100, 1, id, id).is_err());
    }

    #[test]
    fn windows_are_normalized_slices() {
        let (m, a) = series(20);
        let is = NormStats { mean: 100.0, std: 2.0 };
        let ts = NormStats { mean: 1.0, std: 0.5 };
        let d = make_windows(&m, &a, 5, 3, is, ts).unwrap();
        assert_eq!(d.starts, vec![0, 3, 6, 9, 12, 15]);
        assert_eq!(d.input(1), &[1.5, 2.0, 2.5, 3.0, 3.5]);
        assert_eq!(d.target(1)[0], (3.0 - 1.0) / 0.5);
    }

    #[test]
    fn windows_skip_gaps() {
        let ts = vec![0, 8, 16, 24, 200, 208, 216, 224];
        let m = TimeSeries::new("m", ts.clone(), vec![1.0; 8]).unwrap();
        let a = TimeSeries::new("a", ts, vec![0.0; 8]).unwrap();
        let id = NormStats::identity();
        let d = make_windows(&m, &a, 3, 1, id, id).unwrap();
        assert_eq!(d.starts, vec![0, 1, 4, 5]);
    }

    #[test]
    fn split_sizes() {
        let (m, a) = series(10);
        let s = split_train_test(&m, &a, 0.7).unwrap();
        assert_eq!((s.train_mains.len(), s.test_mains.len()), (7, 3));
        assert_eq!(split_index(100_000, 0.7).unwrap(), 70_000);
        assert!(split_index(10, 0.0).is_err());
        assert!(split_index(10, 1.0).is_err());
        assert!(split_index(1, 0.7).is_err());
    }

    #[test]
    fn split_stats_ignore_test_range() {
        let (m, a) = series(50);
        let s1 = split_train_test(&m, &a, 0.7).unwrap();
        let (mut m2, mut a2) = (m.clone(), a.clone());
        m2.values[45] = 1e6;
        a2.values[49] = 1e6;
        let s2 = split_train_test(&m2, &a2, 0.7).unwrap();
        assert_eq!(s1.input_stats, s2.input_stats);
        assert_eq!(s1.target_stats, s2.target_stats);
    }

    #[test]
    fn stitch_examples() {
        let id = NormStats::identity();
        let p = Tensor::matrix(&[&[1.0, 3.0], &[5.0, 7.0]]);
        assert_eq!(stitch_predictions(&p, 1, 3, &id).unwrap(), vec![1.0, 4.0, 7.0]);
        assert_eq!(stitch_predictions(&p, 2, 4, &id).unwrap(), vec![1.0, 3.0, 5.0, 7.0]);
        let same = Tensor::filled(&[4, 3], 2.5);
        assert!(stitch_predictions(&same, 1, 6, &id).unwrap().iter().all(|&v| v == 2.5));
        assert!(stitch_predictions(&p, 2, 3, &id).is_err());
        assert!(stitch_predictions(&p, 3, 10, &id).is_err());
    }

    #[test]
    fn stitch_clamps_negative_watts() {
        let s = NormStats { mean: 10.0, std: 5.0 };
        let p = Tensor::matrix(&[&[-4.0, 1.0]]);
        assert_eq!(stitch_predictions(&p, 2, 2, &s).unwrap(), vec![0.0, 15.0]);
    }

    #[test]
    fn windowing_then_stitching_reproduces_targets() {
        let (m, a) = series(40);
        let split = split_train_test(&m, &a, 0.7).unwrap();
        let d = split.train_windows(7, 7).unwrap();
        let back = stitch_predictions(&d.targets, 7, split.train_appliance.len(), &d.target_stats).unwrap();
        for (x, y) in back.iter().zip(&split.train_appliance.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
