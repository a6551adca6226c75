//! One function per CLI verb.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nilm::data::{
    generate_synthetic, load_refit_csv, make_windows, read_series_csv, split_train_test, stitch_at, write_series_csv,
    write_series_json, NormStats, SplitData, TimeSeries, REFIT_HEADER,
};
use nilm::eval::{MetricsReport, NamedMetrics};
use nilm::model::{load_checkpoint, save_checkpoint, CheckpointMeta};
use nilm::tensor::Tensor;
use nilm::training::{train_with, write_history_csv};
use nilm::Model;
use serde::{Deserialize, Serialize};

use crate::config::{ApplianceChannel, RunConfig};

pub const SYNTH_FILE: &str = "synthetic.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STATS_FILE: &str = "stats.json";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const TEST_MAINS_FILE: &str = "test_mains.csv";
pub const TEST_TRUTH_FILE: &str = "test_truth.csv";
pub const CHECKPOINT_FILE: &str = "model.nilm";
pub const HISTORY_FILE: &str = "history.csv";
pub const PRED_FILE: &str = "pred.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TABLE: &str = "metrics_table.csv";
pub const PLOT_CSV: &str = "plot.csv";
pub const PLOT_JSON: &str = "plot.json";

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

// ---- synth --------------------------------------------------------------------

pub fn synth(cfg: &RunConfig) -> Result<PathBuf> {
    let synth_cfg = cfg.synth.as_ref().context("synth: config has no [synth] section")?;
    let house = generate_synthetic(synth_cfg).context("synth: generating household")?;
    let out = cfg.out_dir()?;
    create_dir(out)?;
    let path = out.join(SYNTH_FILE);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(REFIT_HEADER)?;
    for t in 0..house.aggregate.len() {
        let unix = house.aggregate.timestamps[t];
        let time = chrono::DateTime::from_timestamp(unix, 0)
            .map(|d| d.format("%Y-%m-%d %H:%M:%S").to_string())
            .unwrap_or_default();
        let mut row = vec![time, unix.to_string(), format!("{}", house.aggregate.values[t].round())];
        for k in 0..9 {
            let v = house.appliances.get(k).map_or(0.0, |a| a.values[t]);
            row.push(format!("{}", v.round()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(path)
}

// ---- prepare ------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct ApplianceStats {
    pub appliance: String,
    pub column: usize,
    pub input_stats: NormStats,
    pub target_stats: NormStats,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApplianceManifest {
    pub appliance: String,
    pub column: usize,
    pub rows_kept: usize,
    pub dropped_rows: usize,
    pub gaps: usize,
    pub split_index: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub window: usize,
    pub train_stride: usize,
    pub inference_stride: usize,
    pub train_windows: usize,
    pub test_windows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    pub start_row: usize,
    pub max_rows: Option<usize>,
    pub train_fraction: f64,
    pub appliances: Vec<ApplianceManifest>,
}

struct Prepared {
    channel: ApplianceChannel,
    split: SplitData,
    manifest: ApplianceManifest,
}

fn select_region(series: &TimeSeries, start: usize, max: Option<usize>) -> Result<TimeSeries> {
    ensure!(start < series.len(), "data.start_row {} is past the {} usable rows", start, series.len());
    let end = max.map_or(series.len(), |m| (start + m).min(series.len()));
    Ok(series.slice(start..end))
}

pub fn prepare(cfg: &RunConfig) -> Result<PathBuf> {
    let csv_path = cfg.data.csv.as_ref().context("prepare: data.csv is not set")?;
    ensure!(csv_path.is_file(), "prepare: input {} does not exist", csv_path.display());
    let out = cfg.out_dir()?;
    let d = &cfg.data;

    // Everything is computed before the first file is written.
    let mut prepared = Vec::new();
    for ch in cfg.appliances(None)? {
        let raw = load_refit_csv(csv_path, ch.column).with_context(|| format!("prepare: loading {}", csv_path.display()))?;
        let mains = select_region(&raw.aggregate, d.start_row, d.max_rows)?;
        let mut appliance = select_region(&raw.appliance, d.start_row, d.max_rows)?;
        appliance.label = ch.name.clone();
        let split = split_train_test(&mains, &appliance, d.train_fraction)
            .with_context(|| format!("prepare: splitting {}", ch.name))?;
        let train_windows = split.train_windows(d.window, d.train_stride).context("prepare: train windows")?;
        let test_windows = split.test_windows(d.window, d.inference_stride()).context("prepare: test windows")?;
        let manifest = ApplianceManifest {
            appliance: ch.name.clone(),
            column: ch.column,
            rows_kept: mains.len(),
            dropped_rows: raw.dropped_rows,
            gaps: mains.median_spacing().map_or(0, |s| mains.gaps(s).len()),
            split_index: split.split_index,
            train_rows: split.train_mains.len(),
            test_rows: split.test_mains.len(),
            window: d.window,
            train_stride: d.train_stride,
            inference_stride: d.inference_stride(),
            train_windows: train_windows.len(),
            test_windows: test_windows.len(),
        };
        prepared.push(Prepared { channel: ch.clone(), split, manifest });
    }

    create_dir(out)?;
    for p in &prepared {
        let dir = out.join(&p.channel.name);
        create_dir(&dir)?;
        write_pair_csv(&p.split.train_mains, &p.split.train_appliance, &dir.join(TRAIN_FILE))?;
        write_pair_csv(&p.split.test_mains, &p.split.test_appliance, &dir.join(TEST_FILE))?;
        write_series_csv(&p.split.test_mains, dir.join(TEST_MAINS_FILE))?;
        write_series_csv(&p.split.test_appliance, dir.join(TEST_TRUTH_FILE))?;
        let stats = ApplianceStats {
            appliance: p.channel.name.clone(),
            column: p.channel.column,
            input_stats: p.split.input_stats,
            target_stats: p.split.target_stats,
        };
        write_json(&stats, &dir.join(STATS_FILE))?;
    }
    let manifest = Manifest {
        source: csv_path.display().to_string(),
        start_row: d.start_row,
        max_rows: d.max_rows,
        train_fraction: d.train_fraction,
        appliances: prepared.into_iter().map(|p| p.manifest).collect(),
    };
    let path = out.join(MANIFEST_FILE);
    write_json(&manifest, &path)?;
    Ok(path)
}

fn write_pair_csv(mains: &TimeSeries, appliance: &TimeSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["unix_seconds", "mains", "appliance"])?;
    for t in 0..mains.len() {
        w.write_record([
            mains.timestamps[t].to_string(),
            mains.values[t].to_string(),
            appliance.values[t].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_pair_csv(path: &Path, name: &str) -> Result<(TimeSeries, TimeSeries)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut ts, mut m, mut a) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).context("short row");
        ts.push(field(0)?.parse::<i64>()?);
        m.push(field(1)?.parse::<f64>()?);
        a.push(field(2)?.parse::<f64>()?);
    }
    Ok((TimeSeries::new("aggregate", ts.clone(), m)?, TimeSeries::new(name, ts, a)?))
}

// ---- train --------------------------------------------------------------------

pub fn train(cfg: &RunConfig, only: Option<&str>) -> Result<Vec<PathBuf>> {
    let out = cfg.out_dir()?;
    let mut written = Vec::new();
    for ch in cfg.appliances(only)? {
        let dir = out.join(&ch.name);
        let stats: ApplianceStats = read_json(&dir.join(STATS_FILE)).context("train: run `prepare` first")?;
        let (train_mains, train_app) = read_pair_csv(&dir.join(TRAIN_FILE), &ch.name)?;
        let (test_mains, test_app) = read_pair_csv(&dir.join(TEST_FILE), &ch.name)?;
        let d = &cfg.data;
        let train_set = make_windows(&train_mains, &train_app, d.window, d.train_stride, stats.input_stats, stats.target_stats)?;
        let valid_set = make_windows(&test_mains, &test_app, d.window, d.inference_stride(), stats.input_stats, stats.target_stats)?;

        let model = Model::new(cfg.model.clone())?;
        let meta = CheckpointMeta {
            appliance: Some(ch.name.clone()),
            input_stats: Some(stats.input_stats),
            target_stats: Some(stats.target_stats),
        };
        let every = cfg.train.checkpoint_every;
        let outcome = train_with(model, &train_set, &valid_set, &cfg.train, |rec, m| {
            eprintln!(
                "[{}] epoch {:>4}  train {:.6}  valid {:.6}",
                ch.name, rec.epoch, rec.train_loss, rec.valid_loss
            );
            if every > 0 && rec.epoch % every == 0 {
                save_checkpoint(m, &meta, dir.join(format!("epoch_{:04}.nilm", rec.epoch)))?;
            }
            Ok(())
        })?;
        let ckpt = dir.join(CHECKPOINT_FILE);
        save_checkpoint(&outcome.best_model, &meta, &ckpt)?;
        write_history_csv(&outcome.history, dir.join(HISTORY_FILE))?;
        written.push(ckpt);
    }
    Ok(written)
}

// ---- disaggregate ---------------------------------------------------------------

/// Reads mains from either a `unix_seconds,watts` file or a REFIT CSV.
fn read_mains(path: &Path) -> Result<TimeSeries> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let first = r.headers()?.get(0).unwrap_or("").trim().to_string();
    if first == "Time" {
        Ok(load_refit_csv(path, 1)?.aggregate)
    } else {
        Ok(read_series_csv(path, "aggregate")?)
    }
}

/// Window starts every `stride` samples, plus one flush with the end so the
/// whole series is covered.
fn cover_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=(len - window)).step_by(stride).collect();
    if starts.last().map_or(true, |&s| s + window < len) {
        starts.push(len - window);
    }
    starts
}

pub fn disaggregate_series(model: &Model, mains: &TimeSeries, meta: &CheckpointMeta, stride: usize) -> Result<TimeSeries> {
    let w = model.config.window_len;
    ensure!(
        mains.len() >= w,
        "mains has {} samples, fewer than the model window of {}",
        mains.len(),
        w
    );
    let input_stats = meta.input_stats.context("checkpoint carries no input normalization")?;
    let target_stats = meta.target_stats.context("checkpoint carries no target normalization")?;
    let starts = cover_starts(mains.len(), w, stride.min(w).max(1));
    let mut preds = Vec::with_capacity(starts.len() * w);
    for &s in &starts {
        let window: Vec<f64> = mains.values[s..s + w].iter().map(|&v| input_stats.normalize(v)).collect();
        preds.extend(model.predict(&window)?);
    }
    let preds = Tensor::from_vec(&[starts.len(), w], preds)?;
    let watts = stitch_at(&preds, &starts, mains.len(), &target_stats)?;
    Ok(TimeSeries::new(meta.appliance.clone().unwrap_or_default(), mains.timestamps.clone(), watts)?)
}

pub fn disaggregate(
    cfg: &RunConfig,
    only: Option<&str>,
    checkpoint: Option<&Path>,
    mains: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let out = cfg.out_dir()?;
    let channels = cfg.appliances(only)?;
    if (checkpoint.is_some() || mains.is_some()) && channels.len() != 1 {
        bail!("--checkpoint/--mains need a single appliance; pass --appliance");
    }
    let mut written = Vec::new();
    for ch in channels {
        let dir = out.join(&ch.name);
        let ckpt = checkpoint.map_or_else(|| dir.join(CHECKPOINT_FILE), Path::to_path_buf);
        let mains_path = mains.map_or_else(|| dir.join(TEST_MAINS_FILE), Path::to_path_buf);
        let (model, meta) = load_checkpoint(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
        ensure!(
            model.config.window_len == cfg.data.window,
            "checkpoint window {} does not match data.window {}",
            model.config.window_len,
            cfg.data.window
        );
        let series = read_mains(&mains_path)?;
        let pred = disaggregate_series(&model, &series, &meta, cfg.data.inference_stride())?;
        create_dir(&dir)?;
        let path = dir.join(PRED_FILE);
        write_series_csv(&pred, &path)?;
        written.push(path);
    }
    Ok(written)
}

// ---- evaluate -----------------------------------------------------------------

fn aligned(truth: &TimeSeries, pred: &TimeSeries, name: &str) -> Result<()> {
    ensure!(
        truth.len() == pred.len(),
        "{name}: truth has {} samples but prediction has {}",
        truth.len(),
        pred.len()
    );
    ensure!(truth.timestamps == pred.timestamps, "{name}: truth and prediction timestamps differ");
    Ok(())
}

pub fn evaluate(
    cfg: &RunConfig,
    only: Option<&str>,
    truth: Option<&Path>,
    pred: Option<&Path>,
    metrics: Option<&Path>,
) -> Result<PathBuf> {
    let out = cfg.out_dir()?;
    let report = if let Some(path) = metrics {
        let named: Vec<NamedMetrics> = read_json(path)?;
        MetricsReport::from_metrics(named, None)?
    } else {
        let channels = cfg.appliances(only)?;
        if (truth.is_some() || pred.is_some()) && channels.len() != 1 {
            bail!("--truth/--pred need a single appliance; pass --appliance");
        }
        let mut entries = Vec::new();
        for ch in channels {
            let dir = out.join(&ch.name);
            let t_path = truth.map_or_else(|| dir.join(TEST_TRUTH_FILE), Path::to_path_buf);
            let p_path = pred.map_or_else(|| dir.join(PRED_FILE), Path::to_path_buf);
            let t = read_series_csv(&t_path, &ch.name)?;
            let p = read_series_csv(&p_path, &ch.name)?;
            aligned(&t, &p, &ch.name)?;
            entries.push((ch.name.clone(), t.values, p.values, ch.threshold));
        }
        MetricsReport::evaluate(&entries)?
    };
    create_dir(out)?;
    report.write_json(out.join(METRICS_JSON))?;
    report.write_table_csv(out.join(METRICS_TABLE))?;
    Ok(out.join(METRICS_JSON))
}

// ---- report -------------------------------------------------------------------

pub fn report(cfg: &RunConfig, run_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let run = match run_dir {
        Some(p) => p,
        None => cfg.out_dir()?,
    };
    let mut written = Vec::new();
    for ch in cfg.appliances(None)? {
        let dir = run.join(&ch.name);
        let t = read_series_csv(dir.join(TEST_TRUTH_FILE), &ch.name)?;
        let p = read_series_csv(dir.join(PRED_FILE), &ch.name)?;
        aligned(&t, &p, &ch.name)?;
        let path = dir.join(PLOT_CSV);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["unix_seconds", "truth", "prediction"])?;
        for i in 0..t.len() {
            w.write_record([t.timestamps[i].to_string(), t.values[i].to_string(), p.values[i].to_string()])?;
        }
        w.flush()?;
        let mut pred_named = p.clone();
        pred_named.label = format!("{} prediction", ch.name);
        write_series_json(&pred_named, dir.join(PLOT_JSON))?;
        written.push(path);
    }
    Ok(written)
}
