//! REFIT CSV ingestion and two-column series export.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::TimeSeries;
use crate::error::{Error, Result};

/// Nominal REFIT sampling interval.
pub const REFIT_SAMPLE_SECONDS: f64 = 8.0;
pub const REFIT_APPLIANCE_COLUMNS: usize = 9;
pub const REFIT_HEADER: [&str; 12] = [
    "Time",
    "Unix",
    "Aggregate",
    "Appliance1",
    "Appliance2",
    "Appliance3",
    "Appliance4",
    "Appliance5",
    "Appliance6",
    "Appliance7",
    "Appliance8",
    "Appliance9",
];

#[derive(Clone, Debug)]
pub struct RefitData {
    pub aggregate: TimeSeries,
    pub appliance: TimeSeries,
    /// Rows dropped because the timestamp, aggregate or appliance value was missing or invalid.
    pub dropped_rows: usize,
    /// Median spacing of the kept rows, seconds.
    pub spacing: Option<f64>,
    /// Row indices (into the kept rows) that follow a jump of more than twice the nominal spacing.
    pub gaps: Vec<usize>,
}

fn parse_watts(field: Option<&str>) -> Option<f64> {
    let v: f64 = field?.trim().parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v)
}

fn parse_unix(field: Option<&str>) -> Option<i64> {
    let s = field?.trim();
    s.parse::<i64>()
        .ok()
        .or_else(|| s.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| v as i64))
}

/// Loads the aggregate and one appliance channel (`1..=9`) from a REFIT CSV.
pub fn load_refit_csv(path: impl AsRef<Path>, appliance_column: usize) -> Result<RefitData> {
    let path = path.as_ref();
    if !(1..=REFIT_APPLIANCE_COLUMNS).contains(&appliance_column) {
        return Err(Error::Config(format!(
            "appliance column must be in 1..={REFIT_APPLIANCE_COLUMNS}, got {appliance_column}"
        )));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != REFIT_HEADER {
        return Err(Error::Parse(format!(
            "{}: header {:?} does not match the REFIT layout {:?}",
            path.display(),
            header,
            REFIT_HEADER
        )));
    }

    let app_idx = 2 + appliance_column;
    let mut timestamps = Vec::new();
    let mut agg = Vec::new();
    let mut app = Vec::new();
    let mut dropped = 0;
    for record in reader.records() {
        let record = record?;
        match (parse_unix(record.get(1)), parse_watts(record.get(2)), parse_watts(record.get(app_idx))) {
            (Some(t), Some(a), Some(p)) => {
                timestamps.push(t);
                agg.push(a);
                app.push(p);
            }
            _ => dropped += 1,
        }
    }
    if timestamps.is_empty() {
        return Err(Error::Empty(format!("{}: no usable rows", path.display())));
    }
    let aggregate = TimeSeries::new("aggregate", timestamps.clone(), agg)?;
    let appliance = TimeSeries::new(format!("appliance{appliance_column}"), timestamps, app)?;
    Ok(RefitData {
        spacing: aggregate.median_spacing(),
        gaps: aggregate.gaps(REFIT_SAMPLE_SECONDS),
        aggregate,
        appliance,
        dropped_rows: dropped,
    })
}

/// Reads a `unix_seconds,watts` file. Rows with an empty watts field are skipped.
pub fn read_series_csv(path: impl AsRef<Path>, label: &str) -> Result<TimeSeries> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 2 || header[0] != "unix_seconds" || header[1] != "watts" {
        return Err(Error::Parse(format!(
            "{}: expected header unix_seconds,watts, got {:?}",
            path.display(),
            header
        )));
    }
    let mut ts = Vec::new();
    let mut vals = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.get(1).map_or(true, |f| f.trim().is_empty()) {
            continue;
        }
        let t = parse_unix(record.get(0));
        let v = record.get(1).and_then(|f| f.trim().parse::<f64>().ok()).filter(|v| v.is_finite());
        match (t, v) {
            (Some(t), Some(v)) => {
                ts.push(t);
                vals.push(v);
            }
            _ => {
                return Err(Error::Parse(format!("{}: bad row {}", path.display(), line + 2)));
            }
        }
    }
    TimeSeries::new(label, ts, vals)
}

pub fn write_series_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unix_seconds", "watts"])?;
    for (t, v) in series.timestamps.iter().zip(&series.values) {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `{"label": ..., "unix_seconds": [...], "watts": [...]}`.
pub fn write_series_json(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let doc = serde_json::json!({
        "label": series.label,
        "unix_seconds": series.timestamps,
        "watts": series.values,
    });
    let mut f = File::create(path)?;
    serde_json::to_writer(&mut f, &doc)?;
    f.write_all(b"\n")?;
    Ok(())
}
