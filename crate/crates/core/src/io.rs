//! On-disk formats shared by the pipeline stages.
//!
//! | file | format |
//! |------|--------|
//! | band registry | JSON array of `{name, f_low_hz, f_high_hz}` |
//! | grid | JSON `{f_start_hz, bin_width_hz, n_bins, gain_offset_db}` |
//! | sweeps | CSV `timestamp_s,altitude_m,bin_index,psd_linear` |
//! | metrics | CSV `timestamp_s,altitude_m,band,power_db,entropy_bits,entropy_norm,sparsity` |
//! | binned series | CSV `band,metric,center_m,mean,std,count` |
//!
//! Every stage output `X` is accompanied by `X.meta.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::binning::{AltitudeBin, BinnedMetricSeries, MetricKind};
use crate::error::{Error, Result};
use crate::spectrum::{BandSpec, FrequencyGrid, SweepRecord};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn read_band_registry(path: &Path) -> Result<Vec<BandSpec>> {
    let bands: Vec<BandSpec> = read_json(path)?;
    if bands.is_empty() {
        return Err(Error::Input(format!("{}: band registry is empty", path.display())));
    }
    Ok(bands)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    /// Center frequency of grid bin 0.
    pub f_start_hz: f64,
    pub bin_width_hz: f64,
    pub n_bins: usize,
    #[serde(default)]
    pub gain_offset_db: f64,
}

impl GridFile {
    pub fn from_grid(grid: &FrequencyGrid, gain_offset_db: f64) -> Self {
        GridFile {
            f_start_hz: grid.first_bin(),
            bin_width_hz: grid.bin_width(),
            n_bins: grid.len(),
            gain_offset_db,
        }
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::uniform(self.f_start_hz, self.bin_width_hz, self.n_bins)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepRow {
    timestamp_s: f64,
    altitude_m: f64,
    bin_index: usize,
    psd_linear: f64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish_csv<W: Write>(path: &Path, w: csv::Writer<W>) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

pub fn write_sweeps_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in records {
        for (i, &p) in r.psd.iter().enumerate() {
            w.serialize(SweepRow {
                timestamp_s: r.timestamp,
                altitude_m: r.altitude,
                bin_index: i,
                psd_linear: p,
            })
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    finish_csv(path, w)
}

/// Reads the long-format sweep file; consecutive rows sharing a timestamp
/// form one record, which must cover every grid bin exactly once.
pub fn read_sweeps_csv(path: &Path, grid: &GridFile) -> Result<Vec<SweepRecord>> {
    let mut records: Vec<SweepRecord> = Vec::new();
    let mut seen: Vec<bool> = Vec::new();
    let check_complete = |rec: &SweepRecord, seen: &[bool]| -> Result<()> {
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Input(format!(
                "{}: snapshot t={} is missing bin {i}",
                path.display(),
                rec.timestamp
            )));
        }
        Ok(())
    };
    for row in csv_reader(path)?.deserialize() {
        let row: SweepRow = row.map_err(|e| Error::csv(path, e))?;
        if row.bin_index >= grid.n_bins {
            return Err(Error::Input(format!(
                "{}: bin_index {} outside the {}-bin grid",
                path.display(),
                row.bin_index,
                grid.n_bins
            )));
        }
        let new_snapshot = records.last().is_none_or(|r| r.timestamp != row.timestamp_s);
        if new_snapshot {
            if let Some(r) = records.last() {
                check_complete(r, &seen)?;
            }
            records.push(SweepRecord::empty(
                row.timestamp_s,
                row.altitude_m,
                grid.n_bins,
                grid.gain_offset_db,
            ));
            seen = vec![false; grid.n_bins];
        }
        if std::mem::replace(&mut seen[row.bin_index], true) {
            return Err(Error::Input(format!(
                "{}: bin {} repeated in snapshot t={}",
                path.display(),
                row.bin_index,
                row.timestamp_s
            )));
        }
        let rec = records.last_mut().expect("pushed above");
        rec.psd[row.bin_index] = row.psd_linear;
    }
    if let Some(r) = records.last() {
        check_complete(r, &seen)?;
    }
    Ok(records)
}

/// One row of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub timestamp_s: f64,
    pub altitude_m: f64,
    pub band: String,
    pub power_db: f64,
    pub entropy_bits: f64,
    pub entropy_norm: f64,
    pub sparsity: f64,
}

impl MetricRow {
    pub fn value(&self, metric: MetricKind) -> f64 {
        match metric {
            MetricKind::Power => self.power_db,
            MetricKind::EntropyNorm => self.entropy_norm,
            MetricKind::Sparsity => self.sparsity,
        }
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    if rows.is_empty() {
        w.write_record([
            "timestamp_s",
            "altitude_m",
            "band",
            "power_db",
            "entropy_bits",
            "entropy_norm",
            "sparsity",
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    finish_csv(path, w)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    csv_reader(path)?
        .deserialize()
        .map(|r| r.map_err(|e| Error::csv(path, e)))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct BinnedRow {
    band: String,
    metric: MetricKind,
    center_m: f64,
    mean: f64,
    std: f64,
    count: usize,
}

pub fn write_binned_csv(path: &Path, series: &[BinnedMetricSeries]) -> Result<()> {
    let mut w = csv_writer(path)?;
    if series.iter().all(|s| s.is_empty()) {
        w.write_record(["band", "metric", "center_m", "mean", "std", "count"])
            .map_err(|e| Error::csv(path, e))?;
    }
    for s in series {
        for b in &s.bins {
            w.serialize(BinnedRow {
                band: s.band.clone(),
                metric: s.metric,
                center_m: b.center_altitude,
                mean: b.mean,
                std: b.std,
                count: b.count,
            })
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    finish_csv(path, w)
}

/// Reads binned series, grouping consecutive rows by (band, metric). When
/// `delta_h` is not known, it is recovered from the bin centers.
pub fn read_binned_csv(path: &Path, delta_h: Option<f64>) -> Result<Vec<BinnedMetricSeries>> {
    let mut out: Vec<BinnedMetricSeries> = Vec::new();
    for row in csv_reader(path)?.deserialize() {
        let row: BinnedRow = row.map_err(|e| Error::csv(path, e))?;
        let bin = AltitudeBin {
            center_altitude: row.center_m,
            mean: row.mean,
            std: row.std,
            count: row.count,
        };
        match out.last_mut() {
            Some(s) if s.band == row.band && s.metric == row.metric => s.bins.push(bin),
            _ => out.push(BinnedMetricSeries {
                band: row.band,
                metric: row.metric,
                delta_h: 0.0,
                bins: vec![bin],
            }),
        }
    }
    for s in &mut out {
        s.delta_h = delta_h.unwrap_or_else(|| infer_delta_h(&s.centers()));
    }
    Ok(out)
}

/// Bin centers sit at `(k + 0.5)·Δh`, so `2·min(center)` bounds Δh from
/// above and the smallest gap between neighbours is a multiple of it.
/// Centers sit at `(k + 0.5)·Δh`, so every `2·center` is an odd multiple of
/// `Δh`; the largest such width is the float gcd of the doubled centers.
fn infer_delta_h(centers: &[f64]) -> f64 {
    let gcd = |mut a: f64, mut b: f64| {
        let tol = 1e-9 * a.max(b);
        while b > tol {
            let r = a % b;
            a = b;
            b = if r > b - tol { 0.0 } else { r };
        }
        a
    };
    let d = centers.iter().map(|c| 2.0 * c).filter(|c| *c > 0.0).fold(0.0, gcd);
    if d.is_finite() && d > 0.0 {
        d
    } else {
        1.0
    }
}
