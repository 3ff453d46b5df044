//! Stage drivers: simulate, metrics, bin, fit and run-all.
//!
//! Each stage reads and writes only the documented files, so any stage can
//! be re-run on its own. In-memory variants (`compute_*`) are exposed for
//! callers that do not need the files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::binning::{bin_by_altitude, BinnedMetricSeries, MetricKind, DEFAULT_DELTA_H, DEFAULT_MIN_COUNT};
use crate::error::{Error, Result};
use crate::fit::{fit_exp, fit_exp_reduced, fit_logistic, FitOptions, FitReport, ModelKind};
use crate::io::{self, GridFile, MetricRow};
use crate::metrics::{self, ThresholdSpec, ENTROPY_EPS};
use crate::model::{logistic_eval, CurveModel, DEFAULT_TRANSITION_Q};
use crate::psd::WelchConfig;
use crate::spectrum::{default_band_registry, extract_band_psd, resolve_spec, BandSpec, FrequencyGrid, SweepRecord};
use crate::synth::{gen_sweep_dataset, ScenarioSpec};

/// Relative entropy range below which the reduced exponential model is used.
pub const ENTROPY_FLATNESS: f64 = 0.02;

pub const SWEEPS_FILE: &str = "sweeps.csv";
pub const GRID_FILE: &str = "grid.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const BANDS_FILE: &str = "bands.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BINNED_FILE: &str = "binned.csv";
pub const TABLE_FILE: &str = "table.csv";
pub const SUMMARY_FILE: &str = "fit_summary.csv";

/// Settings echoed into every metadata sidecar.
fn assumptions() -> serde_json::Value {
    let welch = WelchConfig::default();
    json!({
        "entropy_eps": ENTROPY_EPS,
        "entropy_eps_kind": "absolute, linear power units",
        "welch_window": welch.window,
        "welch_overlap_fraction": welch.overlap_fraction,
        "welch_scaling": welch.scaling,
        "welch_window_and_overlap_assumed": true,
        "percentile_convention": "linear interpolation between order statistics at rank p/100*(n-1), on dB values",
        "threshold_comparison": "strict (>)",
        "threshold_scope": "per_band_per_campaign",
        "min_count_assumed": true,
        "entropy_fit_units": "normalized entropy; table columns converted to bits by log2(|F_b|)",
        "r2_for_all_metrics_is_extension": true,
        "fit_weighting": "unweighted bin means",
    })
}

fn write_meta(path: &Path, stage: &str, params: serde_json::Value) -> Result<()> {
    let meta = json!({
        "tool": "adssm",
        "version": env!("CARGO_PKG_VERSION"),
        "stage": stage,
        "assumptions": assumptions(),
        "params": params,
    });
    io::write_json(&io::meta_path(path), &meta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Band registry; the bundled six-band registry when absent.
    #[serde(default)]
    pub bands: Option<PathBuf>,
    /// Existing sweep file (its grid is read from `grid.json` beside it).
    #[serde(default)]
    pub sweeps: Option<PathBuf>,
    /// Scenario to simulate when no sweep file is given.
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    #[serde(default = "default_delta_h")]
    pub delta_h: f64,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default)]
    pub threshold: ThresholdSpec,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default = "default_q")]
    pub transitions_q: [f64; 3],
}

fn default_delta_h() -> f64 {
    DEFAULT_DELTA_H
}

fn default_min_count() -> usize {
    DEFAULT_MIN_COUNT
}

fn default_q() -> [f64; 3] {
    DEFAULT_TRANSITION_Q
}

impl PipelineConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            bands: None,
            sweeps: None,
            scenario: None,
            seed: None,
            out_dir: out_dir.into(),
            delta_h: DEFAULT_DELTA_H,
            min_count: DEFAULT_MIN_COUNT,
            threshold: ThresholdSpec::default(),
            fit: FitOptions::default(),
            transitions_q: DEFAULT_TRANSITION_Q,
        }
    }

    /// Relative paths inside a config file are taken relative to the file.
    fn rebase(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.bands.iter_mut().for_each(fix);
        self.sweeps.iter_mut().for_each(fix);
        self.scenario.iter_mut().for_each(fix);
        fix(&mut self.out_dir);
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(cfg.rebase(base))
    }
}

// ---- simulate ----

pub fn cmd_simulate(scenario_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut spec: ScenarioSpec = io::read_json(scenario_path)?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    let data = gen_sweep_dataset(&spec)?;
    io::ensure_dir(out_dir)?;

    let sweeps = out_dir.join(SWEEPS_FILE);
    io::write_sweeps_csv(&sweeps, &data.records)?;
    write_meta(
        &sweeps,
        "simulate",
        json!({ "seed": spec.seed, "seed_overridden": seed_override.is_some(), "snapshots": data.records.len() }),
    )?;
    io::write_json(&out_dir.join(GRID_FILE), &GridFile::from_grid(&data.grid, spec.gain_offset_db))?;
    io::write_json(&out_dir.join(BANDS_FILE), &spec.band_specs())?;
    io::write_json(&out_dir.join(TRUTH_FILE), &data.truth)
}

// ---- metrics ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub name: String,
    pub n_bins: usize,
    pub noise_floor_db: f64,
    pub gamma_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsOutput {
    pub rows: Vec<MetricRow>,
    pub bands: Vec<BandSummary>,
    /// Bands that could not be resolved on the grid, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Two passes: pool every in-band sample of the campaign to fix each band's
/// detection threshold, then evaluate every snapshot.
pub fn compute_metrics(
    grid: &FrequencyGrid,
    records: &[SweepRecord],
    registry: &[BandSpec],
    threshold: &ThresholdSpec,
) -> Result<MetricsOutput> {
    threshold.validate()?;
    if records.is_empty() {
        return Err(Error::Input("no sweep records".into()));
    }
    for r in records {
        r.validate(grid)?;
    }
    let mut bands = Vec::new();
    let mut skipped = Vec::new();
    for spec in registry {
        match resolve_spec(grid, spec) {
            Ok(b) => bands.push(b),
            Err(e @ Error::BandOutOfRange { .. }) => skipped.push((spec.name.clone(), e.to_string())),
            Err(e) => return Err(e),
        }
    }

    let mut summaries = Vec::with_capacity(bands.len());
    for band in &bands {
        let mut pool = Vec::with_capacity(records.len() * band.len());
        for r in records {
            pool.extend(extract_band_psd(r, band)?);
        }
        let floor = metrics::noise_floor(&pool, threshold)?;
        summaries.push(BandSummary {
            name: band.name.clone(),
            n_bins: band.len(),
            noise_floor_db: floor,
            gamma_db: floor + threshold.margin_db,
        });
    }

    let mut rows = Vec::with_capacity(records.len() * bands.len());
    for r in records {
        for (band, summary) in bands.iter().zip(&summaries) {
            let psd = extract_band_psd(r, band)?;
            let m = metrics::evaluate(&psd, r.altitude, summary.gamma_db)?;
            rows.push(MetricRow {
                timestamp_s: r.timestamp,
                altitude_m: r.altitude,
                band: band.name.clone(),
                power_db: m.power_db,
                entropy_bits: m.entropy_bits,
                entropy_norm: m.entropy_norm,
                sparsity: m.sparsity,
            });
        }
    }
    Ok(MetricsOutput { rows, bands: summaries, skipped })
}

/// `grid.json` next to the sweep file.
pub fn grid_path_for(sweeps: &Path) -> PathBuf {
    sweeps.parent().unwrap_or(Path::new(".")).join(GRID_FILE)
}

pub fn cmd_metrics(
    sweeps_path: &Path,
    grid_path: Option<&Path>,
    bands_path: Option<&Path>,
    out_dir: &Path,
    threshold: &ThresholdSpec,
) -> Result<MetricsOutput> {
    let grid_path = grid_path.map_or_else(|| grid_path_for(sweeps_path), Path::to_path_buf);
    let grid_file: GridFile = io::read_json(&grid_path)?;
    let grid = grid_file.grid()?;
    let registry = match bands_path {
        Some(p) => io::read_band_registry(p)?,
        None => default_band_registry(),
    };
    let records = io::read_sweeps_csv(sweeps_path, &grid_file)?;
    if records.is_empty() {
        return Err(Error::Input(format!("{}: no sweep rows", sweeps_path.display())));
    }
    let out = compute_metrics(&grid, &records, &registry, threshold)?;
    for (name, why) in &out.skipped {
        eprintln!("warning: skipping band '{name}': {why}");
    }

    io::ensure_dir(out_dir)?;
    let path = out_dir.join(METRICS_FILE);
    io::write_metrics_csv(&path, &out.rows)?;
    write_meta(
        &path,
        "metrics",
        json!({
            "threshold": threshold,
            "snapshots": records.len(),
            "bands": out.bands,
            "skipped_bands": out.skipped.iter().map(|(n, w)| json!({"name": n, "reason": w})).collect::<Vec<_>>(),
            "gain_offset_db": grid_file.gain_offset_db,
        }),
    )?;
    Ok(out)
}

// ---- bin ----

/// Bins every (band, metric) pair, in band order of first appearance. Pairs
/// with no surviving bin are returned as warnings.
pub fn compute_binned(
    rows: &[MetricRow],
    delta_h: f64,
    min_count: usize,
) -> Result<(Vec<BinnedMetricSeries>, Vec<String>)> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_band: BTreeMap<&str, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        if !by_band.contains_key(r.band.as_str()) {
            order.push(&r.band);
        }
        by_band.entry(&r.band).or_default().push(r);
    }
    let mut series = Vec::new();
    let mut warnings = Vec::new();
    for band in order {
        let band_rows = &by_band[band];
        // all-zero snapshots carry a -inf power sentinel and are excluded for every metric
        let valid: Vec<&&MetricRow> = band_rows.iter().filter(|r| r.power_db.is_finite()).collect();
        for metric in MetricKind::ALL {
            let samples: Vec<(f64, f64)> = valid.iter().map(|r| (r.altitude_m, r.value(metric))).collect();
            match bin_by_altitude(band, metric, &samples, delta_h, min_count) {
                Ok(s) => series.push(s),
                Err(e @ Error::EmptySeries { .. }) => warnings.push(format!("{band}/{metric}: {e}")),
                Err(e) => return Err(e),
            }
        }
    }
    Ok((series, warnings))
}

pub fn cmd_bin(metrics_path: &Path, delta_h: f64, min_count: usize, out_dir: &Path) -> Result<Vec<BinnedMetricSeries>> {
    let rows = io::read_metrics_csv(metrics_path)?;
    if rows.is_empty() {
        return Err(Error::Input(format!("{}: no metric rows", metrics_path.display())));
    }
    let (series, warnings) = compute_binned(&rows, delta_h, min_count)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    // carry band sizes forward for the entropy bit conversion
    let band_sizes: Option<serde_json::Value> = io::read_json::<serde_json::Value>(&io::meta_path(metrics_path))
        .ok()
        .and_then(|m| m.pointer("/params/bands").cloned());

    io::ensure_dir(out_dir)?;
    let path = out_dir.join(BINNED_FILE);
    io::write_binned_csv(&path, &series)?;
    write_meta(
        &path,
        "bin",
        json!({
            "delta_h_m": delta_h,
            "min_count": min_count,
            "bin_origin_m": 0.0,
            "intervals": "half-open [k*dh, (k+1)*dh)",
            "warnings": warnings,
            "bands": band_sizes,
        }),
    )?;
    Ok(series)
}

// ---- fit ----

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub band: String,
    pub metric: MetricKind,
    pub result: std::result::Result<FitReport, String>,
}

/// A fitted time constant beyond this multiple of the altitude span means the
/// curve is unidentifiable over the sampled range.
pub const TAU_SPAN_LIMIT: f64 = 10.0;

/// Full exponential fit, falling back to the reduced model on a degenerate
/// series or a runaway time constant.
fn fit_exp_guarded(series: &BinnedMetricSeries, opts: &FitOptions) -> Result<FitReport> {
    let span = series.bins.last().zip(series.bins.first()).map_or(0.0, |(l, f)| l.center_altitude - f.center_altitude);
    match fit_exp(series, opts) {
        Err(Error::Degenerate(_)) => fit_exp_reduced(series, None, opts),
        Ok(r) if matches!(r.params, CurveModel::Exp(p) if p.tau > TAU_SPAN_LIMIT * span) => {
            fit_exp_reduced(series, None, opts)
        }
        other => other,
    }
}

fn fit_one(series: &BinnedMetricSeries, opts: &FitOptions) -> Result<FitReport> {
    match series.metric {
        MetricKind::Sparsity => fit_logistic(series, opts),
        MetricKind::EntropyNorm => {
            let means = series.means();
            let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = means.iter().sum::<f64>() / means.len().max(1) as f64;
            if means.len() >= 3 && hi - lo < ENTROPY_FLATNESS * mean.abs() {
                return fit_exp_reduced(series, None, opts);
            }
            fit_exp_guarded(series, opts)
        }
        MetricKind::Power => fit_exp_guarded(series, opts),
    }
}

/// Fits every series; failures are kept as "not fitted" outcomes.
pub fn compute_fits(series: &[BinnedMetricSeries], opts: &FitOptions) -> Result<Vec<FitOutcome>> {
    opts.validate()?;
    Ok(series
        .iter()
        .map(|s| FitOutcome {
            band: s.band.clone(),
            metric: s.metric,
            result: fit_one(s, opts).map_err(|e| e.to_string()),
        })
        .collect())
}

/// One summary-table row; `None` renders as an empty field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableRow {
    pub band: String,
    pub p_inf_db: Option<f64>,
    pub p0_db: Option<f64>,
    pub h_inf_bits: Option<f64>,
    pub h0_bits: Option<f64>,
    pub s_inf: Option<f64>,
    pub s0: Option<f64>,
    pub rmse_p_db: Option<f64>,
    pub rmse_h_bits: Option<f64>,
    pub rmse_s: Option<f64>,
    pub r2_p: Option<f64>,
}

pub const TABLE_HEADER: [&str; 11] = [
    "band", "P_inf_db", "P0_db", "H_inf_bits", "H0_bits", "S_inf", "S0", "rmse_p_db", "rmse_h_bits", "rmse_s", "r2_p",
];

fn two_decimals(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => {
            let s = format!("{v:.2}");
            if s == "-0.00" {
                "0.00".into()
            } else {
                s
            }
        }
        _ => String::new(),
    }
}

impl TableRow {
    /// Assembles a row from the band's power, entropy and sparsity reports.
    /// Entropy is converted from normalized units to bits with
    /// `log2(band_bins)` when the band size is known.
    pub fn from_reports(band: &str, reports: &[&FitReport], band_bins: Option<usize>) -> Self {
        let mut row = TableRow { band: band.to_string(), ..Default::default() };
        for r in reports {
            match (r.metric, &r.params) {
                (MetricKind::Power, CurveModel::Exp(p)) => {
                    row.p_inf_db = Some(p.x_inf);
                    row.p0_db = Some(p.x_zero);
                    row.rmse_p_db = Some(r.rmse);
                    row.r2_p = r.r2;
                }
                (MetricKind::EntropyNorm, CurveModel::Exp(p)) => {
                    if let Some(scale) = band_bins.filter(|&n| n > 1).map(|n| (n as f64).log2()) {
                        row.h_inf_bits = Some(p.x_inf * scale);
                        row.h0_bits = Some(p.x_zero * scale);
                        row.rmse_h_bits = Some(r.rmse * scale);
                    }
                }
                (MetricKind::Sparsity, CurveModel::Logistic(p)) => {
                    row.s_inf = Some(1.0);
                    row.s0 = Some(logistic_eval(p, 0.0));
                    row.rmse_s = Some(r.rmse);
                }
                _ => {}
            }
        }
        row
    }

    pub fn fields(&self) -> [String; 11] {
        [
            self.band.clone(),
            two_decimals(self.p_inf_db),
            two_decimals(self.p0_db),
            two_decimals(self.h_inf_bits),
            two_decimals(self.h0_bits),
            two_decimals(self.s_inf),
            two_decimals(self.s0),
            two_decimals(self.rmse_p_db),
            two_decimals(self.rmse_h_bits),
            two_decimals(self.rmse_s),
            two_decimals(self.r2_p),
        ]
    }
}

pub fn table_rows(outcomes: &[FitOutcome], band_bins: &BTreeMap<String, usize>) -> Vec<TableRow> {
    let mut order: Vec<&str> = Vec::new();
    for o in outcomes {
        if !order.contains(&o.band.as_str()) {
            order.push(&o.band);
        }
    }
    order
        .into_iter()
        .map(|band| {
            let reports: Vec<&FitReport> = outcomes
                .iter()
                .filter(|o| o.band == band)
                .filter_map(|o| o.result.as_ref().ok())
                .collect();
            TableRow::from_reports(band, &reports, band_bins.get(band).copied())
        })
        .collect()
}

pub fn write_table_csv(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(TABLE_HEADER).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(r.fields()).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// File-name-safe form of a band name.
pub fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

fn write_plot_data(dir: &Path, series: &BinnedMetricSeries, report: &FitReport, opts: &FitOptions) -> Result<()> {
    let stem = format!("{}_{}", slug(&series.band), series.metric);
    let top = series.bins.last().map_or(0.0, |b| b.center_altitude + 0.5 * series.delta_h);
    let curve = dir.join(format!("{stem}_curve.csv"));
    let mut w = csv::Writer::from_path(&curve).map_err(|e| Error::csv(&curve, e))?;
    w.write_record(["altitude_m", "fitted"]).map_err(|e| Error::csv(&curve, e))?;
    for h in 0..=top.ceil() as usize {
        let h = h as f64;
        w.write_record([h.to_string(), report.eval(h).to_string()]).map_err(|e| Error::csv(&curve, e))?;
    }
    w.flush().map_err(|e| Error::io(&curve, e))?;
    write_meta(&curve, "fit", json!({ "options": opts, "curve_step_m": 1.0, "model": report.model }))?;

    let bins = dir.join(format!("{stem}_bins.csv"));
    let mut w = csv::Writer::from_path(&bins).map_err(|e| Error::csv(&bins, e))?;
    w.write_record(["center_m", "mean", "std", "count"]).map_err(|e| Error::csv(&bins, e))?;
    for b in &series.bins {
        w.write_record([
            b.center_altitude.to_string(),
            b.mean.to_string(),
            b.std.to_string(),
            b.count.to_string(),
        ])
        .map_err(|e| Error::csv(&bins, e))?;
    }
    w.flush().map_err(|e| Error::io(&bins, e))?;
    write_meta(&bins, "fit", json!({ "delta_h_m": series.delta_h }))
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Band sizes recorded upstream in a sidecar's `params.bands` array.
fn band_sizes_from_meta(meta: &serde_json::Value) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    if let Some(list) = meta.pointer("/params/bands").and_then(|v| v.as_array()) {
        for b in list {
            if let (Some(name), Some(n)) = (b["name"].as_str(), b["n_bins"].as_u64()) {
                out.insert(name.to_string(), n as usize);
            }
        }
    }
    out
}

pub fn cmd_fit(binned_path: &Path, out_dir: &Path, opts: &FitOptions) -> Result<Vec<FitOutcome>> {
    opts.validate()?;
    let meta: Option<serde_json::Value> = io::read_json(&io::meta_path(binned_path)).ok();
    let delta_h = meta.as_ref().and_then(|m| m.pointer("/params/delta_h_m")).and_then(|v| v.as_f64());
    let band_bins = meta.as_ref().map(band_sizes_from_meta).unwrap_or_default();
    let series = io::read_binned_csv(binned_path, delta_h)?;
    if series.is_empty() {
        return Err(Error::Input(format!("{}: no binned series", binned_path.display())));
    }
    let outcomes = compute_fits(&series, opts)?;

    let reports_dir = out_dir.join("reports");
    let plot_dir = out_dir.join("plot");
    io::ensure_dir(&reports_dir)?;
    io::ensure_dir(&plot_dir)?;

    let summary_path = out_dir.join(SUMMARY_FILE);
    let mut summary = csv::Writer::from_path(&summary_path).map_err(|e| Error::csv(&summary_path, e))?;
    summary
        .write_record(["band", "metric", "model", "status", "rmse", "r2", "n_bins", "flags", "message"])
        .map_err(|e| Error::csv(&summary_path, e))?;
    let transitions_path = plot_dir.join("transitions.csv");
    let mut transitions =
        csv::Writer::from_path(&transitions_path).map_err(|e| Error::csv(&transitions_path, e))?;
    transitions
        .write_record(["band", "metric", "model", "h10_m", "h50_m", "h90_m"])
        .map_err(|e| Error::csv(&transitions_path, e))?;

    for (s, o) in series.iter().zip(&outcomes) {
        match &o.result {
            Ok(r) => {
                let stem = format!("{}_{}", slug(&r.band), r.metric);
                io::write_json(&reports_dir.join(format!("{stem}.json")), r)?;
                write_plot_data(&plot_dir, s, r, opts)?;
                let flags: Vec<String> = r
                    .flags
                    .iter()
                    .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
                    .collect();
                summary
                    .write_record([
                        r.band.clone(),
                        r.metric.to_string(),
                        r.model.to_string(),
                        "fitted".into(),
                        r.rmse.to_string(),
                        opt_str(r.r2),
                        r.n_bins.to_string(),
                        flags.join(";"),
                        String::new(),
                    ])
                    .map_err(|e| Error::csv(&summary_path, e))?;
                let h = r.transitions.map(|t| t.h);
                transitions
                    .write_record([
                        r.band.clone(),
                        r.metric.to_string(),
                        r.model.to_string(),
                        opt_str(h.map(|h| h[0])),
                        opt_str(h.map(|h| h[1])),
                        opt_str(h.map(|h| h[2])),
                    ])
                    .map_err(|e| Error::csv(&transitions_path, e))?;
            }
            Err(msg) => {
                eprintln!("warning: {}/{} not fitted: {msg}", o.band, o.metric);
                summary
                    .write_record([
                        o.band.clone(),
                        o.metric.to_string(),
                        String::new(),
                        "not fitted".into(),
                        String::new(),
                        String::new(),
                        s.len().to_string(),
                        String::new(),
                        msg.clone(),
                    ])
                    .map_err(|e| Error::csv(&summary_path, e))?;
            }
        }
    }
    summary.flush().map_err(|e| Error::io(&summary_path, e))?;
    transitions.flush().map_err(|e| Error::io(&transitions_path, e))?;

    let table_path = out_dir.join(TABLE_FILE);
    write_table_csv(&table_path, &table_rows(&outcomes, &band_bins))?;
    let params = json!({
        "options": opts,
        "entropy_flatness_threshold": ENTROPY_FLATNESS,
        "models": {"power": ModelKind::Exp, "entropy_norm": [ModelKind::Exp, ModelKind::ExpReduced], "sparsity": ModelKind::Logistic},
        "reduced_tau": "altitude span / 3",
        "s_inf_reported_as": 1.0,
        "band_bins": band_bins,
        "curve_step_m": 1.0,
    });
    for path in [&table_path, &summary_path, &transitions_path] {
        write_meta(path, "fit", params.clone())?;
    }
    Ok(outcomes)
}

// ---- run-all ----

pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<FitOutcome>> {
    let out = &cfg.out_dir;
    let (sweeps, sim_bands) = match (&cfg.sweeps, &cfg.scenario) {
        (Some(s), _) => (s.clone(), None),
        (None, Some(scenario)) => {
            let dir = out.join("simulate");
            cmd_simulate(scenario, &dir, cfg.seed)?;
            (dir.join(SWEEPS_FILE), Some(dir.join(BANDS_FILE)))
        }
        (None, None) => {
            return Err(Error::config("sweeps", "run-all needs either `sweeps` or `scenario`"));
        }
    };
    let bands = cfg.bands.clone().or(sim_bands);
    let metrics_dir = out.join("metrics");
    cmd_metrics(&sweeps, None, bands.as_deref(), &metrics_dir, &cfg.threshold)?;
    let bin_dir = out.join("binned");
    cmd_bin(&metrics_dir.join(METRICS_FILE), cfg.delta_h, cfg.min_count, &bin_dir)?;
    let opts = FitOptions { q: cfg.transitions_q, ..cfg.fit };
    cmd_fit(&bin_dir.join(BINNED_FILE), &out.join("fit"), &opts)
}
