//! Synthetic datasets with planted model parameters.
//!
//! Two fidelity levels: [`gen_metric_series`] draws binned metric curves
//! directly, and [`gen_sweep_dataset`] produces full PSD sweeps from an
//! emitter scenario, to be pushed through every pipeline stage.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::binning::{AltitudeBin, BinnedMetricSeries, MetricKind};
use crate::error::{Error, Result};
use crate::model::{logistic_eval, CurveModel, ExpModelParams, LogisticModelParams};
use crate::psd::SweepAssembler;
use crate::spectrum::{
    build_frequency_grid, db_to_linear, resolve_band, BandDefinition, BandSpec, FrequencyGrid,
    SweepConfig, SweepRecord,
};

/// Sample count written into synthetic bins.
pub const NOMINAL_COUNT: usize = 10;

/// Periodograms averaged per bin by default: a 500k-sample capture split into
/// 512-point segments with 50% overlap.
pub const DEFAULT_NOISE_AVERAGES: usize = 1952;

/// Curve-level oracle: model values at `centers` plus seeded Gaussian noise.
/// Logistic (sparsity) values are clipped to `[0, 1]`.
pub fn gen_metric_series(
    model: &CurveModel,
    centers: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<BinnedMetricSeries> {
    if centers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("centers must be strictly increasing".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Input(format!("noise_sigma must be non-negative, got {noise_sigma}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let metric = match model {
        CurveModel::Exp(_) => MetricKind::Power,
        CurveModel::Logistic(_) => MetricKind::Sparsity,
    };
    let bins = centers
        .iter()
        .map(|&h| {
            let noise: f64 = normal.sample(&mut rng);
            let mut mean = model.eval(h) + noise_sigma * noise;
            if metric == MetricKind::Sparsity {
                mean = mean.clamp(0.0, 1.0);
            }
            AltitudeBin { center_altitude: h, mean, std: noise_sigma, count: NOMINAL_COUNT }
        })
        .collect();
    let delta_h = match centers {
        [a, b, ..] => b - a,
        _ => 1.0,
    };
    Ok(BinnedMetricSeries { band: "synthetic".into(), metric, delta_h, bins })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    /// First occupied bin, relative to the band's first bin.
    pub first_bin: usize,
    pub n_bins: usize,
    /// Level (dB per bin) reached once the excess loss has vanished.
    pub peak_power_db: f64,
    /// Activation midpoint; with `activation_k`, absent means always on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_h50_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_k: Option<f64>,
}

impl Emitter {
    fn activation(&self) -> Option<LogisticModelParams> {
        match (self.activation_h50_m, self.activation_k) {
            (Some(h_s), Some(k)) => Some(LogisticModelParams { k, h_s }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBand {
    pub name: String,
    pub f_low_hz: f64,
    pub f_high_hz: f64,
    /// Mean noise power per bin, dB.
    pub noise_floor_db: f64,
    /// Excess-loss curve shared by the band's emitters: an emitter at
    /// altitude `h` sits `(x_inf − x_zero)·exp(−h/tau)` dB below its peak.
    pub power: ExpModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<ExpModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<LogisticModelParams>,
    #[serde(default)]
    pub emitters: Vec<Emitter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub timestamp_s: f64,
    pub altitude_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Points { points: Vec<TrajectoryPoint> },
    /// Climb from the ground at `rate_m_s` to `h_max_m`, then hold for
    /// `dwell_s`; one sweep every `interval_s`.
    Ascent { h_max_m: f64, rate_m_s: f64, dwell_s: f64, interval_s: f64 },
}

impl Trajectory {
    pub fn points(&self) -> Result<Vec<TrajectoryPoint>> {
        match self {
            Trajectory::Points { points } => Ok(points.clone()),
            &Trajectory::Ascent { h_max_m, rate_m_s, dwell_s, interval_s } => {
                if !(h_max_m >= 0.0 && rate_m_s > 0.0 && dwell_s >= 0.0 && interval_s > 0.0) {
                    return Err(Error::config(
                        "trajectory",
                        "ascent needs h_max >= 0, rate > 0, dwell >= 0, interval > 0",
                    ));
                }
                let total = h_max_m / rate_m_s + dwell_s;
                let n = (total / interval_s + 1e-9).floor() as usize + 1;
                Ok((0..n)
                    .map(|i| {
                        let t = i as f64 * interval_s;
                        TrajectoryPoint { timestamp_s: t, altitude_m: (rate_m_s * t).min(h_max_m) }
                    })
                    .collect())
            }
        }
    }
}

fn default_noise_averages() -> usize {
    DEFAULT_NOISE_AVERAGES
}

fn default_background() -> f64 {
    -120.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub sweep: SweepConfig,
    pub bands: Vec<ScenarioBand>,
    pub trajectory: Trajectory,
    pub seed: u64,
    /// Standard deviation (dB) of the per-snapshot emitter level jitter.
    #[serde(default)]
    pub jitter_db: f64,
    /// Periodograms averaged into each noise bin (1 = raw exponential power).
    #[serde(default = "default_noise_averages")]
    pub noise_averages: usize,
    /// Mean noise power (dB) of grid bins outside every band.
    #[serde(default = "default_background")]
    pub background_noise_db: f64,
    #[serde(default)]
    pub gain_offset_db: f64,
}

impl ScenarioSpec {
    pub fn band_specs(&self) -> Vec<BandSpec> {
        self.bands
            .iter()
            .map(|b| BandSpec { name: b.name.clone(), f_low_hz: b.f_low_hz, f_high_hz: b.f_high_hz })
            .collect()
    }
}

/// Planted values for one band, as written to the ground-truth sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBand {
    pub n_bins: usize,
    pub noise_floor_db: f64,
    pub params: BTreeMap<MetricKind, CurveModel>,
    /// Median of the emitters' activation midpoints, weighted by bin count.
    pub activation_median_h50_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub noise_averages: usize,
    pub jitter_db: f64,
    pub gain_offset_db: f64,
    pub bands: BTreeMap<String, PlantedBand>,
}

#[derive(Debug, Clone)]
pub struct SweepDataset {
    pub grid: FrequencyGrid,
    pub bands: Vec<BandDefinition>,
    pub records: Vec<SweepRecord>,
    pub truth: GroundTruth,
}

/// Weighted median: the smallest value whose cumulative weight reaches half
/// the total, averaged with the next value on an exact tie.
pub fn weighted_median(items: &[(f64, f64)]) -> Option<f64> {
    let mut v: Vec<(f64, f64)> = items.iter().copied().filter(|&(_, w)| w > 0.0).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = v.iter().map(|&(_, w)| w).sum::<f64>() / 2.0;
    let mut acc = 0.0;
    for (i, &(x, w)) in v.iter().enumerate() {
        acc += w;
        if acc == half && i + 1 < v.len() {
            return Some(0.5 * (x + v[i + 1].0));
        }
        if acc >= half {
            return Some(x);
        }
    }
    v.last().map(|&(x, _)| x)
}

fn validate(spec: &ScenarioSpec, bands: &[BandDefinition]) -> Result<()> {
    if spec.noise_averages == 0 {
        return Err(Error::config("noise_averages", "must be positive"));
    }
    if !(spec.jitter_db >= 0.0 && spec.jitter_db.is_finite()) {
        return Err(Error::config("jitter_db", "must be non-negative"));
    }
    for (sb, band) in spec.bands.iter().zip(bands) {
        sb.power.validate()?;
        for (i, e) in sb.emitters.iter().enumerate() {
            if e.n_bins == 0 || e.first_bin + e.n_bins > band.len() {
                return Err(Error::Input(format!(
                    "band '{}' emitter {i}: bins {}..{} fall outside the band's {} bins",
                    sb.name,
                    e.first_bin,
                    e.first_bin + e.n_bins,
                    band.len()
                )));
            }
            if e.activation_h50_m.is_some() != e.activation_k.is_some() {
                return Err(Error::Input(format!(
                    "band '{}' emitter {i}: activation_h50_m and activation_k go together",
                    sb.name
                )));
            }
            if let Some(k) = e.activation_k {
                if !(k > 0.0 && k.is_finite()) {
                    return Err(Error::Input(format!(
                        "band '{}' emitter {i}: activation_k must be positive",
                        sb.name
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Sweep-level oracle. Every trajectory point yields one full sweep, built
/// capture by capture through [`SweepAssembler`].
pub fn gen_sweep_dataset(spec: &ScenarioSpec) -> Result<SweepDataset> {
    let grid = build_frequency_grid(&spec.sweep)?;
    let bands = spec
        .bands
        .iter()
        .map(|b| resolve_band(&grid, &b.name, b.f_low_hz, b.f_high_hz))
        .collect::<Result<Vec<_>>>()?;
    validate(spec, &bands)?;
    let points = spec.trajectory.points()?;
    if let Some(p) = points.iter().find(|p| !(p.altitude_m >= 0.0 && p.altitude_m.is_finite())) {
        return Err(Error::Input(format!("trajectory altitude {} is invalid", p.altitude_m)));
    }

    let m = spec.noise_averages as f64;
    let mut noise_mean = vec![db_to_linear(spec.background_noise_db); grid.len()];
    for (sb, band) in spec.bands.iter().zip(&bands) {
        noise_mean[band.bins.clone()].fill(db_to_linear(sb.noise_floor_db));
    }
    let unit_gamma = Gamma::new(m, 1.0 / m).map_err(|e| Error::config("noise_averages", e.to_string()))?;
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let calibration = db_to_linear(-spec.gain_offset_db);

    let cfg = &spec.sweep;
    let centers = cfg.capture_centers();
    let retained = cfg.retained_range();
    let edge_fill = db_to_linear(spec.background_noise_db);

    let mut records = Vec::with_capacity(points.len());
    let mut level = vec![0.0f64; grid.len()];
    for p in &points {
        let h = p.altitude_m;
        level.iter_mut().for_each(|v| *v = 0.0);
        for (sb, band) in spec.bands.iter().zip(&bands) {
            let excess = (sb.power.x_inf - sb.power.x_zero) * (-h / sb.power.tau).exp();
            for e in &sb.emitters {
                let u: f64 = rng.random();
                let active = e.activation().is_none_or(|a| u < logistic_eval(&a, h));
                let j: f64 = jitter.sample(&mut rng);
                if !active {
                    continue;
                }
                let lin = db_to_linear(e.peak_power_db - excess + spec.jitter_db * j);
                let start = band.bins.start + e.first_bin;
                for v in &mut level[start..start + e.n_bins] {
                    *v += lin;
                }
            }
        }
        for (v, mu) in level.iter_mut().zip(&noise_mean) {
            if *v == 0.0 {
                let g: f64 = unit_gamma.sample(&mut rng);
                *v = mu * g;
            }
            *v *= calibration;
        }

        let mut asm = SweepAssembler::new(cfg, &grid, p.timestamp_s, h, spec.gain_offset_db);
        let mut capture = vec![edge_fill; cfg.fft_size];
        for (i, &c) in centers.iter().enumerate() {
            let src = &level[i * cfg.retained_bins()..(i + 1) * cfg.retained_bins()];
            capture[retained.clone()].copy_from_slice(src);
            asm.place(&capture, c)?;
        }
        records.push(asm.finish()?);
    }

    let mut truth_bands = BTreeMap::new();
    for (sb, band) in spec.bands.iter().zip(&bands) {
        let mut params = BTreeMap::new();
        params.insert(MetricKind::Power, CurveModel::Exp(sb.power));
        if let Some(e) = sb.entropy {
            params.insert(MetricKind::EntropyNorm, CurveModel::Exp(e));
        }
        if let Some(s) = sb.sparsity {
            params.insert(MetricKind::Sparsity, CurveModel::Logistic(s));
        }
        let weighted: Vec<(f64, f64)> = sb
            .emitters
            .iter()
            .filter_map(|e| e.activation_h50_m.map(|h| (h, e.n_bins as f64)))
            .collect();
        truth_bands.insert(
            sb.name.clone(),
            PlantedBand {
                n_bins: band.len(),
                noise_floor_db: sb.noise_floor_db,
                params,
                activation_median_h50_m: weighted_median(&weighted),
            },
        );
    }

    Ok(SweepDataset {
        grid,
        bands,
        records,
        truth: GroundTruth {
            seed: spec.seed,
            noise_averages: spec.noise_averages,
            jitter_db: spec.jitter_db,
            gain_offset_db: spec.gain_offset_db,
            bands: truth_bands,
        },
    })
}
