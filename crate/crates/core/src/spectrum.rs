//! Global frequency grid, band registry and the sweep data model.
//!
//! A sweep visits center frequencies `f_start, f_start + step, ...`. Each
//! capture yields `fft_size` DC-centered bins of which `edge_trim` are dropped
//! at each edge; the retained bins of consecutive captures must abut so that
//! the assembled grid is uniform.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing frequencies derived by different
/// arithmetic routes.
pub const FREQ_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub f_start: f64,
    pub f_stop: f64,
    pub step: f64,
    pub sample_rate: f64,
    pub fft_size: usize,
    pub edge_trim: usize,
    pub samples_per_capture: usize,
}

impl Default for SweepConfig {
    /// 87 MHz to 6 GHz in 25.68 MHz steps, 30.72 MHz sampling, 512-point FFT,
    /// 500k samples per capture, 42 bins trimmed per side (428 retained bins
    /// of 60 kHz = 25.68 MHz, so captures abut exactly).
    fn default() -> Self {
        SweepConfig {
            f_start: 87.0e6,
            f_stop: 6.0e9,
            step: 25.68e6,
            sample_rate: 30.72e6,
            fft_size: 512,
            edge_trim: 42,
            samples_per_capture: 500_000,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_start.is_finite() && self.f_stop.is_finite()) {
            return Err(Error::config("f_start/f_stop", "must be finite"));
        }
        if self.f_start >= self.f_stop {
            return Err(Error::config(
                "f_start",
                format!("f_start ({}) must be below f_stop ({})", self.f_start, self.f_stop),
            ));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::config("step", format!("must be positive, got {}", self.step)));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::config(
                "sample_rate",
                format!("must be positive, got {}", self.sample_rate),
            ));
        }
        if self.fft_size == 0 || self.fft_size <= 2 * self.edge_trim {
            return Err(Error::config(
                "edge_trim",
                format!(
                    "fft_size ({}) must exceed twice edge_trim ({})",
                    self.fft_size, self.edge_trim
                ),
            ));
        }
        if self.samples_per_capture == 0 {
            return Err(Error::config("samples_per_capture", "must be positive"));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        self.sample_rate / self.fft_size as f64
    }

    /// Bins kept per capture after edge trimming.
    pub fn retained_bins(&self) -> usize {
        self.fft_size - 2 * self.edge_trim
    }

    pub fn retained_span(&self) -> f64 {
        self.bin_width() * self.retained_bins() as f64
    }

    /// Offset of DC-centered FFT bin `j` from the capture center frequency.
    fn bin_offset(&self, j: usize) -> f64 {
        (j as f64 - (self.fft_size / 2) as f64) * self.bin_width()
    }

    /// Number of captures needed for the retained bins to reach `f_stop`.
    pub fn capture_count(&self) -> usize {
        let bw = self.bin_width();
        // upper edge of the last retained bin, relative to the capture center
        let upper = self.bin_offset(self.fft_size - self.edge_trim - 1) + 0.5 * bw;
        let needed = (self.f_stop - self.f_start - upper) / self.step;
        if needed <= 0.0 {
            1
        } else {
            // tolerate rounding in the division before taking the ceiling
            (needed - FREQ_REL_TOL).ceil() as usize + 1
        }
    }

    pub fn capture_centers(&self) -> Vec<f64> {
        (0..self.capture_count())
            .map(|i| self.f_start + i as f64 * self.step)
            .collect()
    }

    /// Index of the capture whose center is `center_freq`, if it lies on the schedule.
    pub fn capture_index(&self, center_freq: f64) -> Option<usize> {
        let pos = (center_freq - self.f_start) / self.step;
        let idx = pos.round();
        if !pos.is_finite() || idx < 0.0 || (pos - idx).abs() > FREQ_REL_TOL {
            return None;
        }
        let idx = idx as usize;
        (idx < self.capture_count()).then_some(idx)
    }

    /// Range of DC-centered FFT bins kept from each capture.
    pub fn retained_range(&self) -> Range<usize> {
        self.edge_trim..self.fft_size - self.edge_trim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    bin_freqs: Vec<f64>,
    bin_width: f64,
}

impl FrequencyGrid {
    /// Builds a grid from explicit bin centers, checking ordering and spacing.
    pub fn new(bin_freqs: Vec<f64>, bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::config("bin_width", format!("must be positive, got {bin_width}")));
        }
        if bin_freqs.is_empty() {
            return Err(Error::Structural("frequency grid has no bins".into()));
        }
        for (i, w) in bin_freqs.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if gap <= 0.0 {
                return Err(Error::Structural(format!(
                    "grid not strictly increasing at bin {}",
                    i + 1
                )));
            }
            if ((gap - bin_width) / bin_width).abs() > FREQ_REL_TOL {
                return Err(Error::Structural(format!(
                    "grid spacing {gap} Hz at bin {} differs from bin width {bin_width} Hz",
                    i + 1
                )));
            }
        }
        Ok(FrequencyGrid { bin_freqs, bin_width })
    }

    pub fn uniform(first_bin_hz: f64, bin_width: f64, n_bins: usize) -> Result<Self> {
        let freqs = (0..n_bins).map(|i| first_bin_hz + i as f64 * bin_width).collect();
        Self::new(freqs, bin_width)
    }

    pub fn bin_freqs(&self) -> &[f64] {
        &self.bin_freqs
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn len(&self) -> usize {
        self.bin_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bin_freqs.is_empty()
    }

    pub fn first_bin(&self) -> f64 {
        self.bin_freqs[0]
    }

    pub fn last_bin(&self) -> f64 {
        self.bin_freqs[self.bin_freqs.len() - 1]
    }
}

/// Assembles the global grid from the sweep schedule.
pub fn build_frequency_grid(cfg: &SweepConfig) -> Result<FrequencyGrid> {
    cfg.validate()?;
    let bw = cfg.bin_width();
    let span = cfg.retained_span();
    let mismatch = (cfg.step - span) / bw;
    if mismatch.abs() > FREQ_REL_TOL {
        let kind = if mismatch < 0.0 { "overlap" } else { "gap" };
        return Err(Error::config(
            "step",
            format!(
                "step {} Hz leaves a {kind} of {:.3} bins against the retained span {} Hz \
                 ({} bins of {} Hz)",
                cfg.step,
                mismatch.abs(),
                span,
                cfg.retained_bins(),
                bw
            ),
        ));
    }

    let retained = cfg.retained_range();
    let mut freqs = Vec::with_capacity(cfg.capture_count() * cfg.retained_bins());
    for center in cfg.capture_centers() {
        freqs.extend(retained.clone().map(|j| center + cfg.bin_offset(j)));
    }
    FrequencyGrid::new(freqs, bw)
}

/// Registry entry as stored in the band registry file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub f_low_hz: f64,
    pub f_high_hz: f64,
}

/// The default six-band registry (FM, n71, LTE B13, ISM, CBRS, C-band).
pub fn default_band_registry() -> Vec<BandSpec> {
    serde_json::from_str(include_str!("../data/bands.json")).expect("bundled registry is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDefinition {
    pub name: String,
    pub f_low: f64,
    pub f_high: f64,
    /// Contiguous grid indices whose centers lie in `[f_low, f_high]`.
    pub bins: Range<usize>,
    /// Length of the grid the band was resolved against.
    pub grid_len: usize,
}

impl BandDefinition {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

pub fn resolve_band(
    grid: &FrequencyGrid,
    name: &str,
    f_low: f64,
    f_high: f64,
) -> Result<BandDefinition> {
    if !(f_low < f_high) {
        return Err(Error::config(
            "f_low",
            format!("band '{name}': f_low ({f_low}) must be below f_high ({f_high})"),
        ));
    }
    let freqs = grid.bin_freqs();
    let start = freqs.partition_point(|&f| f < f_low);
    let end = freqs.partition_point(|&f| f <= f_high);
    if start >= end {
        return Err(Error::BandOutOfRange { name: name.to_string(), f_low, f_high });
    }
    Ok(BandDefinition {
        name: name.to_string(),
        f_low,
        f_high,
        bins: start..end,
        grid_len: grid.len(),
    })
}

pub fn resolve_spec(grid: &FrequencyGrid, spec: &BandSpec) -> Result<BandDefinition> {
    resolve_band(grid, &spec.name, spec.f_low_hz, spec.f_high_hz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub timestamp: f64,
    pub altitude: f64,
    /// Linear-scale power per grid bin, before the calibration offset.
    pub psd: Vec<f64>,
    pub gain_offset_db: f64,
}

impl SweepRecord {
    /// A record with every bin zeroed, ready for capture placement.
    pub fn empty(timestamp: f64, altitude: f64, n_bins: usize, gain_offset_db: f64) -> Self {
        SweepRecord { timestamp, altitude, psd: vec![0.0; n_bins], gain_offset_db }
    }

    pub fn validate(&self, grid: &FrequencyGrid) -> Result<()> {
        if self.psd.len() != grid.len() {
            return Err(Error::Structural(format!(
                "record has {} bins, grid has {}",
                self.psd.len(),
                grid.len()
            )));
        }
        if !self.altitude.is_finite() {
            return Err(Error::Input(format!("non-finite altitude at t={}", self.timestamp)));
        }
        if let Some(i) = self.psd.iter().position(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::Input(format!(
                "psd bin {i} at t={} is negative or non-finite ({})",
                self.timestamp, self.psd[i]
            )));
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// In-band PSD values with the record's calibration offset applied.
pub fn extract_band_psd(rec: &SweepRecord, band: &BandDefinition) -> Result<Vec<f64>> {
    if rec.psd.len() != band.grid_len {
        return Err(Error::Structural(format!(
            "band '{}' was resolved on a {}-bin grid but the record has {} bins",
            band.name,
            band.grid_len,
            rec.psd.len()
        )));
    }
    let slice = &rec.psd[band.bins.clone()];
    if rec.gain_offset_db == 0.0 {
        return Ok(slice.to_vec());
    }
    let gain = db_to_linear(rec.gain_offset_db);
    Ok(slice.iter().map(|&p| p * gain).collect())
}
