//! Welch PSD estimation and placement of per-capture spectra on the global grid.

use std::f64::consts::PI;
use std::fs;
use std::ops::Range;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{FrequencyGrid, SweepConfig, SweepRecord, FREQ_REL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Power per Hz.
    Density,
    /// Power per bin.
    Spectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub fft_size: usize,
    pub overlap_fraction: f64,
    pub window: Window,
    pub scaling: Scaling,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig {
            fft_size: 512,
            overlap_fraction: 0.5,
            window: Window::Hann,
            scaling: Scaling::Density,
        }
    }
}

impl WelchConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() {
            return Err(Error::config(
                "fft_size",
                format!("must be a power of two, got {}", self.fft_size),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::config(
                "overlap_fraction",
                format!("must be in [0, 1), got {}", self.overlap_fraction),
            ));
        }
        Ok(())
    }

    /// Hop between consecutive segments, in samples.
    pub fn hop(&self) -> usize {
        let overlap = (self.overlap_fraction * self.fft_size as f64).floor() as usize;
        (self.fft_size - overlap).max(1)
    }

    pub fn segment_count(&self, n_samples: usize) -> usize {
        if n_samples < self.fft_size {
            0
        } else {
            (n_samples - self.fft_size) / self.hop() + 1
        }
    }

    fn window_coefficients(&self) -> Vec<f64> {
        let n = self.fft_size;
        match self.window {
            Window::Rectangular => vec![1.0; n],
            // periodic Hann, as used for spectral analysis
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// Averaged modified periodogram of complex baseband samples.
///
/// The output has `fft_size` bins ordered by ascending frequency, from
/// `-fs/2` up to `fs/2 - fs/fft_size`, with DC at index `fft_size / 2`.
pub fn welch_psd(iq: &[Complex64], fs: f64, cfg: &WelchConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::config("sample_rate", format!("must be positive, got {fs}")));
    }
    let n = cfg.fft_size;
    if iq.len() < n {
        return Err(Error::Input(format!(
            "{} samples is fewer than one {n}-point segment",
            iq.len()
        )));
    }
    if let Some(i) = iq.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Input(format!("sample {i} is not finite")));
    }

    let window = cfg.window_coefficients();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let hop = cfg.hop();
    let segments = cfg.segment_count(iq.len());

    let mut acc = vec![0.0f64; n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for s in 0..segments {
        let seg = &iq[s * hop..s * hop + n];
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = x * w;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }

    let norm = match cfg.scaling {
        Scaling::Density => fs * window.iter().map(|w| w * w).sum::<f64>(),
        Scaling::Spectrum => window.iter().sum::<f64>().powi(2),
    } * segments as f64;

    // fftshift: bin n/2 of the raw output is -fs/2
    let half = n / 2;
    Ok((0..n).map(|k| acc[(k + half) % n] / norm).collect())
}

/// Writes the retained middle bins of one capture into `rec` and returns the
/// grid positions that were written.
pub fn trim_and_place(
    psd: &[f64],
    center_freq: f64,
    cfg: &SweepConfig,
    grid: &FrequencyGrid,
    rec: &mut SweepRecord,
) -> Result<Range<usize>> {
    if psd.len() != cfg.fft_size {
        return Err(Error::Input(format!(
            "capture PSD has {} bins, expected {}",
            psd.len(),
            cfg.fft_size
        )));
    }
    if rec.psd.len() != grid.len() {
        return Err(Error::Structural(format!(
            "record has {} bins, grid has {}",
            rec.psd.len(),
            grid.len()
        )));
    }
    let capture = cfg.capture_index(center_freq).ok_or_else(|| {
        Error::Placement(format!("center frequency {center_freq} Hz is not on the sweep schedule"))
    })?;
    let retained = cfg.retained_bins();
    let dest = capture * retained..(capture + 1) * retained;
    if dest.end > grid.len() {
        return Err(Error::Placement(format!(
            "capture {capture} at {center_freq} Hz falls outside the {}-bin grid",
            grid.len()
        )));
    }
    let expected_first = center_freq + (cfg.edge_trim as f64 - (cfg.fft_size / 2) as f64) * cfg.bin_width();
    let actual_first = grid.bin_freqs()[dest.start];
    if (expected_first - actual_first).abs() > FREQ_REL_TOL * grid.bin_width() * retained as f64 {
        return Err(Error::Structural(format!(
            "grid bin {} is at {actual_first} Hz, capture expects {expected_first} Hz",
            dest.start
        )));
    }
    rec.psd[dest.clone()].copy_from_slice(&psd[cfg.retained_range()]);
    Ok(dest)
}

/// Accumulates captures into one [`SweepRecord`], rejecting double writes and
/// incomplete sweeps.
#[derive(Debug)]
pub struct SweepAssembler<'a> {
    cfg: &'a SweepConfig,
    grid: &'a FrequencyGrid,
    record: SweepRecord,
    written: Vec<bool>,
}

impl<'a> SweepAssembler<'a> {
    pub fn new(
        cfg: &'a SweepConfig,
        grid: &'a FrequencyGrid,
        timestamp: f64,
        altitude: f64,
        gain_offset_db: f64,
    ) -> Self {
        SweepAssembler {
            cfg,
            grid,
            record: SweepRecord::empty(timestamp, altitude, grid.len(), gain_offset_db),
            written: vec![false; grid.len()],
        }
    }

    pub fn place(&mut self, psd: &[f64], center_freq: f64) -> Result<()> {
        if let Some(idx) = self.cfg.capture_index(center_freq) {
            let r = self.cfg.retained_bins();
            let lo = (idx * r).min(self.written.len());
            let hi = ((idx + 1) * r).min(self.written.len());
            if self.written[lo..hi].iter().any(|&w| w) {
                return Err(Error::Placement(format!(
                    "capture at {center_freq} Hz was already placed"
                )));
            }
        }
        let range = trim_and_place(psd, center_freq, self.cfg, self.grid, &mut self.record)?;
        self.written[range].iter_mut().for_each(|w| *w = true);
        Ok(())
    }

    pub fn finish(self) -> Result<SweepRecord> {
        if let Some(i) = self.written.iter().position(|&w| !w) {
            return Err(Error::Placement(format!("grid bin {i} was never written")));
        }
        Ok(self.record)
    }
}

/// JSON sidecar of a raw capture file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub fs_hz: f64,
    pub center_freq_hz: f64,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Reads interleaved little-endian f32 I/Q pairs and the `<file>.json` sidecar.
pub fn read_raw_capture(path: &Path) -> Result<(Vec<Complex64>, CaptureMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Input(format!(
            "{}: length {} is not a whole number of I/Q pairs",
            path.display(),
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    let meta_path = sidecar_path(path);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = serde_json::from_str(&text).map_err(|e| Error::json(&meta_path, e))?;
    Ok((samples, meta))
}

pub fn write_raw_capture(path: &Path, iq: &[Complex64], meta: &CaptureMeta) -> Result<()> {
    let mut bytes = Vec::with_capacity(iq.len() * 8);
    for z in iq {
        bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta_path = sidecar_path(path);
    let text = serde_json::to_string_pretty(meta).map_err(|e| Error::json(&meta_path, e))?;
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::build_frequency_grid;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn tone(n: usize, cycles_per_sample: f64, amp: f64) -> Vec<Complex64> {
        (0..n)
            .map(|t| Complex64::from_polar(amp, 2.0 * PI * cycles_per_sample * t as f64))
            .collect()
    }

    fn small_sweep() -> SweepConfig {
        SweepConfig {
            f_start: 1000.0,
            f_stop: 1100.0,
            step: 24.0,
            sample_rate: 32.0,
            fft_size: 32,
            edge_trim: 4,
            samples_per_capture: 256,
        }
    }

    #[test]
    fn tone_peaks_at_its_bin() {
        let cfg = WelchConfig { fft_size: 64, window: Window::Rectangular, ..Default::default() };
        for k in [0usize, 5, 32, 40, 63] {
            let f = (k as f64 - 32.0) / 64.0;
            let psd = welch_psd(&tone(640, f, 1.0), 1.0, &cfg).unwrap();
            let argmax = psd
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, k);
        }
    }

    #[test]
    fn zeros_in_zeros_out() {
        let psd = welch_psd(&vec![Complex64::new(0.0, 0.0); 1024], 10.0, &WelchConfig::default())
            .unwrap();
        assert!(psd.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn white_noise_power_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sigma2 = 2.5;
        let s = (sigma2 / 2.0f64).sqrt();
        let cfg = WelchConfig::default();
        let n = cfg.fft_size + 99 * cfg.hop();
        let iq: Vec<Complex64> = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(s * re, s * im)
            })
            .collect();
        assert_eq!(cfg.segment_count(n), 100);
        let fs = 1.0e6;
        let psd = welch_psd(&iq, fs, &cfg).unwrap();
        let total = psd.iter().sum::<f64>() * fs / cfg.fft_size as f64;
        let time_domain = iq.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!(((total - time_domain) / time_domain).abs() < 0.05);
        assert!(((total - sigma2) / sigma2).abs() < 0.05);
    }

    #[test]
    fn input_errors() {
        let cfg = WelchConfig::default();
        assert!(matches!(
            welch_psd(&vec![Complex64::new(1.0, 0.0); 100], 1.0, &cfg),
            Err(Error::Input(_))
        ));
        let mut iq = vec![Complex64::new(1.0, 0.0); 600];
        iq[17].im = f64::NAN;
        assert!(matches!(welch_psd(&iq, 1.0, &cfg), Err(Error::Input(_))));
        let bad = WelchConfig { fft_size: 500, ..cfg };
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn default_capture_segment_count() {
        assert_eq!(WelchConfig::default().segment_count(500_000), 1952);
    }

    #[test]
    fn default_trim_places_428_bins() {
        let cfg = SweepConfig::default();
        let grid = build_frequency_grid(&cfg).unwrap();
        let mut rec = SweepRecord::empty(0.0, 0.0, grid.len(), 0.0);
        let psd: Vec<f64> = (0..512).map(|j| j as f64).collect();
        let center = cfg.f_start + 3.0 * cfg.step;
        let range = trim_and_place(&psd, center, &cfg, &grid, &mut rec).unwrap();
        assert_eq!(range, 3 * 428..4 * 428);
        assert_eq!(rec.psd[range.start], 42.0);
        assert_eq!(rec.psd[range.end - 1], 469.0);
        assert!(rec.psd[..range.start].iter().all(|&p| p == 0.0));
        assert!(rec.psd[range.end..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn untrimmed_capture_places_every_bin() {
        let cfg = SweepConfig {
            f_start: 0.0,
            f_stop: 2.0,
            step: 1.0,
            sample_rate: 1.0,
            fft_size: 4,
            edge_trim: 0,
            samples_per_capture: 16,
        };
        let grid = build_frequency_grid(&cfg).unwrap();
        let mut rec = SweepRecord::empty(0.0, 0.0, grid.len(), 0.0);
        let range = trim_and_place(&[1.0, 2.0, 3.0, 4.0], 1.0, &cfg, &grid, &mut rec).unwrap();
        assert_eq!(range, 4..8);
        assert_eq!(&rec.psd[4..8], &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn off_schedule_center_is_rejected() {
        let cfg = small_sweep();
        let grid = build_frequency_grid(&cfg).unwrap();
        let mut rec = SweepRecord::empty(0.0, 0.0, grid.len(), 0.0);
        let psd = vec![1.0; 32];
        assert!(matches!(
            trim_and_place(&psd, 1005.0, &cfg, &grid, &mut rec),
            Err(Error::Placement(_))
        ));
        assert!(matches!(
            trim_and_place(&psd, 1000.0 + 100.0 * 24.0, &cfg, &grid, &mut rec),
            Err(Error::Placement(_))
        ));
    }

    #[test]
    fn full_sweep_covers_grid_once() {
        let cfg = small_sweep();
        let grid = build_frequency_grid(&cfg).unwrap();
        let mut asm = SweepAssembler::new(&cfg, &grid, 0.0, 10.0, 0.0);
        for (i, c) in cfg.capture_centers().into_iter().enumerate() {
            asm.place(&vec![i as f64 + 1.0; 32], c).unwrap();
        }
        let rec = asm.finish().unwrap();
        assert!(rec.psd.iter().all(|&p| p > 0.0));

        let mut asm = SweepAssembler::new(&cfg, &grid, 0.0, 10.0, 0.0);
        asm.place(&vec![1.0; 32], cfg.f_start).unwrap();
        assert!(matches!(asm.place(&vec![1.0; 32], cfg.f_start), Err(Error::Placement(_))));
        assert!(matches!(asm.finish(), Err(Error::Placement(_))));
    }

    #[test]
    fn consecutive_captures_do_not_overlap() {
        let cfg = SweepConfig::default();
        let grid = build_frequency_grid(&cfg).unwrap();
        let mut rec = SweepRecord::empty(0.0, 0.0, grid.len(), 0.0);
        let a = trim_and_place(&vec![1.0; 512], cfg.f_start, &cfg, &grid, &mut rec).unwrap();
        let b = trim_and_place(&vec![1.0; 512], cfg.f_start + cfg.step, &cfg, &grid, &mut rec)
            .unwrap();
        assert_eq!(a.end, b.start);
    }

    #[test]
    fn raw_capture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cap.iq");
        let iq = tone(64, 0.125, 0.5);
        let meta = CaptureMeta { fs_hz: 30.72e6, center_freq_hz: 615.0e6 };
        write_raw_capture(&path, &iq, &meta).unwrap();
        let (back, meta_back) = read_raw_capture(&path).unwrap();
        assert_eq!(meta_back, meta);
        for (a, b) in back.iter().zip(&iq) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn phase_rotation_and_amplitude(seed in 0u64..1000, phi in 0.0f64..(2.0 * PI)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let iq: Vec<Complex64> = (0..256)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im)
                })
                .collect();
            let cfg = WelchConfig { fft_size: 64, ..Default::default() };
            let base = welch_psd(&iq, 1.0, &cfg).unwrap();
            let rot = Complex64::from_polar(1.0, phi);
            let rotated: Vec<Complex64> = iq.iter().map(|z| z * rot).collect();
            let doubled: Vec<Complex64> = iq.iter().map(|z| z * 2.0).collect();
            let r = welch_psd(&rotated, 1.0, &cfg).unwrap();
            let d = welch_psd(&doubled, 1.0, &cfg).unwrap();
            let scale = base.iter().cloned().fold(0.0, f64::max);
            for i in 0..base.len() {
                prop_assert!(base[i] >= 0.0);
                prop_assert!((r[i] - base[i]).abs() <= 1e-10 * scale);
                prop_assert!((d[i] - 4.0 * base[i]).abs() <= 1e-10 * 4.0 * scale);
            }
        }
    }
}
