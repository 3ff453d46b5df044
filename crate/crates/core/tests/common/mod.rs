#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use adssm::model::{ExpModelParams, LogisticModelParams};
use adssm::spectrum::{build_frequency_grid, resolve_band, SweepConfig};
use adssm::synth::{Emitter, ScenarioBand, ScenarioSpec, Trajectory, TrajectoryPoint, DEFAULT_NOISE_AVERAGES};

pub const LTE13: (&str, f64, f64) = ("LTE Band 13 DL", 746.0e6, 756.0e6);

/// Three captures around 740-804 MHz: 1284 grid bins.
pub fn desk_sweep() -> SweepConfig {
    SweepConfig { f_start: 740.0e6, f_stop: 800.0e6, ..SweepConfig::default() }
}

pub fn lte13_bins() -> usize {
    let grid = build_frequency_grid(&desk_sweep()).unwrap();
    resolve_band(&grid, LTE13.0, LTE13.1, LTE13.2).unwrap().len()
}

pub fn band(power: ExpModelParams, emitters: Vec<Emitter>) -> ScenarioBand {
    ScenarioBand {
        name: LTE13.0.into(),
        f_low_hz: LTE13.1,
        f_high_hz: LTE13.2,
        noise_floor_db: -100.0,
        power,
        entropy: None,
        sparsity: None,
        emitters,
    }
}

/// `per_bin` snapshots at each bin center `(k + 0.5)·delta_h`, `k < n_bins`.
pub fn centered_points(n_bins: usize, delta_h: f64, per_bin: usize) -> Trajectory {
    let points = (0..n_bins * per_bin)
        .map(|i| TrajectoryPoint {
            timestamp_s: i as f64,
            altitude_m: ((i / per_bin) as f64 + 0.5) * delta_h,
        })
        .collect();
    Trajectory::Points { points }
}

pub fn scenario(bands: Vec<ScenarioBand>, trajectory: Trajectory, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        sweep: desk_sweep(),
        bands,
        trajectory,
        seed,
        jitter_db: 0.0,
        noise_averages: DEFAULT_NOISE_AVERAGES,
        background_noise_db: -120.0,
        gain_offset_db: 0.0,
    }
}

/// One always-on emitter filling the band at the planted asymptote.
pub fn single_emitter(power: ExpModelParams) -> ScenarioSpec {
    let e = Emitter {
        first_bin: 0,
        n_bins: lte13_bins(),
        peak_power_db: power.x_inf,
        activation_h50_m: None,
        activation_k: None,
    };
    scenario(vec![band(power, vec![e])], centered_points(15, 10.0, 10), 1)
}

/// Five equal-width emitters with activation midpoints 30..70 m.
pub fn staggered(seed: u64) -> ScenarioSpec {
    let n = lte13_bins();
    let width = n / 5;
    let emitters = (0..5)
        .map(|i| Emitter {
            first_bin: i * width,
            n_bins: width,
            peak_power_db: -40.0,
            activation_h50_m: Some(30.0 + 10.0 * i as f64),
            activation_k: Some(0.2),
        })
        .collect();
    let power = ExpModelParams { x_inf: -40.0, x_zero: -60.0, tau: 25.0 };
    let mut b = band(power, emitters);
    b.sparsity = Some(LogisticModelParams { k: 0.2, h_s: 50.0 });
    let trajectory = Trajectory::Ascent { h_max_m: 149.0, rate_m_s: 1.0, dwell_s: 0.0, interval_s: 1.0 };
    scenario(vec![b], trajectory, seed)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Relative paths of every file under `root`, sorted.
pub fn tree(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
