//! Uniform altitude binning of metric samples.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA_H: f64 = 10.0;
pub const DEFAULT_MIN_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Power,
    EntropyNorm,
    Sparsity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Power, MetricKind::EntropyNorm, MetricKind::Sparsity];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Power => "power",
            MetricKind::EntropyNorm => "entropy_norm",
            MetricKind::Sparsity => "sparsity",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown metric '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltitudeBin {
    pub center_altitude: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedMetricSeries {
    pub band: String,
    pub metric: MetricKind,
    pub delta_h: f64,
    pub bins: Vec<AltitudeBin>,
}

impl BinnedMetricSeries {
    pub fn centers(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.center_altitude).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.mean).collect()
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Groups `(altitude, value)` pairs into `[k·Δh, (k+1)·Δh)` bins and returns
/// per-bin mean and population standard deviation. Non-finite values are
/// skipped; bins with fewer than `min_count` samples are dropped.
pub fn bin_by_altitude(
    band: &str,
    metric: MetricKind,
    samples: &[(f64, f64)],
    delta_h: f64,
    min_count: usize,
) -> Result<BinnedMetricSeries> {
    if !(delta_h > 0.0 && delta_h.is_finite()) {
        return Err(Error::config("delta_h", format!("must be positive, got {delta_h}")));
    }
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for &(h, v) in samples {
        if !v.is_finite() {
            continue;
        }
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::Input(format!("altitude {h} is negative or non-finite")));
        }
        groups.entry((h / delta_h).floor() as u64).or_default().push(v);
    }

    let bins: Vec<AltitudeBin> = groups
        .into_iter()
        .filter(|(_, vals)| vals.len() >= min_count.max(1))
        .map(|(k, mut vals)| {
            // fixed summation order makes the result independent of input order
            vals.sort_by(f64::total_cmp);
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            AltitudeBin {
                center_altitude: (k as f64 + 0.5) * delta_h,
                mean,
                std: var.sqrt(),
                count: vals.len(),
            }
        })
        .collect();

    if bins.is_empty() {
        return Err(Error::EmptySeries { min_count });
    }
    Ok(BinnedMetricSeries { band: band.to_string(), metric, delta_h, bins })
}
