//! Per-snapshot band metrics: band-average power, spectral entropy and
//! threshold sparsity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::linear_to_db;

/// Regularizer added to the band total before normalizing the power
/// distribution. Absolute, in linear power units.
pub const ENTROPY_EPS: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    /// One threshold per band, fixed over the whole campaign.
    #[default]
    PerBandPerCampaign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub percentile: f64,
    pub margin_db: f64,
    #[serde(default)]
    pub scope: ThresholdScope,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec { percentile: 5.0, margin_db: 3.0, scope: ThresholdScope::PerBandPerCampaign }
    }
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::config(
                "percentile",
                format!("must be in (0, 100), got {}", self.percentile),
            ));
        }
        if !(self.margin_db >= 0.0 && self.margin_db.is_finite()) {
            return Err(Error::config(
                "margin_db",
                format!("must be non-negative, got {}", self.margin_db),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub altitude: f64,
    pub power_db: f64,
    pub entropy_bits: f64,
    pub entropy_norm: f64,
    pub sparsity: f64,
}

impl MetricSample {
    /// False for the all-zero band sentinel (`power_db == -inf`); such rows
    /// are reported but never binned.
    pub fn is_valid(&self) -> bool {
        self.power_db.is_finite()
    }
}

fn check_band(band_psd: &[f64]) -> Result<()> {
    if band_psd.is_empty() {
        return Err(Error::Input("band PSD is empty".into()));
    }
    if let Some(i) = band_psd.iter().position(|&p| !(p >= 0.0)) {
        return Err(Error::Input(format!("band PSD value {i} is negative or NaN")));
    }
    Ok(())
}

/// `10·log10` of the arithmetic mean of the linear in-band powers. An all-zero
/// band yields `-inf`.
pub fn band_average_power(band_psd: &[f64]) -> Result<f64> {
    check_band(band_psd)?;
    let mean = band_psd.iter().sum::<f64>() / band_psd.len() as f64;
    Ok(linear_to_db(mean))
}

/// Shannon entropy (bits) of the normalized in-band power distribution and
/// its value divided by `log2(len)`.
pub fn spectral_entropy(band_psd: &[f64], eps: f64) -> Result<(f64, f64)> {
    check_band(band_psd)?;
    let n = band_psd.len();
    if n == 1 {
        return Ok((0.0, 0.0));
    }
    let total = band_psd.iter().sum::<f64>() + eps;
    let bits = -band_psd
        .iter()
        .map(|&p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>();
    // a -0.0 from an all-zero or one-hot band reads better as 0
    let bits = bits.max(0.0);
    Ok((bits, bits / (n as f64).log2()))
}

/// Percentile (linear interpolation between order statistics at fractional
/// rank `p/100·(n-1)`) of the dB-converted pool.
pub fn noise_floor(pool_linear: &[f64], spec: &ThresholdSpec) -> Result<f64> {
    spec.validate()?;
    if pool_linear.is_empty() {
        return Err(Error::Input("noise-floor pool is empty".into()));
    }
    let mut db: Vec<f64> = pool_linear.iter().map(|&p| linear_to_db(p)).collect();
    if db.iter().any(|v| v.is_nan()) {
        return Err(Error::Input("noise-floor pool contains negative or NaN power".into()));
    }
    percentile_in_place(&mut db, spec.percentile)
        .ok_or_else(|| Error::Input("noise-floor pool is empty".into()))
}

/// Linear-interpolation percentile; reorders `values`.
pub(crate) fn percentile_in_place(values: &mut [f64], percentile: f64) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let rank = percentile / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let (_, lo_val, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_val = *lo_val;
    if frac == 0.0 || upper.is_empty() {
        return Some(lo_val);
    }
    let hi_val = upper.iter().copied().min_by(f64::total_cmp).unwrap_or(lo_val);
    if lo_val == f64::NEG_INFINITY {
        return Some(lo_val);
    }
    Some(lo_val + frac * (hi_val - lo_val))
}

/// Fraction of bins whose dB power strictly exceeds `gamma_db`.
pub fn sparsity(band_psd: &[f64], gamma_db: f64) -> Result<f64> {
    if band_psd.is_empty() {
        return Err(Error::Input("band PSD is empty".into()));
    }
    let above = band_psd.iter().filter(|&&p| linear_to_db(p) > gamma_db).count();
    Ok(above as f64 / band_psd.len() as f64)
}

/// Detection threshold: noise floor plus margin.
pub fn detection_threshold(pool_linear: &[f64], spec: &ThresholdSpec) -> Result<f64> {
    Ok(noise_floor(pool_linear, spec)? + spec.margin_db)
}

/// All three metrics for one band snapshot.
pub fn evaluate(band_psd: &[f64], altitude: f64, gamma_db: f64) -> Result<MetricSample> {
    let power_db = band_average_power(band_psd)?;
    let (entropy_bits, entropy_norm) = spectral_entropy(band_psd, ENTROPY_EPS)?;
    Ok(MetricSample {
        altitude,
        power_db,
        entropy_bits,
        entropy_norm,
        sparsity: sparsity(band_psd, gamma_db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn power_examples() {
        assert_eq!(band_average_power(&[1.0; 4]).unwrap(), 0.0);
        assert!(close(band_average_power(&[1e-3; 4]).unwrap(), -30.0, 1e-12));
        assert!(close(band_average_power(&[2.0, 0.0, 0.0, 0.0]).unwrap(), -3.010299956639812, 1e-12));
        assert_eq!(band_average_power(&[0.0; 3]).unwrap(), f64::NEG_INFINITY);
        assert!(band_average_power(&[]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(spectral_entropy(&[1.0, 0.0, 0.0, 0.0], ENTROPY_EPS).unwrap(), (0.0, 0.0));
        let (bits, norm) = spectral_entropy(&[1.0; 512], ENTROPY_EPS).unwrap();
        assert!(close(bits, 9.0, 1e-9));
        assert!(close(norm, 1.0, 1e-9));
        let (bits, norm) = spectral_entropy(&[0.5, 0.25, 0.125, 0.125], ENTROPY_EPS).unwrap();
        assert_eq!(bits, 1.75);
        assert_eq!(norm, 0.875);
        assert_eq!(spectral_entropy(&[3.0], ENTROPY_EPS).unwrap(), (0.0, 0.0));
        assert_eq!(spectral_entropy(&[0.0; 8], ENTROPY_EPS).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn noise_floor_examples() {
        let spec = ThresholdSpec::default();
        assert!(close(noise_floor(&[0.01; 17], &spec).unwrap(), -20.0, 1e-12));

        let pool: Vec<f64> = (0..10).map(|i| 10f64.powi(i)).collect();
        assert!(close(noise_floor(&pool, &spec).unwrap(), 4.5, 1e-9));

        let median = ThresholdSpec { percentile: 50.0, ..spec };
        assert!(close(noise_floor(&[10.0, 1000.0], &median).unwrap(), 20.0, 1e-12));

        assert!(matches!(noise_floor(&[], &spec), Err(Error::Input(_))));
        let bad = ThresholdSpec { percentile: 100.0, ..spec };
        assert!(noise_floor(&[1.0], &bad).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let gamma = 0.0;
        assert_eq!(sparsity(&[0.1; 8], gamma).unwrap(), 0.0);
        assert_eq!(sparsity(&[10.0; 8], gamma).unwrap(), 1.0);
        let mixed = [10.0, 0.1, 0.1, 10.0, 0.1, 0.1, 0.1, 0.1];
        assert_eq!(sparsity(&mixed, gamma).unwrap(), 0.25);
        // strict comparison
        assert_eq!(sparsity(&[1.0], 0.0).unwrap(), 0.0);
    }

    fn band() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(1e-12f64..1e2, 2..64)
    }

    proptest! {
        #[test]
        fn scaling_shifts_power_keeps_entropy(values in band(), c in 1e-6f64..1e6) {
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let p0 = band_average_power(&values).unwrap();
            let p1 = band_average_power(&scaled).unwrap();
            prop_assert!(close(p1 - p0, 10.0 * c.log10(), 1e-9));
            let (h0, _) = spectral_entropy(&values, 0.0).unwrap();
            let (h1, _) = spectral_entropy(&scaled, 0.0).unwrap();
            prop_assert!(close(h0, h1, 1e-9));
        }

        #[test]
        fn metrics_ignore_bin_order(values in band(), seed in any::<u64>(), gamma in -40.0f64..20.0) {
            let mut shuffled = values.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut s = seed | 1;
            for i in (1..shuffled.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let a = evaluate(&values, 0.0, gamma).unwrap();
            let b = evaluate(&shuffled, 0.0, gamma).unwrap();
            prop_assert!(close(a.power_db, b.power_db, 1e-9));
            prop_assert!(close(a.entropy_bits, b.entropy_bits, 1e-9));
            prop_assert_eq!(a.sparsity, b.sparsity);
        }

        #[test]
        fn entropy_bounded_by_log2_len(values in band()) {
            let (bits, norm) = spectral_entropy(&values, ENTROPY_EPS).unwrap();
            prop_assert!(bits <= (values.len() as f64).log2() + 1e-9);
            prop_assert!((0.0..=1.0 + 1e-9).contains(&norm));
        }

        #[test]
        fn uniform_band_reaches_the_bound(n in 2usize..2048, level in 1e-9f64..1e3) {
            let (bits, norm) = spectral_entropy(&vec![level; n], ENTROPY_EPS).unwrap();
            prop_assert!(close(bits, (n as f64).log2(), 1e-9));
            prop_assert!(close(norm, 1.0, 1e-9));
        }

        #[test]
        fn sparsity_non_increasing_in_threshold(values in band(), g in -60.0f64..30.0, d in 0.0f64..20.0) {
            prop_assert!(sparsity(&values, g + d).unwrap() <= sparsity(&values, g).unwrap());
        }
    }
}
