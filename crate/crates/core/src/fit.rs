//! Least-squares estimation of the altitude models from binned series.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::binning::{BinnedMetricSeries, MetricKind};
use crate::error::{Error, Result};
use crate::model::{
    exp_eval, logistic_eval, transition_heights_exp, transition_heights_logistic, CurveModel,
    ExpModelParams, LogisticModelParams, TransitionHeights,
};
pub use crate::optim::{nelder_mead, FitOptions, Minimum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Exp,
    ExpReduced,
    Logistic,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Exp => "exp",
            ModelKind::ExpReduced => "exp_reduced",
            ModelKind::Logistic => "logistic",
        }
    }

    pub fn free_params(self) -> usize {
        match self {
            ModelKind::Exp => 3,
            ModelKind::ExpReduced | ModelKind::Logistic => 2,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// The fitted curve has no change to characterize.
    Degenerate,
    /// The series never crosses its midpoint; the logistic midpoint was
    /// initialized at the median altitude.
    NoMidpointCrossing,
    /// The series has zero variance, so R² is undefined.
    ZeroVariance,
    /// The optimizer stopped on the iteration cap.
    NotConverged,
}

/// One fitted (band, metric) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FitReportRecord", try_from = "FitReportRecord")]
pub struct FitReport {
    pub band: String,
    pub metric: MetricKind,
    pub model: ModelKind,
    pub params: CurveModel,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub transitions: Option<TransitionHeights>,
    pub n_bins: usize,
    pub options: FitOptions,
    pub flags: Vec<FitFlag>,
}

impl FitReport {
    pub fn eval(&self, h: f64) -> f64 {
        self.params.eval(h)
    }

    pub fn has_flag(&self, flag: FitFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// On-disk shape of a [`FitReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitReportRecord {
    band: String,
    metric: MetricKind,
    model: ModelKind,
    params: CurveModel,
    rmse: f64,
    r2: Option<f64>,
    h10_m: Option<f64>,
    h50_m: Option<f64>,
    h90_m: Option<f64>,
    q: [f64; 3],
    n_bins: usize,
    options: FitOptions,
    flags: Vec<FitFlag>,
}

impl From<FitReport> for FitReportRecord {
    fn from(r: FitReport) -> Self {
        let h = r.transitions.map(|t| t.h);
        FitReportRecord {
            band: r.band,
            metric: r.metric,
            model: r.model,
            params: r.params,
            rmse: r.rmse,
            r2: r.r2,
            h10_m: h.map(|h| h[0]),
            h50_m: h.map(|h| h[1]),
            h90_m: h.map(|h| h[2]),
            q: r.transitions.map_or(r.options.q, |t| t.q),
            n_bins: r.n_bins,
            options: r.options,
            flags: r.flags,
        }
    }
}

impl TryFrom<FitReportRecord> for FitReport {
    type Error = String;

    fn try_from(r: FitReportRecord) -> std::result::Result<Self, String> {
        let transitions = match (r.h10_m, r.h50_m, r.h90_m) {
            (Some(a), Some(b), Some(c)) => Some(TransitionHeights { q: r.q, h: [a, b, c] }),
            (None, None, None) => None,
            _ => return Err("transition heights must be all present or all null".into()),
        };
        Ok(FitReport {
            band: r.band,
            metric: r.metric,
            model: r.model,
            params: r.params,
            rmse: r.rmse,
            r2: r.r2,
            transitions,
            n_bins: r.n_bins,
            options: r.options,
            flags: r.flags,
        })
    }
}

/// Root-mean-square residual and coefficient of determination of `model`
/// against the bin means. `r2` is `None` for a zero-variance series.
pub fn goodness(series: &BinnedMetricSeries, model: impl Fn(f64) -> f64) -> Result<(f64, Option<f64>)> {
    let n = series.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mean = series.bins.iter().map(|b| b.mean).sum::<f64>() / n as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for b in &series.bins {
        ss_res += (b.mean - model(b.center_altitude)).powi(2);
        ss_tot += (b.mean - mean).powi(2);
    }
    let rmse = (ss_res / n as f64).sqrt();
    let r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    Ok((rmse, r2))
}

fn check_series(series: &BinnedMetricSeries, needed: usize) -> Result<()> {
    if series.len() < needed {
        return Err(Error::InsufficientData { needed, got: series.len() });
    }
    if let Some(b) = series.bins.iter().find(|b| !(b.mean.is_finite() && b.center_altitude.is_finite())) {
        return Err(Error::Input(format!(
            "series {}/{} has a non-finite bin at {} m",
            series.band, series.metric, b.center_altitude
        )));
    }
    Ok(())
}

fn sse(series: &BinnedMetricSeries, model: impl Fn(f64) -> f64) -> f64 {
    series
        .bins
        .iter()
        .map(|b| (b.mean - model(b.center_altitude)).powi(2))
        .sum()
}

fn altitude_span(series: &BinnedMetricSeries) -> f64 {
    let c = series.centers();
    c[c.len() - 1] - c[0]
}

fn build_report(
    series: &BinnedMetricSeries,
    model: ModelKind,
    params: CurveModel,
    opts: &FitOptions,
    mut flags: Vec<FitFlag>,
) -> Result<FitReport> {
    let (rmse, r2) = goodness(series, |h| params.eval(h))?;
    if r2.is_none() {
        flags.push(FitFlag::ZeroVariance);
    }
    let transitions = match &params {
        CurveModel::Exp(p) => transition_heights_exp(p, &opts.q)?,
        CurveModel::Logistic(p) => Some(transition_heights_logistic(p, &opts.q)?),
    };
    if transitions.is_none() && !flags.contains(&FitFlag::Degenerate) {
        flags.push(FitFlag::Degenerate);
    }
    Ok(FitReport {
        band: series.band.clone(),
        metric: series.metric,
        model,
        params,
        rmse,
        r2,
        transitions,
        n_bins: series.len(),
        options: *opts,
        flags,
    })
}

/// Three-parameter exponential fit; `tau` is searched in log space.
///
/// Returns [`Error::Degenerate`] for a flat series, for which
/// [`fit_exp_reduced`] is the appropriate model.
pub fn fit_exp(series: &BinnedMetricSeries, opts: &FitOptions) -> Result<FitReport> {
    opts.validate()?;
    check_series(series, ModelKind::Exp.free_params() + 1)?;
    let means = series.means();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    if hi - lo <= opts.f_tol * mean.abs() {
        return Err(Error::Degenerate(format!(
            "{}/{} is flat (range {}); use the reduced model",
            series.band,
            series.metric,
            hi - lo
        )));
    }

    let unpack = |x: &[f64]| ExpModelParams { x_inf: x[0], x_zero: x[1], tau: x[2].exp() };
    let x0 = [means[means.len() - 1], means[0], (altitude_span(series) / 3.0).ln()];
    let m = nelder_mead(|x| sse(series, |h| exp_eval(&unpack(x), h)), &x0, opts)?;
    let params = unpack(&m.x);
    let mut flags = Vec::new();
    if !m.converged {
        flags.push(FitFlag::NotConverged);
    }
    build_report(series, ModelKind::Exp, CurveModel::Exp(params), opts, flags)
}

/// Exponential fit with `tau` held fixed (default: altitude span / 3). The
/// model is linear in the two remaining parameters and is solved directly.
pub fn fit_exp_reduced(
    series: &BinnedMetricSeries,
    tau_fixed: Option<f64>,
    opts: &FitOptions,
) -> Result<FitReport> {
    opts.validate()?;
    check_series(series, ModelKind::ExpReduced.free_params() + 1)?;
    let span = altitude_span(series);
    if span <= 0.0 {
        return Err(Error::Degenerate("all bin centers coincide; design is rank deficient".into()));
    }
    let tau = tau_fixed.unwrap_or(span / 3.0);
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config("tau_fixed", format!("must be positive, got {tau}")));
    }

    // y = x_inf + (x_zero − x_inf)·e^{−h/τ}: a straight line in e^{−h/τ}
    let n = series.len() as f64;
    let basis: Vec<f64> = series.bins.iter().map(|b| (-b.center_altitude / tau).exp()).collect();
    let b_mean = basis.iter().sum::<f64>() / n;
    let y_mean = series.bins.iter().map(|b| b.mean).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (b, bin) in basis.iter().zip(&series.bins) {
        sxy += (b - b_mean) * (bin.mean - y_mean);
        sxx += (b - b_mean).powi(2);
    }
    if sxx <= f64::EPSILON * b_mean * b_mean * n {
        return Err(Error::Degenerate("basis has no spread; design is rank deficient".into()));
    }
    let slope = sxy / sxx;
    let x_inf = y_mean - slope * b_mean;
    let params = ExpModelParams { x_inf, x_zero: x_inf + slope, tau };
    build_report(series, ModelKind::ExpReduced, CurveModel::Exp(params), opts, Vec::new())
}

/// First altitude (linearly interpolated between centers) at which the
/// series rises to `level`.
fn first_rise(centers: &[f64], values: &[f64], level: f64) -> Option<f64> {
    for i in 1..values.len() {
        let (a, b) = (values[i - 1], values[i]);
        if a < level && b >= level {
            let t = (level - a) / (b - a);
            return Some(centers[i - 1] + t * (centers[i] - centers[i - 1]));
        }
    }
    None
}

/// Two-parameter logistic fit over `(ln k, h_s)`.
pub fn fit_logistic(series: &BinnedMetricSeries, opts: &FitOptions) -> Result<FitReport> {
    opts.validate()?;
    check_series(series, ModelKind::Logistic.free_params() + 1)?;
    let centers = series.centers();
    let values = series.means();
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Input(format!(
            "{}/{}: logistic targets must lie in [0, 1], found {v}",
            series.band, series.metric
        )));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let span = altitude_span(series);

    let mut flags = Vec::new();
    let h_s0 = match first_rise(&centers, &values, lo + 0.5 * range).filter(|_| range > 0.0) {
        Some(h) => h,
        None => {
            flags.push(FitFlag::NoMidpointCrossing);
            flags.push(FitFlag::Degenerate);
            let mid = centers.len() / 2;
            if centers.len() % 2 == 1 {
                centers[mid]
            } else {
                0.5 * (centers[mid - 1] + centers[mid])
            }
        }
    };
    let width = match (
        first_rise(&centers, &values, lo + 0.1 * range),
        first_rise(&centers, &values, lo + 0.9 * range),
    ) {
        (Some(a), Some(b)) if b > a => b - a,
        _ => span,
    };
    let k0 = (4.0 / width).max(1e-3);

    let unpack = |x: &[f64]| LogisticModelParams { k: x[0].exp(), h_s: x[1] };
    let objective = |x: &[f64]| {
        let p = unpack(x);
        if !(p.k.is_finite() && p.k > 0.0) {
            return f64::INFINITY;
        }
        sse(series, |h| logistic_eval(&p, h))
    };
    let m = nelder_mead(objective, &[k0.ln(), h_s0], opts)?;
    if !m.converged {
        flags.push(FitFlag::NotConverged);
    }
    build_report(series, ModelKind::Logistic, CurveModel::Logistic(unpack(&m.x)), opts, flags)
}
