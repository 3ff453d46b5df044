//! Closed-form altitude models.
//!
//! Power and normalized entropy follow a first-order relaxation toward a
//! high-altitude asymptote,
//!
//! ```text
//! dX/dh = (X∞ − X(h)) / τ   ⇒   X(h) = X∞ − (X∞ − X(0))·exp(−h/τ)
//! ```
//!
//! and sparsity follows a logistic curve `S(h) = 1 / (1 + exp(−k·(h − h_s)))`.
//!
//! Transition heights are the altitudes at which a curve has covered a given
//! fraction of its total change from its value at `h = 0` to its asymptote.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpModelParams {
    pub x_inf: f64,
    pub x_zero: f64,
    /// Characteristic altitude in meters.
    pub tau: f64,
}

impl ExpModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_inf.is_finite() && self.x_zero.is_finite() && self.tau.is_finite()) {
            return Err(Error::Input("exponential model parameters must be finite".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Input(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.x_inf == self.x_zero
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticModelParams {
    /// Steepness in 1/m.
    pub k: f64,
    /// Midpoint altitude in meters.
    pub h_s: f64,
}

impl LogisticModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite() && self.h_s.is_finite()) {
            return Err(Error::Input(format!(
                "logistic parameters must be finite with k > 0, got k={} h_s={}",
                self.k, self.h_s
            )));
        }
        Ok(())
    }
}

/// Either model family, as stored in reports and scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurveModel {
    Exp(ExpModelParams),
    Logistic(LogisticModelParams),
}

impl CurveModel {
    pub fn eval(&self, h: f64) -> f64 {
        match self {
            CurveModel::Exp(p) => exp_eval(p, h),
            CurveModel::Logistic(p) => logistic_eval(p, h),
        }
    }
}

pub fn exp_eval(p: &ExpModelParams, h: f64) -> f64 {
    p.x_inf - (p.x_inf - p.x_zero) * (-h / p.tau).exp()
}

/// Analytic `dX/dh` of [`exp_eval`].
pub fn exp_derivative(p: &ExpModelParams, h: f64) -> f64 {
    (p.x_inf - p.x_zero) / p.tau * (-h / p.tau).exp()
}

/// Defect of the closed form in the relaxation ODE; zero up to rounding.
pub fn exp_ode_residual(p: &ExpModelParams, h: f64) -> f64 {
    exp_derivative(p, h) - (p.x_inf - exp_eval(p, h)) / p.tau
}

/// Logistic curve, evaluated without overflow for any finite argument.
pub fn logistic_eval(p: &LogisticModelParams, h: f64) -> f64 {
    let z = p.k * (h - p.h_s);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Transition heights for three ascending completion fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionHeights {
    pub q: [f64; 3],
    pub h: [f64; 3],
}

pub const DEFAULT_TRANSITION_Q: [f64; 3] = [0.1, 0.5, 0.9];

impl TransitionHeights {
    pub fn h10(&self) -> f64 {
        self.h[0]
    }

    pub fn h50(&self) -> f64 {
        self.h[1]
    }

    pub fn h90(&self) -> f64 {
        self.h[2]
    }
}

pub fn validate_fractions(q: &[f64; 3]) -> Result<()> {
    if q.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::config("q", format!("fractions must lie in (0, 1), got {q:?}")));
    }
    if !(q[0] <= q[1] && q[1] <= q[2]) {
        return Err(Error::config("q", format!("fractions must be ascending, got {q:?}")));
    }
    Ok(())
}

/// `h_q = −τ·ln(1 − q)`; `None` when the curve is flat.
pub fn transition_heights_exp(p: &ExpModelParams, q: &[f64; 3]) -> Result<Option<TransitionHeights>> {
    validate_fractions(q)?;
    if p.is_degenerate() {
        return Ok(None);
    }
    Ok(Some(TransitionHeights { q: *q, h: q.map(|qi| -p.tau * (-qi).ln_1p()) }))
}

/// Solves `S(h_q) = S(0) + q·(1 − S(0))` in closed form.
pub fn transition_heights_logistic(p: &LogisticModelParams, q: &[f64; 3]) -> Result<TransitionHeights> {
    validate_fractions(q)?;
    let s0 = logistic_eval(p, 0.0);
    let h = q.map(|qi| {
        let target = s0 + qi * (1.0 - s0);
        if target <= s0 {
            return 0.0;
        }
        // ln(1/s − 1) = ln((1 − s)/s)
        let h = p.h_s - ((1.0 - target) / target).ln() / p.k;
        h.max(0.0)
    });
    Ok(TransitionHeights { q: *q, h })
}
