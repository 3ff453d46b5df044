//! Altitude-dependent spectral structure modeling.
//!
//! The crate turns spectrum sweeps recorded at varying altitude into
//! per-band metrics (band-average power, spectral entropy, sparsity), bins
//! them by altitude, and fits closed-form altitude models whose parameters,
//! error statistics and transition heights make up the final report.
//!
//! Pipeline stages, in order:
//!
//! - [`spectrum`]: frequency grid, band registry, sweep records
//! - [`psd`]: Welch estimation and capture placement
//! - [`metrics`]: per-snapshot band metrics
//! - [`binning`]: altitude binning
//! - [`model`] / [`fit`]: model family and least-squares fitting
//! - [`synth`]: synthetic scenarios with planted parameters
//! - [`pipeline`] / [`io`]: file formats and the stage drivers behind the CLI

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binning;
pub mod error;
pub mod fit;
pub mod io;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod psd;
pub mod spectrum;
pub mod synth;


pub use error::{Error, Result};
