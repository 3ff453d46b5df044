use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adssm::binning::{DEFAULT_DELTA_H, DEFAULT_MIN_COUNT};
use adssm::fit::FitOptions;
use adssm::metrics::ThresholdSpec;
use adssm::pipeline::{self, PipelineConfig};
use adssm::Error;

/// Altitude-dependent spectral structure modeling.
#[derive(Debug, Parser)]
#[command(name = "adssm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic sweeps from a scenario file.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-snapshot band metrics from a sweep file.
    Metrics {
        #[arg(long)]
        sweeps: PathBuf,
        /// Band registry; the bundled six-band registry when omitted.
        #[arg(long)]
        bands: Option<PathBuf>,
        /// Grid description; `grid.json` beside the sweep file when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        percentile: f64,
        #[arg(long = "margin-db", default_value_t = 3.0, allow_negative_numbers = true)]
        margin_db: f64,
    },
    /// Altitude-bin a metric file.
    Bin {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long = "delta-h", default_value_t = DEFAULT_DELTA_H)]
        delta_h: f64,
        #[arg(long = "min-count", default_value_t = DEFAULT_MIN_COUNT)]
        min_count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit altitude models to binned series and render reports.
    Fit {
        #[arg(long)]
        binned: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Three completion fractions for transition heights.
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
    },
    /// Every stage in sequence, driven by a JSON config.
    RunAll {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> adssm::Result<()> {
    match cli.command {
        Command::Simulate { scenario, out, seed } => pipeline::cmd_simulate(&scenario, &out, seed),
        Command::Metrics { sweeps, bands, grid, out, percentile, margin_db } => {
            let threshold = ThresholdSpec { percentile, margin_db, ..Default::default() };
            pipeline::cmd_metrics(&sweeps, grid.as_deref(), bands.as_deref(), &out, &threshold).map(drop)
        }
        Command::Bin { metrics, delta_h, min_count, out } => {
            pipeline::cmd_bin(&metrics, delta_h, min_count, &out).map(drop)
        }
        Command::Fit { binned, out, q } => {
            let mut opts = FitOptions::default();
            if let Some(q) = q {
                opts.q = q
                    .try_into()
                    .map_err(|_| Error::Input("--q takes exactly three fractions".into()))?;
            }
            pipeline::cmd_fit(&binned, &out, &opts).map(drop)
        }
        Command::RunAll { config } => {
            let cfg = PipelineConfig::load(&config)?;
            pipeline::run_all(&cfg).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 1 })
        }
    }
}
