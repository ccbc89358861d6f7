//! Monte-Carlo experiment driver: configuration, per-point simulation,
//! sweeps to CSV and plot scripts.

mod config;
mod denoiser;
mod metrics;
mod plots;
mod sim;
mod sweep;

pub use config::{DenoiserSettings, EstimatorKind, ExperimentConfig, Profile, ReceiverPdp};
pub use denoiser::{load_denoiser, train_denoiser, train_denoiser_to};
pub use metrics::{compute_throughput, reduce, FrameOutcome, MetricRecord, CSV_COLUMNS};
pub use plots::{emit_plots, emit_plots_from_csv};
pub use sim::{frame_rng, noise_variance, run_point, OperatingPoint};
pub use sweep::{read_records, run_sweep, sweep_points};
