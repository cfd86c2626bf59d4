//! Files in and out: datasets, run configs, simulations and fit directories.

pub mod config;
pub mod output;
pub mod simulate;
pub mod table;

pub use config::RunConfig;
pub use output::{diagnose, read_draws, write_diagnostics, write_draws, write_manifest};
pub use simulate::{read_truth, simulate, write_truth, Design, Truth};
pub use table::{load_csv, parse_csv, write_csv, Schema};
