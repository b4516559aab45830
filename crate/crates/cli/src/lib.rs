//! Config-driven scenario runner for the `creditvis` microsimulation.
//!
//! Every command validates the whole configuration first and writes its
//! outputs as a self-verifying bundle: files are staged in a temporary
//! directory, listed with SHA-256 checksums in `manifest.json` and moved into
//! place only once complete.

pub mod bundle;
pub mod commands;
pub mod config;

pub use bundle::{verify_bundle, Manifest};
pub use commands::{cmd_estimate, cmd_generate, cmd_report, cmd_simulate, EstimateOutcome};
pub use config::ScenarioConfig;
