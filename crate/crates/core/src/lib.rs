//! Counterfactual microsimulation of household credit pricing under
//! alternative credit-data regimes.
//!
//! * [`population`] loads or synthesizes household microdata and assigns
//!   person-weighted income deciles.
//! * [`regimes`] scores and prices every household under the negative-only,
//!   Score+ and open-finance regimes.
//! * [`metrics`] computes Gini/Lorenz, poverty headcounts, transitions and
//!   decile summaries.
//! * [`estimators`] holds the doubly-robust ATT and synthetic control.
//!
//! Per-household work goes through [`par::Execution`]; with the `parallel`
//! feature it runs on rayon, otherwise sequentially, with identical output.

pub mod error;
pub mod estimators;
pub mod metrics;
pub mod par;
pub mod population;
pub mod regimes;
pub mod rng;

pub use error::{Error, Result};
