//! Robustness estimators: doubly-robust ATT with hand-rolled logistic and
//! least-squares fits, and a simplex-constrained synthetic control with
//! placebo runs.

mod aipw;
mod design;
mod linear;
mod logistic;
mod panel;
mod synth;

pub use aipw::{aipw_att, dr_att, dr_att_with, AttOptions, AttResult};
pub use design::{covariate_design, DesignMatrix};
pub use linear::{fit_linear, LinearFit};
pub use logistic::{fit_logistic, predict_propensity, sigmoid, LogisticFit, DEFAULT_CLIP};
pub use panel::{load_panel, read_panel, Panel};
pub use synth::{
    placebo_gaps, synthetic_control, synthetic_control_objective, PlaceboRun, SynthControlResult,
};
