//! Experiment harness for DeePC on the simulated three-cable soft arm.

pub mod app;
pub mod config;
pub mod error;
pub mod excitation;
pub mod experiment;
pub mod export;
pub mod metrics;

pub use config::LabConfig;
pub use error::{LabError, Result};
pub use experiment::{
    collect_dataset, make_controller, run_circle, run_fixed_point, CircleSpec, ControllerKind,
    DeePCTip, RunLog, Stage, StepRecord, StepStatus, TipController,
};
pub use metrics::{compute_metrics, RunMetrics};
