#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod datasets;
pub mod deepc;
pub mod error;
pub mod linalg;
pub mod qp;
pub mod soft_arm;
pub mod svd_reduction;

pub use baseline::{BaselineCommand, BaselineController};
pub use datasets::{
    build_hankel, is_persistently_exciting, partition_past_future, representability_residual,
    BlockHankel, HankelPartition, RepresentabilityTest, TrajectoryDataset,
};
pub use deepc::{
    ControlAction, DeePCConfig, DeePCController, DeePCStepResult, DeePCTemplate, HistoryBuffer,
    Reduction,
};
pub use error::{Error, Result};
pub use qp::{PreparedQp, QpProblem, QpSettings, QpSolution, QpStatus};
pub use svd_reduction::{condense_by_energy, factorize_and_condense, select_rank, SvdCondensed};
