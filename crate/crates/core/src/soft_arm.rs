//! Constant-curvature kinematics, the simulated soft arm and a generic LTI plant.

pub mod kinematics;
pub mod lti;
pub mod sim;

pub use kinematics::{
    angles_from_lengths, cable_lengths, cc_forward, cc_inverse, cc_project, ArmGeometry, CcAngles,
};
pub use lti::LtiPlant;
pub use sim::{ArmMeasurement, ArmSimConfig, ArmSimulator, ArmState, Disturbances, U_MAX, U_MIN};
