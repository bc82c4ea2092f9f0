//! Open-loop geometric controller from target tip positions to cable commands.

use nalgebra::Vector3;

use crate::error::Result;
use crate::soft_arm::kinematics::{
    cable_lengths, cc_project, ArmGeometry, CcAngles, REACH_TOLERANCE,
};
use crate::soft_arm::sim::{U_MAX, U_MIN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineCommand {
    pub u: [f64; 3],
    pub angles: CcAngles,
    /// Target was off the CC shell and its direction-preserving projection was used.
    pub projected: bool,
    /// Distance from the target to the projection, mm.
    pub residual: f64,
    /// At least one channel hit `U_MAX`.
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineController {
    geometry: ArmGeometry,
    u_bounds: (f64, f64),
}

impl BaselineController {
    pub fn new(geometry: ArmGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            geometry,
            u_bounds: (U_MIN, U_MAX),
        })
    }

    pub fn geometry(&self) -> &ArmGeometry {
        &self.geometry
    }

    /// Cable commands for a target tip.
    ///
    /// Cables are pretensioned so the longest one is slack at zero command:
    /// `u_i = (max_j l_j − l_i)/gain`. With three cables at 2π/3 spacing
    /// the bending pose depends only on length differences, so this is the
    /// unique nonnegative command with one idle cable.
    pub fn control(&self, target: &Vector3<f64>) -> BaselineCommand {
        let length = self.geometry.length;
        let (angles, residual) = cc_project(target, length);
        let projected = residual > REACH_TOLERANCE * length.max(1.0);
        let lengths = cable_lengths(angles.phi_b, angles.gamma_g, &self.geometry);
        let slack = lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = self.u_bounds;
        let mut saturated = false;
        let u = lengths.map(|l| {
            let raw = (slack - l) / self.geometry.gain;
            saturated |= raw > hi;
            raw.clamp(lo, hi)
        });
        BaselineCommand {
            u,
            angles,
            projected,
            residual,
            saturated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soft_arm::kinematics::cc_forward;
    use approx::assert_relative_eq;
    use core::f64::consts::PI;

    #[test]
    fn straight_target() {
        let c = BaselineController::new(ArmGeometry::default()).unwrap();
        let cmd = c.control(&Vector3::new(0.0, 0.0, 90.0));
        assert_eq!(cmd.u, [0.0; 3]);
        assert!(!cmd.projected);
    }

    #[test]
    fn single_cable_pull() {
        let c = BaselineController::new(ArmGeometry::default()).unwrap();
        let cmd = c.control(&cc_forward(PI / 3.0, 0.0, 90.0).unwrap());
        // Differential stroke of cable 1 against cables 2 and 3.
        let expect = (PI / 3.0 * 10.0) * (1.0 - (2.0 * PI / 3.0).cos()) / 0.25;
        assert_relative_eq!(cmd.u[0], expect, epsilon = 1e-9);
        assert_relative_eq!(cmd.u[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(cmd.u[2], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn unreachable_is_flagged_and_bounded() {
        let c = BaselineController::new(ArmGeometry::default()).unwrap();
        let cmd = c.control(&Vector3::new(80.0, 0.0, -20.0));
        assert!(cmd.projected);
        assert!(cmd.u.iter().all(|u| (0.0..=90.0).contains(u)));
        assert!(cmd.saturated);
    }
}
