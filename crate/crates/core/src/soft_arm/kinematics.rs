//! Constant-curvature geometry of a single cable-driven segment.

use core::f64::consts::{PI, TAU};

use nalgebra::Vector3;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};

/// Segment geometry and actuation scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmGeometry {
    /// Backbone length `L` in mm.
    pub length: f64,
    /// Radial distance of the cables from the backbone in mm.
    pub cable_offset: f64,
    /// Angular stations of the three cables, radians.
    pub cable_angles: [f64; 3],
    /// Cable shortening per actuation unit, mm.
    pub gain: f64,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        Self {
            length: 90.0,
            cable_offset: 10.0,
            cable_angles: [0.0, TAU / 3.0, 2.0 * TAU / 3.0],
            gain: 0.25,
        }
    }
}

impl ArmGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(invalid!(
                "segment length must be positive, got {}",
                self.length
            ));
        }
        if !(self.cable_offset.is_finite() && self.cable_offset > 0.0) {
            return Err(invalid!(
                "cable offset must be positive, got {}",
                self.cable_offset
            ));
        }
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(invalid!(
                "actuation gain must be positive, got {}",
                self.gain
            ));
        }
        let a = self.cable_angles;
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let sep = wrap_angle(a[j] - a[i]);
            if (sep - TAU / 3.0).abs() > 1e-12 {
                return Err(invalid!(
                    "cables {i} and {j} are {sep} rad apart, expected 2π/3"
                ));
            }
        }
        Ok(())
    }

    /// Signed offset `d_i = a·cos(γ − θ_i)` of each cable from the neutral plane.
    pub fn neutral_offsets(&self, gamma_g: f64) -> [f64; 3] {
        self.cable_angles
            .map(|theta| self.cable_offset * (gamma_g - theta).cos())
    }
}

/// Bending angle and direction of a constant-curvature arc, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcAngles {
    pub phi_b: f64,
    pub gamma_g: f64,
}

/// Wraps an angle to `[0, 2π)`.
pub fn wrap_angle(angle: f64) -> f64 {
    let w = angle % TAU;
    let w = if w < 0.0 { w + TAU } else { w };
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed smallest difference `a − b`, in `(−π, π]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

// (1 − cos φ)/φ and sin φ/φ with series near zero.
fn arc_ratios(phi: f64) -> (f64, f64) {
    if phi.abs() < 1e-4 {
        let p2 = phi * phi;
        (
            phi / 2.0 - phi * p2 / 24.0,
            1.0 - p2 / 6.0 + p2 * p2 / 120.0,
        )
    } else {
        ((1.0 - phi.cos()) / phi, phi.sin() / phi)
    }
}

/// Tip position of a constant-curvature arc of length `length`.
pub fn cc_forward(phi_b: f64, gamma_g: f64, length: f64) -> Result<Vector3<f64>> {
    if !(0.0..PI).contains(&phi_b) || !gamma_g.is_finite() {
        return Err(invalid!("bending angle {phi_b} outside [0, π)"));
    }
    let (radial, axial) = arc_ratios(phi_b);
    let rho = length * radial;
    Ok(Vector3::new(
        rho * gamma_g.cos(),
        rho * gamma_g.sin(),
        length * axial,
    ))
}

/// Direction-preserving projection of `tip` onto the reachable shell.
///
/// The chord of a constant-curvature arc leans `φ/2` away from the axis, so
/// `φ = 2·atan2(ρ, z)` exactly. The returned residual is the distance between
/// `tip` and the forward map of the recovered angles.
pub fn cc_project(tip: &Vector3<f64>, length: f64) -> (CcAngles, f64) {
    let rho = tip.x.hypot(tip.y);
    let gamma_g = if rho <= 1e-12 * length {
        0.0
    } else {
        wrap_angle(tip.y.atan2(tip.x))
    };
    let phi_raw = 2.0 * rho.atan2(tip.z);
    let phi_b = phi_raw.clamp(0.0, PI - 1e-9);
    let angles = CcAngles { phi_b, gamma_g };
    let residual = match cc_forward(phi_b, gamma_g, length) {
        Ok(on_shell) => (on_shell - tip).norm(),
        Err(_) => f64::INFINITY,
    };
    (angles, residual)
}

/// Default reachability tolerance for [`cc_inverse`], mm.
pub const REACH_TOLERANCE: f64 = 1e-6;

/// Recovers `(φ_b, γ_g)` from a tip position that lies on the
/// constant-curvature shell of `length`.
pub fn cc_inverse(tip: &Vector3<f64>, length: f64) -> Result<CcAngles> {
    cc_inverse_with_tolerance(tip, length, REACH_TOLERANCE * length.max(1.0))
}

pub fn cc_inverse_with_tolerance(
    tip: &Vector3<f64>,
    length: f64,
    tolerance: f64,
) -> Result<CcAngles> {
    if !(tip.iter().all(|v| v.is_finite()) && length > 0.0) {
        return Err(invalid!("tip and length must be finite"));
    }
    let (angles, residual) = cc_project(tip, length);
    if residual > tolerance || tip.z <= 0.0 && tip.x.hypot(tip.y) > 0.0 {
        return Err(Error::Unreachable {
            residual,
            nearest: (angles.phi_b, angles.gamma_g),
        });
    }
    Ok(angles)
}

/// Cable lengths `l_i = L − φ_b·d_i` for the three cables.
///
/// This is the closed form of `1/κ_b = 1/κ_c,i + d_i` together with
/// `l_i = (κ_b/κ_c,i)·L`.
pub fn cable_lengths(phi_b: f64, gamma_g: f64, geom: &ArmGeometry) -> [f64; 3] {
    geom.neutral_offsets(gamma_g)
        .map(|d| geom.length - phi_b * d)
}

/// Least-squares inverse of [`cable_lengths`] over `(φ_b, γ_g)`.
///
/// Writes `L − l_i = α cos θ_i + β sin θ_i` with `(α, β) = φ_b·a·(cos γ, sin γ)`
/// and solves the 3×2 system in the least-squares sense. A common shortening
/// of all three cables falls in the residual.
pub fn angles_from_lengths(lengths: &[f64; 3], geom: &ArmGeometry) -> CcAngles {
    let (mut scc, mut scs, mut sss, mut bc, mut bs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (l, theta) in lengths.iter().zip(geom.cable_angles) {
        let (s, c) = theta.sin_cos();
        let shortening = geom.length - l;
        scc += c * c;
        scs += c * s;
        sss += s * s;
        bc += c * shortening;
        bs += s * shortening;
    }
    let det = scc * sss - scs * scs;
    let alpha = (sss * bc - scs * bs) / det;
    let beta = (scc * bs - scs * bc) / det;
    let bend = alpha.hypot(beta) / geom.cable_offset;
    let gamma_g = if bend <= 1e-15 {
        0.0
    } else {
        wrap_angle(beta.atan2(alpha))
    };
    CcAngles {
        phi_b: bend.min(PI - 1e-9),
        gamma_g,
    }
}
