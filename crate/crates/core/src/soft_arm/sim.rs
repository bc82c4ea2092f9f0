//! Nonlinear cable-driven soft-arm surrogate used as the DeePC testbed.

use core::f64::consts::PI;

use nalgebra::Vector3;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::kinematics::{angles_from_lengths, cc_forward, wrap_angle, ArmGeometry};
use crate::error::{invalid, Result};

pub const U_MIN: f64 = 0.0;
pub const U_MAX: f64 = 90.0;

/// Model mismatch and sensor noise applied on top of the nominal CC plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbances {
    /// Cable actuation time constant, s.
    pub lag_tau: f64,
    /// Gravity sag amplitude `Δφ_g`, rad.
    pub gravity_sag: f64,
    /// Direction-dependent stiffness amplitude `ε`.
    pub stiffness_ripple: f64,
    /// Per-axis standard deviation of tip measurement noise, mm.
    pub noise_std: f64,
}

impl Default for Disturbances {
    fn default() -> Self {
        Self {
            lag_tau: 0.15,
            gravity_sag: 0.06,
            stiffness_ripple: 0.08,
            noise_std: 0.3,
        }
    }
}

impl Disturbances {
    /// Every effect disabled: the plant is the static constant-curvature map.
    pub fn off() -> Self {
        Self::nominal(0.0)
    }

    /// Keeps the actuation lag but removes mismatch and noise.
    pub fn nominal(lag_tau: f64) -> Self {
        Self {
            lag_tau,
            gravity_sag: 0.0,
            stiffness_ripple: 0.0,
            noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lag_tau.is_finite() && self.lag_tau >= 0.0) {
            return Err(invalid!(
                "lag time constant must be nonnegative, got {}",
                self.lag_tau
            ));
        }
        if !(self.gravity_sag.is_finite() && self.gravity_sag >= 0.0) {
            return Err(invalid!(
                "gravity sag must be nonnegative, got {}",
                self.gravity_sag
            ));
        }
        if !(self.stiffness_ripple.is_finite() && self.stiffness_ripple.abs() < 1.0) {
            return Err(invalid!(
                "stiffness ripple must lie in (-1, 1), got {}",
                self.stiffness_ripple
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(invalid!(
                "noise std must be nonnegative, got {}",
                self.noise_std
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSimConfig {
    pub geometry: ArmGeometry,
    pub disturbances: Disturbances,
    /// Control period, s.
    pub dt: f64,
}

impl Default for ArmSimConfig {
    fn default() -> Self {
        Self {
            geometry: ArmGeometry::default(),
            disturbances: Disturbances::default(),
            dt: 0.05,
        }
    }
}

impl ArmSimConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.disturbances.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid!("time step must be positive, got {}", self.dt));
        }
        Ok(())
    }
}

/// Physical configuration of the arm after the most recent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmState {
    pub phi_b: f64,
    pub gamma_g: f64,
    /// Lagged cable lengths, mm.
    pub lag_state: [f64; 3],
    pub time: f64,
}

impl ArmState {
    pub fn at_rest(geometry: &ArmGeometry) -> Self {
        Self {
            phi_b: 0.0,
            gamma_g: 0.0,
            lag_state: [geometry.length; 3],
            time: 0.0,
        }
    }
}

/// Result of one simulator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmMeasurement {
    /// Noisy tip position, mm.
    pub tip: Vector3<f64>,
    /// True tip position before noise, mm.
    pub true_tip: Vector3<f64>,
    /// Whether any channel of the command was outside `[0, 90]`.
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct ArmSimulator {
    config: ArmSimConfig,
    state: ArmState,
    rng: ChaCha8Rng,
    clamp_events: usize,
}

impl ArmSimulator {
    pub fn new(config: ArmSimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: ArmState::at_rest(&config.geometry),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clamp_events: 0,
        })
    }

    pub fn config(&self) -> &ArmSimConfig {
        &self.config
    }

    pub fn state(&self) -> &ArmState {
        &self.state
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    /// Noiseless tip of the current state.
    pub fn true_tip(&self) -> Vector3<f64> {
        cc_forward(
            self.state.phi_b,
            self.state.gamma_g,
            self.config.geometry.length,
        )
        .expect("state bending angle kept inside [0, π)")
    }

    /// Applies `u` for one control period and returns the measured tip.
    pub fn step(&mut self, u: &[f64; 3]) -> ArmMeasurement {
        let geom = self.config.geometry;
        let dist = self.config.disturbances;
        let mut clamped = false;
        let commanded = u.map(|ui| {
            let c = if ui.is_nan() {
                U_MIN
            } else {
                ui.clamp(U_MIN, U_MAX)
            };
            clamped |= c != ui;
            geom.length - geom.gain * c
        });
        if clamped {
            self.clamp_events += 1;
        }

        // Exact zero-order-hold discretisation of l' = (l_cmd - l)/tau.
        let blend = if dist.lag_tau > 0.0 {
            -(-self.config.dt / dist.lag_tau).exp_m1()
        } else {
            1.0
        };
        for (l, c) in self.state.lag_state.iter_mut().zip(commanded) {
            *l += blend * (c - *l);
        }

        let nominal = angles_from_lengths(&self.state.lag_state, &geom);
        let (phi_b, gamma_g) = distort(nominal.phi_b, nominal.gamma_g, &dist);
        self.state.phi_b = phi_b;
        self.state.gamma_g = gamma_g;
        self.state.time += self.config.dt;

        let true_tip = self.true_tip();
        let mut tip = true_tip;
        if dist.noise_std > 0.0 {
            for v in tip.iter_mut() {
                let n: f64 = StandardNormal.sample(&mut self.rng);
                *v += dist.noise_std * n;
            }
        }
        ArmMeasurement {
            tip,
            true_tip,
            clamped,
        }
    }
}

/// Stiffness ripple followed by gravity sag. Identity when both are zero.
fn distort(phi_b: f64, gamma_g: f64, dist: &Disturbances) -> (f64, f64) {
    let stiff = phi_b / (1.0 + dist.stiffness_ripple * (3.0 * gamma_g).cos());
    let sagged = stiff + dist.gravity_sag * stiff.sin();
    (sagged.clamp(0.0, PI - 1e-9), wrap_angle(gamma_g))
}
