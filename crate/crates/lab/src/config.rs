//! Flat `key = value` configuration covering geometry, plant, DeePC, excitation and tasks.

use std::path::Path;

use deepc_core::deepc::{DeePCConfig, Reduction};
use deepc_core::qp::QpSettings;
use deepc_core::soft_arm::{ArmGeometry, ArmSimConfig, Disturbances};
use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};
use crate::excitation::{ExcitationKind, ExcitationSpec};
use crate::experiment::{CircleSpec, Stage};

/// The shipped configuration file; parsing it yields [`LabConfig::default`].
pub const DEFAULT_CONFIG: &str = include_str!("../default.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionKind {
    Full,
    Energy,
    Rank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeePCSettings {
    pub t_ini: usize,
    pub horizon: usize,
    pub q_weight: f64,
    pub r_weight: f64,
    pub lambda_g: f64,
    pub lambda_y: f64,
    pub u_lower: f64,
    pub u_upper: f64,
    pub reduction: ReductionKind,
    pub energy_fraction: f64,
    pub reduction_rank: usize,
    pub qp: QpSettings,
}

impl DeePCSettings {
    pub fn reduction(&self) -> Reduction {
        match self.reduction {
            ReductionKind::Full => Reduction::Full,
            ReductionKind::Energy => Reduction::Energy(self.energy_fraction),
            ReductionKind::Rank => Reduction::Rank(self.reduction_rank),
        }
    }

    /// Controller configuration for the three-cable arm with tip outputs.
    pub fn to_config(&self) -> DeePCConfig {
        DeePCConfig {
            t_ini: self.t_ini,
            horizon: self.horizon,
            output_weight: DMatrix::identity(3, 3) * self.q_weight,
            input_weight: DMatrix::identity(3, 3) * self.r_weight,
            lambda_g: self.lambda_g,
            lambda_y: self.lambda_y,
            u_lower: DVector::from_element(3, self.u_lower),
            u_upper: DVector::from_element(3, self.u_upper),
            y_lower: None,
            y_upper: None,
            reduction: self.reduction(),
            qp: self.qp,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSpec {
    /// Steps excluded from RMSE; `None` means `t_ini`.
    pub warmup_steps: Option<usize>,
    pub settle_band_deg: f64,
    pub settle_band_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabConfig {
    pub seed: u64,
    pub geometry: ArmGeometry,
    pub dt: f64,
    pub disturbances_on: bool,
    pub disturbances: Disturbances,
    pub deepc: DeePCSettings,
    pub excitation: ExcitationSpec,
    pub stages: Vec<Stage>,
    pub circle: CircleSpec,
    pub metrics: MetricsSpec,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            geometry: ArmGeometry::default(),
            dt: 0.05,
            disturbances_on: true,
            disturbances: Disturbances::default(),
            deepc: DeePCSettings {
                t_ini: 20,
                horizon: 30,
                q_weight: 10.0,
                r_weight: 2e-3,
                lambda_g: 300.0,
                lambda_y: 1000.0,
                u_lower: 0.0,
                u_upper: 90.0,
                reduction: ReductionKind::Full,
                energy_fraction: deepc_core::svd_reduction::DEFAULT_ENERGY_FRACTION,
                reduction_rank: 0,
                qp: QpSettings::default(),
            },
            excitation: ExcitationSpec::default(),
            stages: Stage::default_program(),
            circle: CircleSpec::default(),
            metrics: MetricsSpec {
                warmup_steps: Some(20),
                settle_band_deg: 2.0,
                settle_band_mm: 1.0,
            },
        }
    }
}

impl LabConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses `text` on top of [`LabConfig::default`]; `origin` names the
    /// source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let err = |message: String| LabError::Config {
                origin: origin.to_string(),
                line: idx + 1,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate().map_err(|e| match e {
            LabError::Invalid(message) | LabError::Config { message, .. } => LabError::Config {
                origin: origin.to_string(),
                line: 0,
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let d = &mut self.deepc;
        match key {
            "seed" => self.seed = parse(value)?,
            "segment_length" => self.geometry.length = parse(value)?,
            "cable_offset" => self.geometry.cable_offset = parse(value)?,
            "cable_angles_deg" => {
                let v: Vec<f64> = parse_list(value)?;
                let [a, b, c] = v[..] else {
                    return Err(format!("cable_angles_deg needs 3 values, got {}", v.len()));
                };
                self.geometry.cable_angles = [a.to_radians(), b.to_radians(), c.to_radians()];
            }
            "u_to_length_gain" => self.geometry.gain = parse(value)?,
            "dt" => self.dt = parse(value)?,
            "disturbances" => self.disturbances_on = parse_switch(value)?,
            "lag_tau" => self.disturbances.lag_tau = parse(value)?,
            "gravity_sag" => self.disturbances.gravity_sag = parse(value)?,
            "stiffness_ripple" => self.disturbances.stiffness_ripple = parse(value)?,
            "noise_std" => self.disturbances.noise_std = parse(value)?,
            "t_ini" => d.t_ini = parse(value)?,
            "horizon" => d.horizon = parse(value)?,
            "q_weight" => d.q_weight = parse(value)?,
            "r_weight" => d.r_weight = parse(value)?,
            "lambda_g" => d.lambda_g = parse(value)?,
            "lambda_y" => d.lambda_y = parse(value)?,
            "u_lower" => d.u_lower = parse(value)?,
            "u_upper" => d.u_upper = parse(value)?,
            "reduction" => {
                d.reduction = match value {
                    "full" => ReductionKind::Full,
                    "energy" => ReductionKind::Energy,
                    "rank" => ReductionKind::Rank,
                    other => return Err(format!("unknown reduction `{other}`")),
                }
            }
            "energy_fraction" => d.energy_fraction = parse(value)?,
            "reduction_rank" => d.reduction_rank = parse(value)?,
            "tol_kkt" => d.qp.tol_kkt = parse(value)?,
            "tol_feas" => d.qp.tol_feas = parse(value)?,
            "max_iter" => d.qp.max_iter = parse(value)?,
            "excitation" => {
                self.excitation.kind = match value {
                    "ramp_and_hold" => ExcitationKind::RampAndHold,
                    "uniform_random" => ExcitationKind::UniformRandom,
                    other => return Err(format!("unknown excitation `{other}`")),
                }
            }
            "amplitude_min" => self.excitation.amplitude.0 = parse(value)?,
            "amplitude_max" => self.excitation.amplitude.1 = parse(value)?,
            "ramp_steps" => self.excitation.ramp_steps = parse(value)?,
            "hold_steps" => self.excitation.hold_steps = parse(value)?,
            "samples" => self.excitation.total_steps = parse(value)?,
            "n_est" => self.excitation.n_est = parse(value)?,
            "pe_retries" => self.excitation.retries = parse(value)?,
            "stages" => {
                self.stages = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(parse_stage)
                    .collect::<std::result::Result<_, _>>()?
            }
            "circle_radius" => self.circle.radius = parse(value)?,
            "circle_waypoints" => self.circle.waypoints = parse(value)?,
            "circle_laps" => self.circle.laps = parse(value)?,
            "warmup_steps" => {
                self.metrics.warmup_steps = match value {
                    "t_ini" | "" => None,
                    v => Some(parse(v)?),
                }
            }
            "settle_band_deg" => self.metrics.settle_band_deg = parse(value)?,
            "settle_band_mm" => self.metrics.settle_band_mm = parse(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_config().validate()?;
        self.deepc.to_config().validate()?;
        if self.deepc.u_lower < 0.0 || self.deepc.u_upper > 90.0 {
            return Err(LabError::Invalid(format!(
                "input bounds [{}, {}] exceed the actuator range [0, 90]",
                self.deepc.u_lower, self.deepc.u_upper
            )));
        }
        self.excitation.validate()?;
        for (i, stage) in self.stages.iter().enumerate() {
            stage
                .validate()
                .map_err(|e| LabError::Invalid(format!("stage {}: {e}", i + 1)))?;
        }
        self.circle.validate()?;
        Ok(())
    }

    /// Plant configuration, honouring the `disturbances` switch.
    pub fn sim_config(&self) -> ArmSimConfig {
        ArmSimConfig {
            geometry: self.geometry,
            disturbances: if self.disturbances_on {
                self.disturbances
            } else {
                Disturbances::off()
            },
            dt: self.dt,
        }
    }

    pub fn warmup_steps(&self) -> usize {
        self.metrics.warmup_steps.unwrap_or(self.deepc.t_ini)
    }

    /// Serializes the configuration in the same format [`LabConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let d = &self.deepc;
        let dist = &self.disturbances;
        let angles: Vec<String> = g
            .cable_angles
            .iter()
            .map(|a| fmt_f64(a.to_degrees()))
            .collect();
        let stages: Vec<String> = self
            .stages
            .iter()
            .map(|s| {
                format!(
                    "{}:{}:{}",
                    fmt_f64(s.phi_deg),
                    fmt_f64(s.gamma_deg),
                    s.steps
                )
            })
            .collect();
        let mut lines = vec![
            format!("seed = {}", self.seed),
            format!("segment_length = {}", fmt_f64(g.length)),
            format!("cable_offset = {}", fmt_f64(g.cable_offset)),
            format!("cable_angles_deg = {}", angles.join(", ")),
            format!("u_to_length_gain = {}", fmt_f64(g.gain)),
            format!("dt = {}", fmt_f64(self.dt)),
            format!(
                "disturbances = {}",
                if self.disturbances_on { "on" } else { "off" }
            ),
            format!("lag_tau = {}", fmt_f64(dist.lag_tau)),
            format!("gravity_sag = {}", fmt_f64(dist.gravity_sag)),
            format!("stiffness_ripple = {}", fmt_f64(dist.stiffness_ripple)),
            format!("noise_std = {}", fmt_f64(dist.noise_std)),
            format!("t_ini = {}", d.t_ini),
            format!("horizon = {}", d.horizon),
            format!("q_weight = {}", fmt_f64(d.q_weight)),
            format!("r_weight = {}", fmt_f64(d.r_weight)),
            format!("lambda_g = {}", fmt_f64(d.lambda_g)),
            format!("lambda_y = {}", fmt_f64(d.lambda_y)),
            format!("u_lower = {}", fmt_f64(d.u_lower)),
            format!("u_upper = {}", fmt_f64(d.u_upper)),
            format!(
                "reduction = {}",
                match d.reduction {
                    ReductionKind::Full => "full",
                    ReductionKind::Energy => "energy",
                    ReductionKind::Rank => "rank",
                }
            ),
            format!("energy_fraction = {}", fmt_f64(d.energy_fraction)),
            format!("reduction_rank = {}", d.reduction_rank),
            format!("tol_kkt = {}", fmt_f64(d.qp.tol_kkt)),
            format!("tol_feas = {}", fmt_f64(d.qp.tol_feas)),
            format!("max_iter = {}", d.qp.max_iter),
            format!(
                "excitation = {}",
                match self.excitation.kind {
                    ExcitationKind::RampAndHold => "ramp_and_hold",
                    ExcitationKind::UniformRandom => "uniform_random",
                }
            ),
            format!("amplitude_min = {}", fmt_f64(self.excitation.amplitude.0)),
            format!("amplitude_max = {}", fmt_f64(self.excitation.amplitude.1)),
            format!("ramp_steps = {}", self.excitation.ramp_steps),
            format!("hold_steps = {}", self.excitation.hold_steps),
            format!("samples = {}", self.excitation.total_steps),
            format!("n_est = {}", self.excitation.n_est),
            format!("pe_retries = {}", self.excitation.retries),
            format!("stages = {}", stages.join(", ")),
            format!("circle_radius = {}", fmt_f64(self.circle.radius)),
            format!("circle_waypoints = {}", self.circle.waypoints),
            format!("circle_laps = {}", self.circle.laps),
            format!(
                "warmup_steps = {}",
                self.metrics
                    .warmup_steps
                    .map_or("t_ini".to_string(), |w| w.to_string())
            ),
            format!(
                "settle_band_deg = {}",
                fmt_f64(self.metrics.settle_band_deg)
            ),
            format!("settle_band_mm = {}", fmt_f64(self.metrics.settle_band_mm)),
        ];
        lines.push(String::new());
        lines.join("\n")
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v}")
    }
}

fn parse<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(|v| parse(v.trim())).collect()
}

fn parse_switch(value: &str) -> std::result::Result<bool, String> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected on/off, got `{other}`")),
    }
}

fn parse_stage(spec: &str) -> std::result::Result<Stage, String> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let [phi, gamma, steps] = parts[..] else {
        return Err(format!("stage `{spec}` is not phi_deg:gamma_deg:steps"));
    };
    Ok(Stage {
        phi_deg: parse(phi)?,
        gamma_deg: parse(gamma)?,
        steps: parse(steps)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_matches_defaults() {
        let parsed = LabConfig::parse(DEFAULT_CONFIG, "default.cfg").unwrap();
        assert_eq!(parsed, LabConfig::default());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = LabConfig::default();
        cfg.deepc.lambda_y = f64::INFINITY;
        cfg.deepc.reduction = ReductionKind::Rank;
        cfg.deepc.reduction_rank = 40;
        cfg.metrics.warmup_steps = None;
        let back = LabConfig::parse(&cfg.to_text(), "round-trip").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = LabConfig::parse("seed = 1\n\nhorizon = many\n", "x.cfg").unwrap_err();
        assert_eq!(
            err.to_string(),
            "x.cfg:3: cannot parse `many`: invalid digit found in string"
        );
        let err = LabConfig::parse("bogus = 1", "x.cfg").unwrap_err();
        assert!(err.to_string().contains("unknown key `bogus`"));
        let err = LabConfig::parse("no equals sign", "x.cfg").unwrap_err();
        assert!(err.to_string().starts_with("x.cfg:1:"));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(LabConfig::parse("u_upper = 120", "x").is_err());
        assert!(LabConfig::parse("t_ini = 0", "x").is_err());
        assert!(LabConfig::parse("stages = 20:0:0", "x").is_err());
        assert!(LabConfig::parse("lambda_g = 0\nreduction = energy", "x").is_err());
        assert!(LabConfig::parse("lambda_g = 0\nreduction = full", "x").is_ok());
    }

    #[test]
    fn disturbance_switch() {
        let cfg = LabConfig::parse("disturbances = off", "x").unwrap();
        assert_eq!(cfg.sim_config().disturbances, Disturbances::off());
        assert_eq!(cfg.disturbances, Disturbances::default());
    }
}
