//! Data collection and the two closed-loop tasks: stepwise fixed-point
//! regulation and circular tip tracking.

use std::f64::consts::TAU;
use std::sync::Arc;
use std::time::Instant;

use deepc_core::baseline::BaselineController;
use deepc_core::datasets::TrajectoryDataset;
use deepc_core::deepc::{DeePCController, DeePCTemplate};
use deepc_core::qp::QpStatus;
use deepc_core::soft_arm::{cc_forward, cc_inverse, cc_project, ArmSimConfig, ArmSimulator};
use nalgebra::{DMatrix, DVector, Vector3};

use crate::config::LabConfig;
use crate::error::{LabError, Result};
use crate::excitation::{generate_excitation, Excitation};

/// Offsets that give each simulator its own noise stream for a run seed.
const COLLECT_STREAM: u64 = 0x00C0_11EC;
const RUN_STREAM: u64 = 0x0052_C1A7;

/// Constant bending-angle reference held for `steps` control steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub phi_deg: f64,
    pub gamma_deg: f64,
    pub steps: usize,
}

impl Stage {
    /// (20°, 0°), (40°, 60°), (60°, 120°), 200 steps each.
    pub fn default_program() -> Vec<Stage> {
        [(20.0, 0.0), (40.0, 60.0), (60.0, 120.0)]
            .into_iter()
            .map(|(phi_deg, gamma_deg)| Stage {
                phi_deg,
                gamma_deg,
                steps: 200,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(LabError::Invalid(
                "stage duration must be at least 1".into(),
            ));
        }
        if !(self.phi_deg.is_finite() && self.gamma_deg.is_finite()) {
            return Err(LabError::Invalid("stage angles must be finite".into()));
        }
        if !(0.0..180.0).contains(&self.phi_deg) {
            return Err(LabError::Invalid(format!(
                "bending angle {}° outside [0, 180)",
                self.phi_deg
            )));
        }
        Ok(())
    }

    pub fn tip(&self, length: f64) -> Result<Vector3<f64>> {
        Ok(cc_forward(
            self.phi_deg.to_radians(),
            self.gamma_deg.to_radians(),
            length,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleSpec {
    /// mm, measured in the x-y plane.
    pub radius: f64,
    pub waypoints: usize,
    pub laps: usize,
}

impl Default for CircleSpec {
    fn default() -> Self {
        Self {
            radius: 25.0,
            waypoints: 120,
            laps: 2,
        }
    }
}

/// Bending angle where the tip's distance from the base axis peaks.
const PHI_MAX_REACH: f64 = 2.331_122_370_414_423;

impl CircleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(LabError::Invalid(format!(
                "circle radius {} must be nonnegative",
                self.radius
            )));
        }
        if self.waypoints == 0 || self.laps == 0 {
            return Err(LabError::Invalid(
                "circle needs at least one waypoint and one lap".into(),
            ));
        }
        Ok(())
    }

    /// Bending angle and height of the CC arc whose tip lies `radius` off axis.
    pub fn plane(&self, length: f64) -> Result<(f64, f64)> {
        let reach = |phi: f64| {
            if phi < 1e-8 {
                length * phi / 2.0
            } else {
                length * (1.0 - phi.cos()) / phi
            }
        };
        let max_reach = reach(PHI_MAX_REACH);
        if self.radius > max_reach {
            return Err(LabError::Invalid(format!(
                "circle radius {} mm exceeds the reachable {max_reach:.3} mm",
                self.radius
            )));
        }
        let (mut lo, mut hi) = (0.0, PHI_MAX_REACH);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if reach(mid) < self.radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let phi = 0.5 * (lo + hi);
        Ok((phi, cc_forward(phi, 0.0, length)?.z))
    }

    /// Waypoints of one lap, counter-clockwise from +x.
    pub fn waypoints(&self, length: f64) -> Result<Vec<Vector3<f64>>> {
        self.validate()?;
        let (_, z) = self.plane(length)?;
        let points: Vec<Vector3<f64>> = (0..self.waypoints)
            .map(|k| {
                let theta = TAU * k as f64 / self.waypoints as f64;
                Vector3::new(self.radius * theta.cos(), self.radius * theta.sin(), z)
            })
            .collect();
        for p in &points {
            cc_inverse(p, length).map_err(|e| {
                LabError::Invalid(format!("circle waypoint {p:?} is not reachable: {e}"))
            })?;
        }
        Ok(points)
    }
}

/// Excites the configured plant from rest and records its response.
pub fn collect_dataset(cfg: &LabConfig, seed: u64) -> Result<(TrajectoryDataset, Excitation)> {
    let order = cfg.excitation.pe_order(cfg.deepc.t_ini, cfg.deepc.horizon);
    let excitation = generate_excitation(&cfg.excitation, 3, order, seed)?;
    let mut sim = ArmSimulator::new(cfg.sim_config(), seed ^ COLLECT_STREAM)?;
    let inputs = &excitation.inputs;
    let mut outputs = DMatrix::zeros(3, inputs.ncols());
    for k in 0..inputs.ncols() {
        let u = [inputs[(0, k)], inputs[(1, k)], inputs[(2, k)]];
        outputs.set_column(k, &sim.step(&u).tip);
    }
    let dataset = TrajectoryDataset::new(inputs.clone(), outputs, cfg.dt)?;
    Ok((dataset, excitation))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    /// History still filling; the geometric command was applied.
    Warmup,
    Baseline,
    Optimal,
    /// Solver stopped early; the previous input was reapplied.
    MaxIterations,
    /// No feasible point; the previous input was reapplied.
    Infeasible,
}

impl StepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Warmup => "warmup",
            StepStatus::Baseline => "baseline",
            StepStatus::Optimal => "optimal",
            StepStatus::MaxIterations => "max_iterations",
            StepStatus::Infeasible => "infeasible",
        }
    }

    pub fn is_fallback(self) -> bool {
        matches!(self, StepStatus::MaxIterations | StepStatus::Infeasible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub input: [f64; 3],
    pub status: StepStatus,
    /// Optimal QP cost, NaN for non-optimizing steps.
    pub objective: f64,
}

/// A tip-position controller driven by the task harness.
pub trait TipController {
    fn name(&self) -> &'static str;

    /// Number of reference columns the controller looks at.
    fn horizon(&self) -> usize;

    /// `window` is `3 × horizon`; column 0 is the target for the output
    /// produced by the returned input.
    fn decide(&mut self, window: &DMatrix<f64>) -> Result<Decision>;

    fn observe(&mut self, input: &[f64; 3], measured: &Vector3<f64>) -> Result<()>;
}

impl TipController for BaselineController {
    fn name(&self) -> &'static str {
        "baseline"
    }

    fn horizon(&self) -> usize {
        1
    }

    fn decide(&mut self, window: &DMatrix<f64>) -> Result<Decision> {
        let target = window.fixed_view::<3, 1>(0, 0).into_owned();
        Ok(Decision {
            input: self.control(&target).u,
            status: StepStatus::Baseline,
            objective: f64::NAN,
        })
    }

    fn observe(&mut self, _: &[f64; 3], _: &Vector3<f64>) -> Result<()> {
        Ok(())
    }
}

/// DeePC with the geometric command applied while the history fills.
#[derive(Debug, Clone)]
pub struct DeePCTip {
    deepc: DeePCController,
    warmup: BaselineController,
}

impl DeePCTip {
    pub fn new(template: Arc<DeePCTemplate>, warmup: BaselineController) -> Self {
        Self {
            deepc: DeePCController::new(template),
            warmup,
        }
    }

    pub fn from_dataset(cfg: &LabConfig, dataset: &TrajectoryDataset) -> Result<Self> {
        let partition = dataset.partition(cfg.deepc.t_ini, cfg.deepc.horizon)?;
        let template = DeePCTemplate::assemble(&cfg.deepc.to_config(), &partition)?;
        Ok(Self::new(
            Arc::new(template),
            BaselineController::new(cfg.geometry)?,
        ))
    }

    pub fn template(&self) -> &Arc<DeePCTemplate> {
        self.deepc.template()
    }
}

impl TipController for DeePCTip {
    fn name(&self) -> &'static str {
        "deepc"
    }

    fn horizon(&self) -> usize {
        self.deepc.template().config().horizon
    }

    fn decide(&mut self, window: &DMatrix<f64>) -> Result<Decision> {
        if !self.deepc.is_ready() {
            let mut d = self.warmup.decide(window)?;
            d.status = StepStatus::Warmup;
            return Ok(d);
        }
        let action = self.deepc.control(window)?;
        let status = match action.result.solver_status {
            QpStatus::Optimal => StepStatus::Optimal,
            QpStatus::MaxIterations => StepStatus::MaxIterations,
            QpStatus::Infeasible => StepStatus::Infeasible,
        };
        Ok(Decision {
            input: [action.input[0], action.input[1], action.input[2]],
            status,
            objective: if action.fallback {
                f64::NAN
            } else {
                action.result.objective
            },
        })
    }

    fn observe(&mut self, input: &[f64; 3], measured: &Vector3<f64>) -> Result<()> {
        let u = DVector::from_column_slice(input);
        let y = DVector::from_column_slice(measured.as_slice());
        Ok(self.deepc.advance(&u, &y)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Time of the measurement, s.
    pub time: f64,
    pub reference: [f64; 3],
    pub input: [f64; 3],
    pub output: [f64; 3],
    /// Angles of the measured tip's projection onto the CC shell.
    pub phi_deg: f64,
    pub gamma_deg: f64,
    pub status: StepStatus,
    pub objective: f64,
    pub solve_ms: f64,
}

/// Contiguous steps sharing one fixed-point reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageWindow {
    pub start: usize,
    pub len: usize,
    pub phi_deg: f64,
    pub gamma_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    FixedPoint,
    Circle,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::FixedPoint => "fixed-point",
            Task::Circle => "track-circle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub task: Task,
    pub controller: String,
    pub seed: u64,
    /// Configuration text the run was produced with.
    pub config: String,
    pub stages: Vec<StageWindow>,
    pub records: Vec<StepRecord>,
}

impl RunLog {
    pub fn references(&self) -> Vec<Vector3<f64>> {
        self.records.iter().map(|r| r.reference.into()).collect()
    }

    pub fn outputs(&self) -> Vec<Vector3<f64>> {
        self.records.iter().map(|r| r.output.into()).collect()
    }
}

/// How the reference window is filled beyond the current step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Preview {
    /// Current reference repeated.
    Hold,
    /// Upcoming references, the last one repeated past the end.
    Ahead,
}

fn drive(
    controller: &mut dyn TipController,
    sim_config: ArmSimConfig,
    seed: u64,
    references: &[Vector3<f64>],
    preview: Preview,
) -> Result<Vec<StepRecord>> {
    let mut sim = ArmSimulator::new(sim_config, seed ^ RUN_STREAM)?;
    let length = sim_config.geometry.length;
    let horizon = controller.horizon();
    let mut window = DMatrix::zeros(3, horizon);
    let mut records = Vec::with_capacity(references.len());
    for (k, reference) in references.iter().enumerate() {
        for j in 0..horizon {
            let idx = match preview {
                Preview::Hold => k,
                Preview::Ahead => (k + j).min(references.len() - 1),
            };
            window.set_column(j, &references[idx]);
        }
        let started = Instant::now();
        let decision = controller.decide(&window)?;
        let solve_ms = started.elapsed().as_secs_f64() * 1e3;
        let measured = sim.step(&decision.input).tip;
        controller.observe(&decision.input, &measured)?;
        let (angles, _) = cc_project(&measured, length);
        let mut gamma_deg = angles.gamma_g.to_degrees();
        if gamma_deg > 180.0 {
            gamma_deg -= 360.0;
        }
        records.push(StepRecord {
            step: k,
            time: sim.state().time,
            reference: (*reference).into(),
            input: decision.input,
            output: measured.into(),
            phi_deg: angles.phi_b.to_degrees(),
            gamma_deg,
            status: decision.status,
            objective: decision.objective,
            solve_ms,
        });
    }
    Ok(records)
}

/// Regulates the tip through `stages`, each a constant angle reference.
pub fn run_fixed_point(
    cfg: &LabConfig,
    stages: &[Stage],
    controller: &mut dyn TipController,
    seed: u64,
) -> Result<RunLog> {
    if stages.is_empty() {
        return Err(LabError::Invalid("at least one stage is required".into()));
    }
    let mut references = Vec::new();
    let mut windows = Vec::with_capacity(stages.len());
    for stage in stages {
        stage.validate()?;
        let tip = stage.tip(cfg.geometry.length)?;
        windows.push(StageWindow {
            start: references.len(),
            len: stage.steps,
            phi_deg: stage.phi_deg,
            gamma_deg: stage.gamma_deg,
        });
        references.extend(std::iter::repeat_n(tip, stage.steps));
    }
    let records = drive(
        controller,
        cfg.sim_config(),
        seed,
        &references,
        Preview::Hold,
    )?;
    Ok(RunLog {
        task: Task::FixedPoint,
        controller: controller.name().to_string(),
        seed,
        config: cfg.to_text(),
        stages: windows,
        records,
    })
}

/// Tracks `circle` on the CC shell for the configured number of laps.
pub fn run_circle(
    cfg: &LabConfig,
    circle: &CircleSpec,
    controller: &mut dyn TipController,
    seed: u64,
) -> Result<RunLog> {
    let lap = circle.waypoints(cfg.geometry.length)?;
    let references: Vec<Vector3<f64>> = lap
        .iter()
        .cycle()
        .take(lap.len() * circle.laps)
        .copied()
        .collect();
    let records = drive(
        controller,
        cfg.sim_config(),
        seed,
        &references,
        Preview::Ahead,
    )?;
    Ok(RunLog {
        task: Task::Circle,
        controller: controller.name().to_string(),
        seed,
        config: cfg.to_text(),
        stages: Vec::new(),
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Baseline,
    DeePC,
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "baseline" => Ok(ControllerKind::Baseline),
            "deepc" => Ok(ControllerKind::DeePC),
            other => Err(format!(
                "unknown controller `{other}` (expected deepc or baseline)"
            )),
        }
    }
}

/// Builds a controller; DeePC needs collected data.
pub fn make_controller(
    kind: ControllerKind,
    cfg: &LabConfig,
    dataset: Option<&TrajectoryDataset>,
) -> Result<Box<dyn TipController>> {
    match kind {
        ControllerKind::Baseline => Ok(Box::new(BaselineController::new(cfg.geometry)?)),
        ControllerKind::DeePC => {
            let data = dataset
                .ok_or_else(|| LabError::Invalid("DeePC requires a collected dataset".into()))?;
            Ok(Box::new(DeePCTip::from_dataset(cfg, data)?))
        }
    }
}

/// Wraps an angle difference into (−180°, 180°].
pub fn angle_error_deg(measured: f64, reference: f64) -> f64 {
    let d = (measured - reference).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}
