//! Tracking and regulation metrics computed from a [`RunLog`].

use nalgebra::Vector3;
use serde::Serialize;

use crate::config::MetricsSpec;
use crate::error::{LabError, Result};
use crate::experiment::{angle_error_deg, RunLog, StepStatus};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageMetrics {
    pub phi_ref_deg: f64,
    pub gamma_ref_deg: f64,
    pub steps: usize,
    /// Mean |φ_b error| over the final quarter of the stage.
    pub steady_state_phi_error_deg: f64,
    /// Mean |γ_g error| over the final quarter of the stage.
    pub steady_state_gamma_error_deg: f64,
    pub steady_state_tip_error_mm: f64,
    /// Steps from stage start until the angle errors stay inside the band.
    pub settling_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub task: String,
    pub controller: String,
    pub seed: u64,
    pub steps: usize,
    pub warmup_steps: usize,
    pub rmse_mm: f64,
    pub max_error_mm: f64,
    /// Steps until the tip error stays inside the millimetre band.
    pub settling_steps: Option<usize>,
    pub stages: Vec<StageMetrics>,
    /// Mean per-step controller time; `None` when timing was not recorded.
    pub mean_solve_time_s: Option<f64>,
    pub fallback_steps: usize,
    /// Applied inputs outside [0, 90].
    pub input_violations: usize,
}

/// Root-mean-square Euclidean error after skipping `warmup` samples.
pub fn rmse(reference: &[Vector3<f64>], measured: &[Vector3<f64>], warmup: usize) -> Result<f64> {
    let errors = tip_errors(reference, measured)?;
    let tail = errors
        .get(warmup..)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| {
            LabError::Invalid(format!(
                "warm-up of {warmup} steps leaves nothing of a {}-step log",
                errors.len()
            ))
        })?;
    Ok((tail.iter().map(|e| e * e).sum::<f64>() / tail.len() as f64).sqrt())
}

fn tip_errors(reference: &[Vector3<f64>], measured: &[Vector3<f64>]) -> Result<Vec<f64>> {
    if reference.len() != measured.len() {
        return Err(LabError::Invalid(format!(
            "reference has {} samples but the log has {}",
            reference.len(),
            measured.len()
        )));
    }
    if reference.is_empty() {
        return Err(LabError::Invalid("log is empty".into()));
    }
    Ok(reference
        .iter()
        .zip(measured)
        .map(|(r, y)| (y - r).norm())
        .collect())
}

/// First index after which every flag is true, if any.
fn settled_from(
    inside: impl DoubleEndedIterator<Item = bool> + ExactSizeIterator,
) -> Option<usize> {
    let len = inside.len();
    let trailing = inside.rev().take_while(|ok| *ok).count();
    (trailing > 0).then_some(len - trailing)
}

pub fn compute_metrics(log: &RunLog, spec: &MetricsSpec, warmup: usize) -> Result<RunMetrics> {
    let reference = log.references();
    let measured = log.outputs();
    let errors = tip_errors(&reference, &measured)?;
    let rmse_mm = rmse(&reference, &measured, warmup)?;
    let max_error_mm = errors[warmup..].iter().copied().fold(0.0, f64::max);
    let settling_steps = settled_from(errors.iter().map(|e| *e <= spec.settle_band_mm));

    let mut stages = Vec::with_capacity(log.stages.len());
    let mut covered = 0;
    for w in &log.stages {
        if w.start != covered || w.len == 0 {
            return Err(LabError::Invalid("stage windows must tile the log".into()));
        }
        covered += w.len;
        let recs = log
            .records
            .get(w.start..w.start + w.len)
            .ok_or_else(|| LabError::Invalid("stage extends past the log".into()))?;
        // γ is meaningless for a straight arm.
        let gamma_defined = w.phi_deg.abs() > 1e-9;
        let phi_err: Vec<f64> = recs.iter().map(|r| (r.phi_deg - w.phi_deg).abs()).collect();
        let gamma_err: Vec<f64> = recs
            .iter()
            .map(|r| {
                if gamma_defined {
                    angle_error_deg(r.gamma_deg, w.gamma_deg).abs()
                } else {
                    0.0
                }
            })
            .collect();
        let quarter = (w.len / 4).max(1);
        let tail = w.len - quarter;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let band = spec.settle_band_deg;
        stages.push(StageMetrics {
            phi_ref_deg: w.phi_deg,
            gamma_ref_deg: w.gamma_deg,
            steps: w.len,
            steady_state_phi_error_deg: mean(&phi_err[tail..]),
            steady_state_gamma_error_deg: mean(&gamma_err[tail..]),
            steady_state_tip_error_mm: mean(&errors[w.start + tail..w.start + w.len]),
            settling_steps: settled_from(
                phi_err
                    .iter()
                    .zip(&gamma_err)
                    .map(|(p, g)| *p <= band && *g <= band),
            ),
        });
    }
    if !log.stages.is_empty() && covered != log.records.len() {
        return Err(LabError::Invalid("stage windows must tile the log".into()));
    }

    let solving: Vec<f64> = log
        .records
        .iter()
        .filter(|r| r.status != StepStatus::Warmup)
        .map(|r| r.solve_ms)
        .collect();
    let mean_solve_time_s = (!solving.is_empty() && solving.iter().all(|t| t.is_finite()))
        .then(|| solving.iter().sum::<f64>() / solving.len() as f64 / 1e3);

    Ok(RunMetrics {
        task: log.task.as_str().to_string(),
        controller: log.controller.clone(),
        seed: log.seed,
        steps: log.records.len(),
        warmup_steps: warmup,
        rmse_mm,
        max_error_mm,
        settling_steps,
        stages,
        mean_solve_time_s,
        fallback_steps: log
            .records
            .iter()
            .filter(|r| r.status.is_fallback())
            .count(),
        input_violations: log
            .records
            .iter()
            .flat_map(|r| r.input)
            .filter(|u| !(0.0..=90.0).contains(u))
            .count(),
    })
}
