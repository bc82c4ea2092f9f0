//! Subcommand implementations shared by the binary and the tests.

use std::fs;
use std::path::{Path, PathBuf};

use deepc_core::datasets::{is_persistently_exciting, TrajectoryDataset};
use serde::Serialize;

use crate::config::LabConfig;
use crate::error::{LabError, Result};
use crate::experiment::{
    collect_dataset, make_controller, run_circle, run_fixed_point, ControllerKind, RunLog, Task,
};
use crate::export::{export_run, read_dataset_csv, write_dataset_csv, ExportedRun};
use crate::metrics::{compute_metrics, RunMetrics};

/// Resolved options common to every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: LabConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    pub fn new(config_path: Option<&Path>, seed: Option<u64>, out: PathBuf) -> Result<Self> {
        let config = match config_path {
            Some(p) => LabConfig::load(p)?,
            None => LabConfig::default(),
        };
        let seed = seed.unwrap_or(config.seed);
        Ok(Self { config, seed, out })
    }

    fn ensure_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| LabError::io(&self.out, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeReport {
    pub samples: usize,
    pub order: usize,
    pub rank: usize,
    pub required_rank: usize,
    pub persistently_exciting: bool,
}

pub fn pe_report(dataset: &TrajectoryDataset, order: usize) -> Result<PeReport> {
    let required_rank = dataset.input_dim() * order;
    if dataset.len() < order {
        return Ok(PeReport {
            samples: dataset.len(),
            order,
            rank: 0,
            required_rank,
            persistently_exciting: false,
        });
    }
    let (ok, rank) = is_persistently_exciting(dataset.inputs(), order)?;
    Ok(PeReport {
        samples: dataset.len(),
        order,
        rank,
        required_rank,
        persistently_exciting: ok,
    })
}

/// Collects a dataset into `out/dataset.csv`.
pub fn collect(ctx: &Context) -> Result<(PathBuf, PeReport)> {
    ctx.ensure_out()?;
    let (dataset, excitation) = collect_dataset(&ctx.config, ctx.seed)?;
    let path = ctx.out.join("dataset.csv");
    write_dataset_csv(&dataset, &path)?;
    let report = pe_report(&dataset, excitation.pe_order)?;
    Ok((path, report))
}

/// Loads `dataset` if given, otherwise collects a fresh one and stores it in `out`.
pub fn obtain_dataset(ctx: &Context, dataset: Option<&Path>) -> Result<TrajectoryDataset> {
    match dataset {
        Some(p) => read_dataset_csv(p, ctx.config.dt),
        None => {
            ctx.ensure_out()?;
            let (data, _) = collect_dataset(&ctx.config, ctx.seed)?;
            write_dataset_csv(&data, &ctx.out.join("dataset.csv"))?;
            Ok(data)
        }
    }
}

pub fn check_pe(ctx: &Context, dataset: Option<&Path>, order: Option<usize>) -> Result<PeReport> {
    let data = obtain_dataset(ctx, dataset)?;
    let order = order.unwrap_or(
        ctx.config
            .excitation
            .pe_order(ctx.config.deepc.t_ini, ctx.config.deepc.horizon),
    );
    let report = pe_report(&data, order)?;
    ctx.ensure_out()?;
    let path = ctx.out.join("pe.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| LabError::Invalid(format!("cannot serialize report: {e}")))?;
    fs::write(&path, json + "\n").map_err(|e| LabError::io(&path, e))?;
    Ok(report)
}

/// Runs one task with one controller.
pub fn run_task(
    ctx: &Context,
    task: Task,
    kind: ControllerKind,
    dataset: Option<&TrajectoryDataset>,
) -> Result<(RunLog, RunMetrics)> {
    let cfg = &ctx.config;
    let mut controller = make_controller(kind, cfg, dataset)?;
    let log = match task {
        Task::FixedPoint => run_fixed_point(cfg, &cfg.stages, controller.as_mut(), ctx.seed)?,
        Task::Circle => run_circle(cfg, &cfg.circle, controller.as_mut(), ctx.seed)?,
    };
    let metrics = compute_metrics(&log, &cfg.metrics, cfg.warmup_steps())?;
    Ok((log, metrics))
}

/// `fixed-point` and `track-circle`: one run exported to `out`.
pub fn run_and_export(
    ctx: &Context,
    task: Task,
    kind: ControllerKind,
    dataset: Option<&Path>,
    timing: bool,
) -> Result<(RunMetrics, ExportedRun)> {
    let data = match kind {
        ControllerKind::DeePC => Some(obtain_dataset(ctx, dataset)?),
        ControllerKind::Baseline => None,
    };
    let (log, metrics) = run_task(ctx, task, kind, data.as_ref())?;
    let files = export_run(&log, &metrics, &ctx.out, timing)?;
    Ok((metrics, files))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub task: String,
    pub baseline: RunMetrics,
    pub deepc: RunMetrics,
}

/// Runs both controllers on each task, exporting to `out/<task>/<controller>`.
pub fn compare(
    ctx: &Context,
    tasks: &[Task],
    dataset: Option<&Path>,
    timing: bool,
) -> Result<Vec<Comparison>> {
    let data = obtain_dataset(ctx, dataset)?;
    let mut rows = Vec::new();
    for &task in tasks {
        let mut pair = Vec::with_capacity(2);
        for kind in [ControllerKind::Baseline, ControllerKind::DeePC] {
            let (log, metrics) = run_task(ctx, task, kind, Some(&data))?;
            export_run(
                &log,
                &metrics,
                &ctx.out.join(task.as_str()).join(&log.controller),
                timing,
            )?;
            pair.push(metrics);
        }
        let deepc = pair.pop().expect("two runs");
        let baseline = pair.pop().expect("two runs");
        rows.push(Comparison {
            task: task.as_str().into(),
            baseline,
            deepc,
        });
    }
    let path = ctx.out.join("comparison.json");
    let json = serde_json::to_string_pretty(&rows)
        .map_err(|e| LabError::Invalid(format!("cannot serialize comparison: {e}")))?;
    fs::write(&path, json + "\n").map_err(|e| LabError::io(&path, e))?;
    Ok(rows)
}

/// Side-by-side text table of a comparison.
pub fn comparison_table(rows: &[Comparison]) -> String {
    let fmt_time = |t: Option<f64>| t.map_or("-".to_string(), |t| format!("{:.3}", t * 1e3));
    let mut out = format!(
        "{:<14} {:<9} {:>10} {:>10} {:>9} {:>9}\n",
        "task", "ctrl", "rmse_mm", "max_mm", "solve_ms", "fallback"
    );
    for row in rows {
        for m in [&row.baseline, &row.deepc] {
            out.push_str(&format!(
                "{:<14} {:<9} {:>10.3} {:>10.3} {:>9} {:>9}\n",
                row.task,
                m.controller,
                m.rmse_mm,
                m.max_error_mm,
                fmt_time(m.mean_solve_time_s),
                m.fallback_steps
            ));
            for (i, s) in m.stages.iter().enumerate() {
                out.push_str(&format!(
                    "{:<14} {:<9}   stage {} ({:.0}°, {:.0}°): |φ err| {:.3}°, |γ err| {:.3}°\n",
                    "",
                    "",
                    i + 1,
                    s.phi_ref_deg,
                    s.gamma_ref_deg,
                    s.steady_state_phi_error_deg,
                    s.steady_state_gamma_error_deg
                ));
            }
        }
    }
    out
}
