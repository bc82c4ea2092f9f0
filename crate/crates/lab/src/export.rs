//! File formats: run CSV, metrics JSON, trajectory SVG and dataset CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use deepc_core::datasets::TrajectoryDataset;
use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::experiment::RunLog;
use crate::metrics::RunMetrics;

pub const RUN_HEADER: [&str; 16] = [
    "step",
    "time_s",
    "ref_x",
    "ref_y",
    "ref_z",
    "y_x",
    "y_y",
    "y_z",
    "u_1",
    "u_2",
    "u_3",
    "phi_b_deg",
    "gamma_g_deg",
    "status",
    "objective",
    "solve_ms",
];

pub const DATASET_HEADER: [&str; 7] = ["step", "u_1", "u_2", "u_3", "y_x", "y_y", "y_z"];

/// Shortest decimal that parses back to the same `f64`.
fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedRun {
    pub run_csv: PathBuf,
    pub metrics_json: PathBuf,
    pub trajectory_svg: PathBuf,
}

/// Writes `run.csv`, `metrics.json` and `trajectory.svg` into `out_dir`.
///
/// With `timing` off the `solve_ms` column holds `nan`, which makes the CSV
/// a pure function of configuration and seed.
pub fn export_run(
    log: &RunLog,
    metrics: &RunMetrics,
    out_dir: &Path,
    timing: bool,
) -> Result<ExportedRun> {
    fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
    let paths = ExportedRun {
        run_csv: out_dir.join("run.csv"),
        metrics_json: out_dir.join("metrics.json"),
        trajectory_svg: out_dir.join("trajectory.svg"),
    };
    write_run_csv(log, &paths.run_csv, timing)?;
    let json = serde_json::to_string_pretty(metrics)
        .map_err(|e| LabError::Invalid(format!("cannot serialize metrics: {e}")))?;
    fs::write(&paths.metrics_json, json + "\n")
        .map_err(|e| LabError::io(&paths.metrics_json, e))?;
    fs::write(&paths.trajectory_svg, trajectory_svg(log))
        .map_err(|e| LabError::io(&paths.trajectory_svg, e))?;
    Ok(paths)
}

pub fn write_run_csv(log: &RunLog, path: &Path, timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::csv(path, e))?;
    w.write_record(RUN_HEADER)
        .map_err(|e| LabError::csv(path, e))?;
    for r in &log.records {
        let mut row = vec![r.step.to_string(), num(r.time)];
        row.extend(r.reference.iter().map(|v| num(*v)));
        row.extend(r.output.iter().map(|v| num(*v)));
        row.extend(r.input.iter().map(|v| num(*v)));
        row.push(num(r.phi_deg));
        row.push(num(r.gamma_deg));
        row.push(r.status.as_str().into());
        row.push(num(r.objective));
        row.push(num(if timing { r.solve_ms } else { f64::NAN }));
        w.write_record(&row).map_err(|e| LabError::csv(path, e))?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// x-y projection of reference and measured tip paths.
pub fn trajectory_svg(log: &RunLog) -> String {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 40.0;
    let refs: Vec<(f64, f64)> = log
        .records
        .iter()
        .map(|r| (r.reference[0], r.reference[1]))
        .collect();
    let meas: Vec<(f64, f64)> = log
        .records
        .iter()
        .map(|r| (r.output[0], r.output[1]))
        .collect();
    let (mut lo, mut hi) = (
        (f64::INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for &(x, y) in refs.iter().chain(&meas) {
        lo = (lo.0.min(x), lo.1.min(y));
        hi = (hi.0.max(x), hi.1.max(y));
    }
    let span = (hi.0 - lo.0).max(hi.1 - lo.1).max(1.0);
    let centre = (0.5 * (lo.0 + hi.0), 0.5 * (lo.1 + hi.1));
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let map = |(x, y): (f64, f64)| {
        (
            SIZE / 2.0 + (x - centre.0) * scale,
            SIZE / 2.0 - (y - centre.1) * scale,
        )
    };
    let polyline = |pts: &[(f64, f64)], style: &str| {
        let mut s = String::from("  <polyline fill=\"none\" ");
        s.push_str(style);
        s.push_str(" points=\"");
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = map(*p);
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:.2},{y:.2}");
        }
        s.push_str("\"/>\n");
        s
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(
        svg,
        "  <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{} {}: tip x-y (mm), span {:.1}</text>",
        log.controller,
        log.task.as_str(),
        span
    );
    svg.push_str(&polyline(
        &refs,
        "stroke=\"#888888\" stroke-width=\"2\" stroke-dasharray=\"6 4\"",
    ));
    svg.push_str(&polyline(&meas, "stroke=\"#c0392b\" stroke-width=\"1.2\""));
    let _ = writeln!(
        svg,
        "  <text x=\"{MARGIN}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#888888\">reference (dashed)</text>",
        SIZE - 24.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#c0392b\">measured</text>",
        SIZE / 2.0,
        SIZE - 24.0
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn write_dataset_csv(dataset: &TrajectoryDataset, path: &Path) -> Result<()> {
    if dataset.input_dim() != 3 || dataset.output_dim() != 3 {
        return Err(LabError::Invalid(
            "dataset CSV holds three inputs and three outputs".into(),
        ));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::csv(path, e))?;
    w.write_record(DATASET_HEADER)
        .map_err(|e| LabError::csv(path, e))?;
    let (u, y) = (dataset.inputs(), dataset.outputs());
    for k in 0..dataset.len() {
        let mut row = vec![k.to_string()];
        row.extend(u.column(k).iter().map(|v| num(*v)));
        row.extend(y.column(k).iter().map(|v| num(*v)));
        w.write_record(&row).map_err(|e| LabError::csv(path, e))?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn read_dataset_csv(path: &Path, sample_period: f64) -> Result<TrajectoryDataset> {
    let mut r = csv::Reader::from_path(path).map_err(|e| LabError::csv(path, e))?;
    let header = r.headers().map_err(|e| LabError::csv(path, e))?;
    if header.iter().ne(DATASET_HEADER) {
        return Err(LabError::Invalid(format!(
            "{}: expected header `{}`",
            path.display(),
            DATASET_HEADER.join(",")
        )));
    }
    let mut columns: Vec<f64> = Vec::new();
    for (k, row) in r.records().enumerate() {
        let row = row.map_err(|e| LabError::csv(path, e))?;
        let bad =
            |what: &str| LabError::Invalid(format!("{}: row {}: {what}", path.display(), k + 2));
        let step: usize = row[0]
            .trim()
            .parse()
            .map_err(|_| bad("step is not an integer"))?;
        if step != k {
            return Err(bad(&format!("expected step {k}, found {step}")));
        }
        for field in row.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(&format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(bad("non-finite value"));
            }
            columns.push(v);
        }
    }
    let t = columns.len() / 6;
    let all = DMatrix::from_column_slice(6, t, &columns);
    Ok(TrajectoryDataset::new(
        all.rows(0, 3).into_owned(),
        all.rows(3, 3).into_owned(),
        sample_period,
    )?)
}
