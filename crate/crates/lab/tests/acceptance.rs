//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::time::Instant;

use deepc_core::datasets::{build_hankel, is_persistently_exciting, RepresentabilityTest};
use deepc_core::deepc::{DeePCConfig, DeePCTemplate, HistoryBuffer, Reduction};
use deepc_core::qp::QpStatus;
use deepc_core::soft_arm::{cable_lengths, cc_forward, cc_inverse, ArmGeometry, LtiPlant};
use deepc_core::svd_reduction::factorize_and_condense;
use deepc_lab::config::{LabConfig, ReductionKind};
use deepc_lab::excitation::{generate_excitation, ExcitationSpec};
use deepc_lab::experiment::{
    collect_dataset, run_circle, run_fixed_point, DeePCTip, RunLog, StepStatus,
};
use deepc_lab::export::write_run_csv;
use deepc_lab::metrics::{compute_metrics, RunMetrics};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

fn outputs(plant: &LtiPlant, x0: &DVector<f64>, u: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    common::closed_form_outputs(plant.a(), plant.b(), plant.c(), plant.d(), x0, u)
}

fn fundamental_lemma() -> Verdict {
    let started = Instant::now();
    let depth = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_own, mut least_foreign) = (0.0f64, f64::INFINITY);
    for i in 0..20 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=2);
        let p = rng.random_range(1..=2);
        let plant = LtiPlant::random(n, m, p, 0.95, &mut rng).unwrap();
        let other = LtiPlant::random(n, m, p, 0.95, &mut rng).unwrap();
        let spec = ExcitationSpec {
            total_steps: 200,
            ..ExcitationSpec::default()
        };
        let ex = generate_excitation(&spec, m, n + depth, 100 + i).unwrap();
        let (ok, _) = is_persistently_exciting(&ex.inputs, n + depth).unwrap();
        if !ok {
            return verdict(
                false,
                format!("plant {i}: excitation not PE of order {}", n + depth),
            );
        }
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (y, _) = outputs(&plant, &x0, &ex.inputs);
        let test = RepresentabilityTest::new(
            &build_hankel(&ex.inputs, depth).unwrap(),
            &build_hankel(&y, depth).unwrap(),
        )
        .unwrap();
        for _ in 0..100 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let u = uniform(&mut rng, m, depth, -1.0, 1.0);
            let own = outputs(&plant, &x, &u).0;
            let foreign = outputs(&other, &x, &u).0;
            worst_own = worst_own.max(test.residual(&u, &own).unwrap());
            least_foreign = least_foreign.min(test.residual(&u, &foreign).unwrap());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        worst_own <= 1e-8 && least_foreign > 1e-3 && secs <= 30.0,
        format!(
            "max own residual {worst_own:.2e} (<= 1e-8), min foreign residual {least_foreign:.2e} (> 1e-3), {secs:.1} s"
        ),
    )
}

fn deepc_mpc_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (n, m, p, t_ini, horizon) = (3, 2, 2, 4, 8);
    let plant = LtiPlant::random(n, m, p, 0.9, &mut rng).unwrap();
    let len = (m + 1) * (t_ini + horizon + n) + 60;
    let u_data = uniform(&mut rng, m, len, -1.0, 1.0);
    let (y_data, _) = outputs(&plant, &DVector::zeros(n), &u_data);
    let data = deepc_core::datasets::TrajectoryDataset::new(u_data, y_data, 1.0).unwrap();
    let config = DeePCConfig::new(
        t_ini,
        horizon,
        10.0,
        0.1,
        0.0,
        f64::INFINITY,
        DVector::from_element(m, -1.0),
        DVector::from_element(m, 1.0),
        p,
    );
    let template =
        DeePCTemplate::assemble(&config, &data.partition(t_ini, horizon).unwrap()).unwrap();
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let u_hist = uniform(&mut rng, m, t_ini, -1.0, 1.0);
        let (y_hist, x_now) = outputs(&plant, &x0, &u_hist);
        let mut history = HistoryBuffer::new(t_ini, m, p);
        for k in 0..t_ini {
            history
                .push(
                    &u_hist.column(k).into_owned(),
                    &y_hist.column(k).into_owned(),
                )
                .unwrap();
        }
        let reference = uniform(&mut rng, p, horizon, -3.0, 3.0);
        let r = template.step(&history, &reference, None).unwrap();
        if r.solver_status != QpStatus::Optimal {
            return verdict(
                false,
                format!("trial {trial}: solver {}", r.solver_status.as_str()),
            );
        }
        let oracle = common::mpc_inputs(
            plant.a(),
            plant.b(),
            plant.c(),
            &x_now,
            &config.output_weight,
            &config.input_weight,
            &reference,
            &config.u_lower,
            &config.u_upper,
        );
        worst = worst.max((r.optimal_inputs.column(0) - oracle.column(0)).amax());
    }
    verdict(
        worst <= 1e-6,
        format!("max first-input gap {worst:.2e} over 50 trials (<= 1e-6)"),
    )
}

fn deepc_run(
    cfg: &LabConfig,
    data: &deepc_core::datasets::TrajectoryDataset,
    circle: bool,
) -> (RunLog, RunMetrics) {
    let mut ctl = DeePCTip::from_dataset(cfg, data).unwrap();
    let log = if circle {
        run_circle(cfg, &cfg.circle, &mut ctl, cfg.seed).unwrap()
    } else {
        run_fixed_point(cfg, &cfg.stages, &mut ctl, cfg.seed).unwrap()
    };
    let metrics = compute_metrics(&log, &cfg.metrics, cfg.warmup_steps()).unwrap();
    (log, metrics)
}

fn baseline_run(cfg: &LabConfig, circle: bool) -> (RunLog, RunMetrics) {
    let mut ctl = deepc_core::baseline::BaselineController::new(cfg.geometry).unwrap();
    let log = if circle {
        run_circle(cfg, &cfg.circle, &mut ctl, cfg.seed).unwrap()
    } else {
        run_fixed_point(cfg, &cfg.stages, &mut ctl, cfg.seed).unwrap()
    };
    let metrics = compute_metrics(&log, &cfg.metrics, cfg.warmup_steps()).unwrap();
    (log, metrics)
}

fn mean_solve_ms(log: &RunLog) -> f64 {
    let t: Vec<f64> = log
        .records
        .iter()
        .filter(|r| r.status != StepStatus::Warmup)
        .map(|r| r.solve_ms)
        .collect();
    t.iter().sum::<f64>() / t.len() as f64
}

fn svd_reduction(logs: &mut Vec<RunLog>) -> Verdict {
    let cfg = LabConfig::default();
    let (data, _) = collect_dataset(&cfg, cfg.seed).unwrap();
    let partition = data.partition(cfg.deepc.t_ini, cfg.deepc.horizon).unwrap();
    let columns = partition.ncols();

    // Exactness: full data against condensation at the numerical rank.
    let full_cfg = cfg.deepc.to_config();
    let full = DeePCTemplate::assemble(&full_cfg, &partition).unwrap();
    let probe = factorize_and_condense(&partition, 1).unwrap();
    let rank = probe.numerical_rank();
    let mut exact_cfg = full_cfg.clone();
    exact_cfg.reduction = Reduction::Rank(rank);
    let exact = DeePCTemplate::assemble(&exact_cfg, &partition).unwrap();
    let (u, y) = (data.inputs(), data.outputs());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut gap = 0.0f64;
    for _ in 0..10 {
        let start = rng.random_range(0..data.len() - cfg.deepc.t_ini);
        let mut history = HistoryBuffer::new(cfg.deepc.t_ini, 3, 3);
        for k in start..start + cfg.deepc.t_ini {
            history
                .push(&u.column(k).into_owned(), &y.column(k).into_owned())
                .unwrap();
        }
        let tip = cc_forward(rng.random_range(0.1..1.0), rng.random_range(0.0..TAU), 90.0).unwrap();
        let reference = DMatrix::from_fn(3, cfg.deepc.horizon, |i, _| tip[i]);
        let a = full.step(&history, &reference, None).unwrap();
        let b = exact.step(&history, &reference, None).unwrap();
        gap = gap.max((&a.optimal_inputs - &b.optimal_inputs).amax());
    }

    // Closed loop: energy-truncated against full on the circle.
    let (full_log, full_m) = deepc_run(&cfg, &data, true);
    let mut reduced = cfg.clone();
    reduced.deepc.reduction = ReductionKind::Energy;
    let kept = DeePCTemplate::assemble(&reduced.deepc.to_config(), &partition)
        .unwrap()
        .condensed_rank()
        .unwrap();
    let (red_log, red_m) = deepc_run(&reduced, &data, true);
    let degradation = red_m.rmse_mm / full_m.rmse_mm - 1.0;
    let speedup = mean_solve_ms(&full_log) / mean_solve_ms(&red_log);
    let pass = gap <= 1e-6 && columns >= 1000 && degradation <= 0.10 && speedup >= 3.0;
    let detail = format!(
        "rank {rank}: max input gap {gap:.2e} (<= 1e-6); K = {columns}; 99.9% energy keeps r = {kept}: \
         RMSE {:.3} -> {:.3} mm ({:+.1}%, <= +10%), {} fallback steps, solve {:.3} -> {:.3} ms ({speedup:.2}x, >= 3x)",
        full_m.rmse_mm,
        red_m.rmse_mm,
        100.0 * degradation,
        red_m.fallback_steps,
        mean_solve_ms(&full_log),
        mean_solve_ms(&red_log)
    );
    logs.push(full_log);
    logs.push(red_log);
    verdict(pass, detail)
}

fn fixed_point(logs: &mut Vec<RunLog>) -> Verdict {
    let started = Instant::now();
    let cfg = LabConfig::default();
    let (data, _) = collect_dataset(&cfg, cfg.seed).unwrap();
    let (log, m) = deepc_run(&cfg, &data, false);
    let secs = started.elapsed().as_secs_f64();
    let stages_ok = m.stages.iter().all(|s| {
        s.steps <= 200
            && s.steady_state_phi_error_deg <= 2.0
            && s.steady_state_gamma_error_deg <= 5.0
    });
    let per_stage: Vec<String> = m
        .stages
        .iter()
        .map(|s| {
            format!(
                "({:.0}°, {:.0}°): |φ| {:.2}°, |γ| {:.2}°",
                s.phi_ref_deg,
                s.gamma_ref_deg,
                s.steady_state_phi_error_deg,
                s.steady_state_gamma_error_deg
            )
        })
        .collect();
    logs.push(log);
    verdict(
        stages_ok && secs <= 60.0,
        format!("{} (<= 2°, <= 5°); {secs:.1} s", per_stage.join("; ")),
    )
}

fn tracking(logs: &mut Vec<RunLog>) -> Verdict {
    let cfg = LabConfig::default();
    let (data, _) = collect_dataset(&cfg, cfg.seed).unwrap();
    let (dlog, dm) = deepc_run(&cfg, &data, true);
    let (blog, bm) = baseline_run(&cfg, true);
    let mut nominal = cfg.clone();
    nominal.disturbances_on = false;
    let (nlog, nm) = baseline_run(&nominal, true);
    logs.extend([dlog, blog, nlog]);
    let ratio = dm.rmse_mm / bm.rmse_mm;
    verdict(
        ratio <= 0.5 && nm.rmse_mm <= 0.5,
        format!(
            "DeePC {:.3} mm vs baseline {:.3} mm (ratio {ratio:.2}, <= 0.5); nominal baseline {:.2e} mm (<= 0.5)",
            dm.rmse_mm, bm.rmse_mm, nm.rmse_mm
        ),
    )
}

fn constraints(logs: &[RunLog]) -> Verdict {
    let applied: usize = logs.iter().map(|l| l.records.len() * 3).sum();
    let violations = logs
        .iter()
        .flat_map(|l| &l.records)
        .flat_map(|r| r.input)
        .filter(|u| !(0.0..=90.0).contains(u))
        .count();
    verdict(
        violations == 0 && applied > 0,
        format!(
            "{violations} violations in {applied} applied inputs over {} runs",
            logs.len()
        ),
    )
}

fn kinematics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let length = 90.0;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let phi = rng.random_range(1e-6..PI - 1e-3);
        let gamma = rng.random_range(0.0..TAU);
        let tip = cc_forward(phi, gamma, length).unwrap();
        let back = cc_inverse(&tip, length).unwrap();
        let dg = (back.gamma_g - gamma + PI).rem_euclid(TAU) - PI;
        worst = worst.max((back.phi_b - phi).abs()).max(dg.abs());
    }
    let geom = ArmGeometry::default();
    let mut kappa_gap = 0.0f64;
    for i in 0..40 {
        for j in 0..25 {
            let phi = 3.0 * i as f64 / 40.0;
            let gamma = TAU * j as f64 / 25.0;
            let ours = cable_lengths(phi, gamma, &geom);
            let oracle = common::kappa_form_lengths(
                phi,
                gamma,
                geom.length,
                geom.cable_offset,
                geom.cable_angles,
            );
            for k in 0..3 {
                kappa_gap = kappa_gap.max((ours[k] - oracle[k]).abs());
            }
        }
    }
    verdict(
        worst <= 1e-9 && kappa_gap <= 1e-12,
        format!(
            "round-trip max error {worst:.2e} rad (<= 1e-9); κ-form gap {kappa_gap:.2e} (<= 1e-12)"
        ),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = LabConfig::default();
    let mut files = Vec::new();
    for i in 0..2 {
        let (data, _) = collect_dataset(&cfg, cfg.seed).unwrap();
        let (log, _) = deepc_run(&cfg, &data, false);
        let path = dir.path().join(format!("run{i}.csv"));
        write_run_csv(&log, &path, false).unwrap();
        files.push(std::fs::read(&path).unwrap());
    }
    verdict(
        files[0] == files[1],
        format!(
            "two seeded fixed-point runs: {} and {} bytes, identical: {}",
            files[0].len(),
            files[1].len(),
            files[0] == files[1]
        ),
    )
}

fn main() -> ExitCode {
    let mut logs = Vec::new();
    let results = [
        ("fundamental lemma", fundamental_lemma()),
        ("DeePC-MPC equivalence", deepc_mpc_equivalence()),
        ("SVD reduction", svd_reduction(&mut logs)),
        ("fixed-point regulation", fixed_point(&mut logs)),
        ("trajectory tracking", tracking(&mut logs)),
        ("kinematics oracles", kinematics()),
        ("determinism", determinism()),
    ];
    let mut lines: Vec<(usize, &str, Verdict)> = Vec::new();
    for (i, (name, v)) in results.into_iter().enumerate() {
        let number = if i < 3 { i + 1 } else { i + 2 };
        lines.push((number, name, v));
    }
    lines.push((4, "constraint satisfaction", constraints(&logs)));
    lines.sort_by_key(|(n, _, _)| *n);
    let mut failed = 0;
    for (n, name, v) in &lines {
        println!(
            "criterion {n} ({name}): {} - {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "{} of {} criteria passed",
        lines.len() - failed,
        lines.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
