use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use deepc_lab::app::{self, Context};
use deepc_lab::experiment::{ControllerKind, Task};

#[derive(Parser)]
#[command(
    name = "deepc-lab",
    version,
    about = "DeePC experiments on a simulated soft arm"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file; the built-in defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Controller::Deepc)]
    controller: Controller,
    /// Dataset CSV to build DeePC from; collected afresh when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Write `nan` instead of wall-clock solve times so runs are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Controller {
    Deepc,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    FixedPoint,
    TrackCircle,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Excite the plant and store the response as a dataset CSV.
    Collect {
        #[command(flatten)]
        common: Common,
    },
    /// Stepwise bending-angle regulation.
    FixedPoint(RunArgs),
    /// Circular tip trajectory tracking.
    TrackCircle(RunArgs),
    /// Run baseline and DeePC on the same data and print a metrics table.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = TaskArg::Both)]
        task: TaskArg,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        no_timing: bool,
    },
    /// Persistency-of-excitation diagnosis of a dataset.
    CheckPe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Hankel depth to test; defaults to T_ini + N + n_est.
        #[arg(long)]
        order: Option<usize>,
    },
}

fn context(c: &Common) -> anyhow::Result<Context> {
    Ok(Context::new(c.config.as_deref(), c.seed, c.out.clone())?)
}

fn run(task: Task, args: &RunArgs) -> anyhow::Result<()> {
    let ctx = context(&args.common)?;
    let kind = match args.controller {
        Controller::Deepc => ControllerKind::DeePC,
        Controller::Baseline => ControllerKind::Baseline,
    };
    let (metrics, files) =
        app::run_and_export(&ctx, task, kind, args.dataset.as_deref(), !args.no_timing)
            .with_context(|| format!("{} run failed", task.as_str()))?;
    println!(
        "{} {}: rmse {:.3} mm, max {:.3} mm, {} fallback steps",
        metrics.controller,
        metrics.task,
        metrics.rmse_mm,
        metrics.max_error_mm,
        metrics.fallback_steps
    );
    for s in &metrics.stages {
        println!(
            "  stage ({:.0}°, {:.0}°): |φ err| {:.3}°, |γ err| {:.3}°, settled after {}",
            s.phi_ref_deg,
            s.gamma_ref_deg,
            s.steady_state_phi_error_deg,
            s.steady_state_gamma_error_deg,
            s.settling_steps
                .map_or("never".into(), |k| format!("{k} steps"))
        );
    }
    println!("wrote {}", files.run_csv.display());
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Collect { common } => {
            let ctx = context(&common)?;
            let (path, pe) = app::collect(&ctx)?;
            println!(
                "wrote {} ({} samples, PE order {} rank {}/{})",
                path.display(),
                pe.samples,
                pe.order,
                pe.rank,
                pe.required_rank
            );
        }
        Command::FixedPoint(args) => run(Task::FixedPoint, &args)?,
        Command::TrackCircle(args) => run(Task::Circle, &args)?,
        Command::Compare {
            common,
            task,
            dataset,
            no_timing,
        } => {
            let ctx = context(&common)?;
            let tasks: &[Task] = match task {
                TaskArg::FixedPoint => &[Task::FixedPoint],
                TaskArg::TrackCircle => &[Task::Circle],
                TaskArg::Both => &[Task::FixedPoint, Task::Circle],
            };
            let rows = app::compare(&ctx, tasks, dataset.as_deref(), !no_timing)?;
            print!("{}", app::comparison_table(&rows));
        }
        Command::CheckPe {
            common,
            dataset,
            order,
        } => {
            let ctx = context(&common)?;
            let r = app::check_pe(&ctx, dataset.as_deref(), order)?;
            println!(
                "{} samples, order {}: rank {}/{} -> {}",
                r.samples,
                r.order,
                r.rank,
                r.required_rank,
                if r.persistently_exciting {
                    "persistently exciting"
                } else {
                    "NOT persistently exciting"
                }
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
