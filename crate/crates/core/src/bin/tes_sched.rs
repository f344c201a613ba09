//! Command-line front end: run a scenario through the closed loop and emit
//! the report files.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tes_sched::harness::{self, HarnessError, ReportFormat};
use tes_sched::scheduler::ScheduleError;
use tes_sched::{config, harness::run_closed_loop};

#[derive(Parser)]
#[command(name = "tes-sched", about = "Receding-horizon scheduler for a PCM-backed refrigeration system", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop over a scenario and write the report files.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Tank/solver configuration file (flat key = value text).
    #[arg(long)]
    config: PathBuf,
    /// Scenario table: hour,demand_w,price_eur_kwh,t_surr_c.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for report.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Override the prediction horizon (steps).
    #[arg(long)]
    horizon: Option<usize>,
    /// Override the sampling period (seconds).
    #[arg(long)]
    dt_seconds: Option<f64>,
    /// Override the lower charge-ratio safety limit.
    #[arg(long)]
    gamma_min: Option<f64>,
    /// Override the upper charge-ratio safety limit.
    #[arg(long)]
    gamma_max: Option<f64>,
    /// csv writes the per-step table plus the summary; summary writes only
    /// the summary document.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: ReportFormat,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    match s {
        "csv" => Ok(ReportFormat::Csv),
        "summary" => Ok(ReportFormat::Summary),
        other => Err(format!("unknown format `{other}` (expected csv or summary)")),
    }
}

fn run(args: &RunArgs) -> Result<(), (u8, String)> {
    let fail = |code: u8| move |e: String| (code, e);

    let mut cfg = config::load_config(&args.config).map_err(|e| e.to_string()).map_err(fail(1))?;
    if let Some(ph) = args.horizon {
        cfg.ph = ph;
    }
    if let Some(dt) = args.dt_seconds {
        cfg.dt_s = dt;
    }
    if let Some(g) = args.gamma_min {
        cfg.gamma_min = g;
    }
    if let Some(g) = args.gamma_max {
        cfg.gamma_max = g;
    }

    let model = cfg.build_model().map_err(|e| e.to_string()).map_err(fail(1))?;
    let sched_cfg = cfg.scheduler_config();
    let profiles = harness::load_profiles(&args.scenario, cfg.dt_s)
        .map_err(|e| e.to_string())
        .map_err(fail(1))?;

    let report = run_closed_loop(&model, &sched_cfg, &profiles, cfg.gamma0).map_err(|e| {
        let code = match &e {
            HarnessError::Schedule {
                source: ScheduleError::Infeasible { .. },
                ..
            } => 2,
            _ => 1,
        };
        (code, e.to_string())
    })?;

    let written = harness::emit_report(&report, &args.out, args.format)
        .map_err(|e| e.to_string())
        .map_err(fail(1))?;
    for path in written {
        println!("wrote {}", path.display());
    }
    println!(
        "total cost {:.4} EUR over {} steps, modes 1/2/3/4: {}/{}/{}/{}",
        report.total_cost_eur,
        report.steps.len(),
        report.mode_histogram[0],
        report.mode_histogram[1],
        report.mode_histogram[2],
        report.mode_histogram[3]
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err((code, msg)) => {
                eprintln!("error: {msg}");
                ExitCode::from(code)
            }
        },
    }
}
