//! Closed-loop receding-horizon driver: plant, estimator and scheduler
//! wired together over a scenario file, producing machine-readable reports.

use crate::estimator::{self, Measurement};
use crate::scheduler::{self, ScheduleError, SchedulerConfig};
use crate::tes::TesModel;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scheduling aborted at period {period}: {source}")]
    Schedule {
        period: usize,
        source: ScheduleError,
    },
}

/// Time-indexed demand, price and ambient profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioProfiles {
    pub demand_w: Vec<f64>,
    pub price_eur_kwh: Vec<f64>,
    pub t_surr_c: Vec<f64>,
    pub dt_s: f64,
}

impl ScenarioProfiles {
    pub fn n_steps(&self) -> usize {
        self.demand_w.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let n = self.n_steps();
        if n == 0 {
            return Err(HarnessError::Invalid("scenario has no rows".into()));
        }
        if self.price_eur_kwh.len() != n || self.t_surr_c.len() != n {
            return Err(HarnessError::Invalid("profile length mismatch".into()));
        }
        if let Some(k) = self.demand_w.iter().position(|&d| !(d > 0.0)) {
            return Err(HarnessError::Invalid(format!(
                "demand must be strictly positive (row {k})"
            )));
        }
        if let Some(k) = self.price_eur_kwh.iter().position(|&p| !(p >= 0.0)) {
            return Err(HarnessError::Invalid(format!(
                "prices must be nonnegative (row {k})"
            )));
        }
        Ok(())
    }
}

const CSV_COLUMNS: [&str; 4] = ["hour", "demand_w", "price_eur_kwh", "t_surr_c"];

/// Load a scenario table (`hour,demand_w,price_eur_kwh,t_surr_c`).
pub fn load_profiles(path: &Path, dt_s: f64) -> Result<ScenarioProfiles, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let err = |line: usize, msg: String| HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((idx, raw)) => {
                let t = raw.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                break (idx + 1, t.to_string());
            }
            None => return Err(err(0, "empty scenario file".into())),
        }
    };
    let names: Vec<&str> = header.1.split(',').map(str::trim).collect();
    if names != CSV_COLUMNS {
        return Err(err(
            header.0,
            format!(
                "expected columns `{}`, got `{}`",
                CSV_COLUMNS.join(","),
                header.1
            ),
        ));
    }

    let mut profiles = ScenarioProfiles {
        demand_w: Vec::new(),
        price_eur_kwh: Vec::new(),
        t_surr_c: Vec::new(),
        dt_s,
    };
    for (idx, raw) in lines {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        if fields.len() != CSV_COLUMNS.len() {
            return Err(err(
                line,
                format!("expected {} fields, got {}", CSV_COLUMNS.len(), fields.len()),
            ));
        }
        let parse = |s: &str, what: &str| -> Result<f64, HarnessError> {
            s.parse::<f64>()
                .map_err(|_| err(line, format!("{what} `{s}` is not a number")))
        };
        let _hour = parse(fields[0], "hour")?;
        let demand = parse(fields[1], "demand_w")?;
        if !(demand > 0.0) {
            return Err(err(line, format!("demand_w must be > 0, got {demand}")));
        }
        let price = parse(fields[2], "price_eur_kwh")?;
        if !(price >= 0.0) {
            return Err(err(line, format!("price_eur_kwh must be >= 0, got {price}")));
        }
        profiles.demand_w.push(demand);
        profiles.price_eur_kwh.push(price);
        profiles.t_surr_c.push(parse(fields[3], "t_surr_c")?);
    }
    profiles.validate()?;
    Ok(profiles)
}

/// One closed-loop period as logged.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub hour: usize,
    pub demand_w: f64,
    pub price_eur_kwh: f64,
    pub t_surr_c: f64,
    pub mode: u8,
    pub q_e_sec_w: f64,
    pub q_tes_w: f64,
    pub q_tes_sec_w: f64,
    /// Plant charge ratio at the end of the period.
    pub gamma_plant: f64,
    /// Estimator charge ratio at decision time (start of the period).
    pub gamma_est: f64,
    /// Plant fluid temperature at the end of the period, °C.
    pub t_int_c: f64,
    pub cost_eur: f64,
    pub sched_iterations: usize,
    pub bb_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub steps: Vec<StepRecord>,
    pub dt_s: f64,
    pub gamma0: f64,
    pub total_cost_eur: f64,
    /// Counts of modes 1..4.
    pub mode_histogram: [usize; 4],
    pub final_gamma_plant: f64,
    /// Estimator charge ratio after the final measurement.
    pub final_gamma_est: f64,
    /// Largest estimator-vs-plant charge-ratio gap at measurement instants.
    pub max_gamma_tracking_err: f64,
    pub all_converged: bool,
    pub max_resim_gamma_err: f64,
    pub total_nodes: usize,
}

fn forecast_window(profile: &[f64], start: usize, ph: usize) -> Vec<f64> {
    // Past the scenario end the last value is held.
    let last = *profile.last().expect("validated nonempty");
    (start..start + ph)
        .map(|i| profile.get(i).copied().unwrap_or(last))
        .collect()
}

/// Run the scenario end to end: estimator update, schedule, apply the first
/// step to the plant, log. The low-level power loop is idealized, so the
/// applied powers equal the scheduled references.
pub fn run_closed_loop(
    model: &TesModel,
    cfg: &SchedulerConfig,
    profiles: &ScenarioProfiles,
    gamma0: f64,
) -> Result<RunReport, HarnessError> {
    profiles.validate()?;
    let n = profiles.n_steps();
    let dt = profiles.dt_s;

    let mut plant = model.uniform_state(gamma0, model.pcm.t_lat);
    let mut est = estimator::initial_estimate(
        model,
        gamma0,
        &Measurement {
            t_int: plant.t_int,
            t_surr: profiles.t_surr_c[0],
            time_s: 0.0,
        },
    );
    let mut prev_meas = Measurement {
        t_int: plant.t_int,
        t_surr: profiles.t_surr_c[0],
        time_s: 0.0,
    };
    let mut prev_applied = (0.0f64, 0.0f64);

    let mut steps = Vec::with_capacity(n);
    let mut mode_histogram = [0usize; 4];
    let mut total_cost = 0.0;
    let mut total_nodes = 0usize;
    let mut all_converged = true;
    let mut max_resim = 0.0f64;
    let mut max_tracking = 0.0f64;

    for t in 0..n {
        if t > 0 {
            let now = Measurement {
                t_int: plant.t_int,
                t_surr: profiles.t_surr_c[t],
                time_s: t as f64 * dt,
            };
            let du = estimator::estimate_transferred_energy(
                model,
                &now,
                &prev_meas,
                prev_applied.0,
                prev_applied.1,
                dt,
            );
            est = estimator::update_state(model, &est, du, &now).0;
            prev_meas = now;
            max_tracking = max_tracking.max((est.gamma - model.charge_ratio(&plant)).abs());
        }

        let demand_fc = forecast_window(&profiles.demand_w, t, cfg.ph);
        let price_fc = forecast_window(&profiles.price_eur_kwh, t, cfg.ph);
        let schedule = scheduler::solve_schedule(
            model,
            &est.state,
            &demand_fc,
            &price_fc,
            profiles.t_surr_c[t],
            cfg,
        )
        .map_err(|source| HarnessError::Schedule { period: t, source })?;
        let action = scheduler::step_receding_horizon(&schedule);

        let out = model
            .simulate_step(
                &plant,
                action.q_tes,
                action.q_tes_sec,
                profiles.t_surr_c[t],
                dt,
                cfg.n_sub,
            )
            .map_err(|e| HarnessError::Schedule {
                period: t,
                source: ScheduleError::Config(format!("plant step failed: {e}")),
            })?;
        plant = out.state;

        let cost = scheduler::step_weight(profiles.price_eur_kwh[t], dt)
            * (action.q_e_sec + action.q_tes);
        total_cost += cost;
        total_nodes += schedule.diagnostics.total_nodes;
        all_converged &= schedule.diagnostics.converged;
        max_resim = max_resim.max(schedule.diagnostics.resim_gamma_max_err);
        mode_histogram[(action.mode.number() - 1) as usize] += 1;

        steps.push(StepRecord {
            hour: t,
            demand_w: profiles.demand_w[t],
            price_eur_kwh: profiles.price_eur_kwh[t],
            t_surr_c: profiles.t_surr_c[t],
            mode: action.mode.number(),
            q_e_sec_w: action.q_e_sec,
            q_tes_w: action.q_tes,
            q_tes_sec_w: action.q_tes_sec,
            gamma_plant: model.charge_ratio(&plant),
            gamma_est: est.gamma,
            t_int_c: plant.t_int,
            cost_eur: cost,
            sched_iterations: schedule.diagnostics.limit_iterations,
            bb_nodes: schedule.diagnostics.total_nodes,
        });
        prev_applied = (action.q_tes, action.q_tes_sec);
    }

    // Final measurement closes the estimator bookkeeping.
    let now = Measurement {
        t_int: plant.t_int,
        t_surr: *profiles.t_surr_c.last().unwrap(),
        time_s: n as f64 * dt,
    };
    let du = estimator::estimate_transferred_energy(
        model,
        &now,
        &prev_meas,
        prev_applied.0,
        prev_applied.1,
        dt,
    );
    est = estimator::update_state(model, &est, du, &now).0;
    max_tracking = max_tracking.max((est.gamma - model.charge_ratio(&plant)).abs());

    Ok(RunReport {
        dt_s: dt,
        gamma0,
        total_cost_eur: total_cost,
        mode_histogram,
        final_gamma_plant: model.charge_ratio(&plant),
        final_gamma_est: est.gamma,
        max_gamma_tracking_err: max_tracking,
        all_converged,
        max_resim_gamma_err: max_resim,
        total_nodes,
        steps,
    })
}

/// Per-step table, comma separated. Floats use the shortest round-trip
/// representation so reparsing reproduces the run bit for bit.
pub fn render_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "hour,demand_w,price_eur_kwh,t_surr_c,mode,q_e_sec_w,q_tes_w,q_tes_sec_w,\
         gamma_plant,gamma_est,t_int_c,cost_eur,sched_iterations,bb_nodes\n",
    );
    for s in &report.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.hour,
            s.demand_w,
            s.price_eur_kwh,
            s.t_surr_c,
            s.mode,
            s.q_e_sec_w,
            s.q_tes_w,
            s.q_tes_sec_w,
            s.gamma_plant,
            s.gamma_est,
            s.t_int_c,
            s.cost_eur,
            s.sched_iterations,
            s.bb_nodes
        );
    }
    out
}

#[derive(Debug, Serialize)]
struct SummaryModes {
    mode1: usize,
    mode2: usize,
    mode3: usize,
    mode4: usize,
}

#[derive(Debug, Serialize)]
struct SummarySolver {
    total_nodes: usize,
    all_limit_loops_converged: bool,
    max_resim_gamma_err: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    steps: usize,
    dt_s: f64,
    gamma0: f64,
    total_cost_eur: f64,
    mode_histogram: SummaryModes,
    gamma_plant_min: f64,
    gamma_plant_max: f64,
    final_gamma_plant: f64,
    final_gamma_est: f64,
    max_gamma_tracking_err: f64,
    solver: SummarySolver,
}

/// Structured run summary as deterministic JSON.
pub fn render_summary(report: &RunReport) -> String {
    let gammas: Vec<f64> = std::iter::once(report.gamma0)
        .chain(report.steps.iter().map(|s| s.gamma_plant))
        .collect();
    let summary = Summary {
        steps: report.steps.len(),
        dt_s: report.dt_s,
        gamma0: report.gamma0,
        total_cost_eur: report.total_cost_eur,
        mode_histogram: SummaryModes {
            mode1: report.mode_histogram[0],
            mode2: report.mode_histogram[1],
            mode3: report.mode_histogram[2],
            mode4: report.mode_histogram[3],
        },
        gamma_plant_min: gammas.iter().copied().fold(f64::INFINITY, f64::min),
        gamma_plant_max: gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        final_gamma_plant: report.final_gamma_plant,
        final_gamma_est: report.final_gamma_est,
        max_gamma_tracking_err: report.max_gamma_tracking_err,
        solver: SummarySolver {
            total_nodes: report.total_nodes,
            all_limit_loops_converged: report.all_converged,
            max_resim_gamma_err: report.max_resim_gamma_err,
        },
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Per-step table plus the summary document.
    Csv,
    /// Summary document only.
    Summary,
}

/// Write the report files into `out_dir`, returning the paths written.
pub fn emit_report(
    report: &RunReport,
    out_dir: &Path,
    format: ReportFormat,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let write = |name: &str, content: String| -> Result<PathBuf, HarnessError> {
        let path = out_dir.join(name);
        std::fs::write(&path, content).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };
    let mut written = Vec::new();
    if format == ReportFormat::Csv {
        written.push(write("report.csv", render_csv(report))?);
    }
    written.push(write("summary.json", render_summary(report))?);
    Ok(written)
}
