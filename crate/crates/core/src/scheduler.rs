//! Encoding and solution of the scheduling problem.
//!
//! Decision variables per step: the charging and discharging power
//! references plus their activation binaries; the evaporator reference is
//! eliminated through the demand-satisfaction identity and represented only
//! by a derived activation binary with big-M linking rows. Achievable-power
//! limits depend on the predicted latent-front position, so the problem is
//! solved by successive linearization: solve with assumed limits, re-derive
//! the limits along the solution's charge-ratio path, repeat until the
//! limits settle.

use crate::pnmpc::{self, InputTrajectory, LinearPrediction, PnmpcError};
use crate::tes::{PowerLimits, TesModel, TesState};
use milp::{
    branch_and_bound, BranchBoundOptions, Clause, LinearProgram, MixedIntegerProgram, SolveStatus,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("scheduling infeasible at step {step}: {reason}")]
    Infeasible { step: usize, reason: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid mode flags: {0}")]
    InvalidFlags(String),
    #[error("solver gave up: {0}")]
    Solver(String),
    #[error(transparent)]
    Pnmpc(#[from] PnmpcError),
}

/// Activation pattern of the three cooling powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeFlags {
    pub d_e_sec: bool,
    pub d_tes: bool,
    pub d_tes_sec: bool,
}

/// The four schedulable operating modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatingMode {
    /// Evaporator only.
    Mode1,
    /// Evaporator while charging the tank.
    Mode2,
    /// Evaporator plus tank discharge.
    Mode3,
    /// Tank discharge only.
    Mode4,
}

impl OperatingMode {
    pub fn number(self) -> u8 {
        match self {
            OperatingMode::Mode1 => 1,
            OperatingMode::Mode2 => 2,
            OperatingMode::Mode3 => 3,
            OperatingMode::Mode4 => 4,
        }
    }
}

/// Map an activation pattern to its operating mode. Patterns that allow
/// simultaneous charge/discharge or leave the demand unserved are invalid.
pub fn classify_mode(flags: ModeFlags) -> Result<OperatingMode, ScheduleError> {
    if !(flags.d_e_sec || flags.d_tes_sec) {
        return Err(ScheduleError::InvalidFlags(
            "no contribution serves the cooling demand".into(),
        ));
    }
    if flags.d_tes && flags.d_tes_sec {
        return Err(ScheduleError::InvalidFlags(
            "simultaneous charging and discharging".into(),
        ));
    }
    Ok(match (flags.d_e_sec, flags.d_tes, flags.d_tes_sec) {
        (true, false, false) => OperatingMode::Mode1,
        (true, true, false) => OperatingMode::Mode2,
        (true, false, true) => OperatingMode::Mode3,
        (false, false, true) => OperatingMode::Mode4,
        _ => unreachable!("screened above"),
    })
}

/// Demand-satisfaction identity: the evaporator covers what the discharge
/// does not. Negativity is a constraint violation handled by the solver,
/// not here.
pub fn derive_evaporator_power(demand: f64, q_tes_sec_ref: f64) -> f64 {
    demand - q_tes_sec_ref
}

/// References applied over one step, W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision {
    pub q_e_sec: f64,
    pub q_tes: f64,
    pub q_tes_sec: f64,
    pub flags: ModeFlags,
    pub mode: OperatingMode,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub limit_iterations: usize,
    pub converged: bool,
    pub total_nodes: usize,
    /// Largest gap between the linear charge-ratio prediction and a
    /// nonlinear re-simulation of the returned references.
    pub resim_gamma_max_err: f64,
    /// Power limits the final solve ran with.
    pub final_limits: Vec<PowerLimits>,
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub steps: Vec<StepDecision>,
    /// Predicted charge-ratio path (after each step).
    pub gamma_pred: Vec<f64>,
    /// Predicted fluid-temperature path, °C.
    pub t_int_pred: Vec<f64>,
    /// Total horizon cost, EUR.
    pub objective_eur: f64,
    /// The mixed-integer encoding of the final iteration (for debugging and
    /// external cross-checks).
    pub problem: MixedIntegerProgram,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct SchedulerConfig {
    pub ph: usize,
    pub dt_s: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Plant-integration substeps reused by the prediction rollouts.
    pub n_sub: usize,
    /// Jacobian perturbation as a fraction of the full-latency charge max.
    pub jac_eps_frac: f64,
    pub limit_max_iters: usize,
    /// Limit-loop convergence tolerance as a fraction of the full-latency
    /// maxima.
    pub limit_tol_frac: f64,
    pub parallel: bool,
    pub node_limit: usize,
    pub tol: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            ph: 12,
            dt_s: 3600.0,
            gamma_min: 0.05,
            gamma_max: 0.95,
            n_sub: 60,
            jac_eps_frac: 0.01,
            limit_max_iters: 5,
            limit_tol_frac: 0.01,
            parallel: false,
            node_limit: 200_000,
            tol: 1e-7,
        }
    }
}

/// EUR per watt over one step, from a price in EUR/kWh.
pub fn step_weight(price_eur_kwh: f64, dt_s: f64) -> f64 {
    price_eur_kwh * dt_s / 3.6e6
}

/// The objective inside the MIP is normalized by this weight so that
/// scaling every price by a constant leaves the solver-facing problem (and
/// hence the argmin) unchanged; EUR values are reconstructed outside.
pub fn weight_scale(prices: &[f64], dt_s: f64) -> f64 {
    let w = prices
        .iter()
        .map(|&p| step_weight(p, dt_s))
        .fold(0.0f64, f64::max);
    if w > 0.0 {
        w
    } else {
        1.0
    }
}

fn var_q_tes(k: usize) -> usize {
    4 * k
}
fn var_q_tes_sec(k: usize) -> usize {
    4 * k + 1
}
fn var_d_tes(k: usize) -> usize {
    4 * k + 2
}
fn var_d_tes_sec(k: usize) -> usize {
    4 * k + 3
}
fn var_d_e_sec(ph: usize, k: usize) -> usize {
    4 * ph + k
}

/// Build the solver-facing encoding for one limit iteration.
///
/// Variables: `[q_tes(k), q_tes_sec(k), d_tes(k), d_tes_sec(k)]` per step,
/// then the derived `d_e_sec(k)` binaries. Rows per step: the big-M link of
/// the eliminated evaporator power to `d_e_sec`, the indicator window of
/// each tank power, the charge-ratio band on the cumulated predicted
/// increments, and the two mode-logic clauses.
pub fn build_problem(
    pred: &LinearPrediction,
    demand: &[f64],
    prices: &[f64],
    limits: &[PowerLimits],
    cfg: &SchedulerConfig,
) -> Result<MixedIntegerProgram, ScheduleError> {
    let ph = cfg.ph;
    if pred.ph != ph {
        return Err(ScheduleError::Dimension(format!(
            "prediction horizon {} vs configured {ph}",
            pred.ph
        )));
    }
    if demand.len() != ph || prices.len() != ph || limits.len() != ph {
        return Err(ScheduleError::Config(format!(
            "horizon {ph} needs {ph} demand/price/limit entries, got {}/{}/{}",
            demand.len(),
            prices.len(),
            limits.len()
        )));
    }

    let nvars = 5 * ph;
    let mut lp = LinearProgram::new(nvars);
    let mut binaries = Vec::with_capacity(3 * ph);
    let mut clauses = Vec::with_capacity(2 * ph);

    let w_scale = weight_scale(prices, cfg.dt_s);
    for k in 0..ph {
        let w = step_weight(prices[k], cfg.dt_s) / w_scale;
        lp.objective[var_q_tes(k)] = w;
        lp.objective[var_q_tes_sec(k)] = -w;

        lp.var_upper[var_q_tes(k)] = limits[k].q_tes_max.max(0.0);
        // The demand identity with a nonnegative evaporator share caps the
        // discharge at the demand itself.
        lp.var_upper[var_q_tes_sec(k)] = limits[k].q_tes_sec_max.max(0.0).min(demand[k]);
        for v in [var_d_tes(k), var_d_tes_sec(k), var_d_e_sec(ph, k)] {
            lp.var_upper[v] = 1.0;
            binaries.push(v);
        }

        // Evaporator window on demand - q_tes_sec, linked to d_e_sec.
        let mut row = vec![0.0; nvars];
        row[var_q_tes_sec(k)] = -1.0;
        row[var_d_e_sec(ph, k)] = -limits[k].q_e_min;
        lp.add_row(row, -demand[k], f64::INFINITY);
        let mut row = vec![0.0; nvars];
        row[var_q_tes_sec(k)] = -1.0;
        row[var_d_e_sec(ph, k)] = -limits[k].q_e_max;
        lp.add_row(row, f64::NEG_INFINITY, -demand[k]);

        // Indicator windows of the tank powers.
        let mut row = vec![0.0; nvars];
        row[var_q_tes(k)] = 1.0;
        row[var_d_tes(k)] = -limits[k].q_tes_min;
        lp.add_row(row, 0.0, f64::INFINITY);
        let mut row = vec![0.0; nvars];
        row[var_q_tes(k)] = 1.0;
        row[var_d_tes(k)] = -limits[k].q_tes_max;
        lp.add_row(row, f64::NEG_INFINITY, 0.0);
        let mut row = vec![0.0; nvars];
        row[var_q_tes_sec(k)] = 1.0;
        row[var_d_tes_sec(k)] = -limits[k].q_tes_sec_min;
        lp.add_row(row, 0.0, f64::INFINITY);
        let mut row = vec![0.0; nvars];
        row[var_q_tes_sec(k)] = 1.0;
        row[var_d_tes_sec(k)] = -limits[k].q_tes_sec_max;
        lp.add_row(row, f64::NEG_INFINITY, 0.0);

        // Charge-ratio band on the cumulated predicted increments.
        let mut row = vec![0.0; nvars];
        for j in 0..ph {
            let mut c_tes = 0.0;
            let mut c_sec = 0.0;
            for i in 0..=k {
                c_tes += pred.g[(2 * i, 2 * j)];
                c_sec += pred.g[(2 * i, 2 * j + 1)];
            }
            row[var_q_tes(j)] = c_tes;
            row[var_q_tes_sec(j)] = c_sec;
        }
        let free_cum: f64 = pred.y_free.d_gamma[..=k].iter().sum();
        lp.add_row(
            row,
            cfg.gamma_min - pred.gamma0 - free_cum,
            cfg.gamma_max - pred.gamma0 - free_cum,
        );

        clauses.push(Clause::AtLeastOne(vec![var_d_e_sec(ph, k), var_d_tes_sec(k)]));
        clauses.push(Clause::AtMostOne(vec![var_d_tes(k), var_d_tes_sec(k)]));
    }

    let mip = MixedIntegerProgram {
        lp,
        binaries,
        clauses,
    };
    mip.validate()
        .map_err(|e| ScheduleError::Dimension(e.to_string()))?;
    Ok(mip)
}

/// Per-step power limits along a candidate input trajectory.
///
/// The predicted charge-ratio increments are converted to per-cylinder cold
/// energy and pushed through the layer algorithm. Each step's minimum limit
/// comes from the front position at the step start and its maximum from the
/// position at the step end, so the window is achievable throughout the
/// step; each direction uses its own front, which puts a fresh front at the
/// cylinder edge whenever the step would reverse a previous
/// charge/discharge process.
pub fn limits_along(
    model: &TesModel,
    x_est: &TesState,
    pred: &LinearPrediction,
    u: &InputTrajectory,
    cfg: &SchedulerConfig,
) -> Result<Vec<PowerLimits>, ScheduleError> {
    let y = pnmpc::predict(pred, u)?;
    let du_scale = model.latent_capacity_per_cylinder();
    let mut state = x_est.clone();
    let mut out = Vec::with_capacity(cfg.ph);
    for k in 0..cfg.ph {
        let start = state.clone();
        state = model.apply_cold_energy(&state, y.d_gamma[k] * du_scale).0;

        let (ch_min_raw, _) = model.limits_from_boundary(model.active_front(&start, true));
        let (ch_max, _) = model.limits_from_boundary(model.active_front(&state, true));
        let (_, dis_min_raw) = model.limits_from_boundary(model.active_front(&start, false));
        let (_, dis_max) = model.limits_from_boundary(model.active_front(&state, false));
        out.push(PowerLimits {
            q_e_min: model.limits.q_e_min,
            q_e_max: model.limits.q_e_max,
            q_tes_min: model.limits.min_frac * ch_min_raw,
            q_tes_max: ch_max,
            q_tes_sec_min: model.limits.min_frac * dis_min_raw,
            q_tes_sec_max: dis_max,
        });
    }
    Ok(out)
}

/// The loosest physically attainable window: maxima from a fresh front at
/// the cylinder edge, minima from the deepest front. Used to recover when
/// the zero-incumbent limits leave no feasible schedule (the fixed-point
/// limits of a charged plan can be far wider than the idle rollout's).
fn optimistic_limits(model: &TesModel, ph: usize) -> Vec<PowerLimits> {
    let (ch_max, dis_max) = model.limits_from_boundary(Some(model.geom.n_lay - 1));
    let (ch_min_raw, dis_min_raw) = model.limits_from_boundary(None);
    vec![
        PowerLimits {
            q_e_min: model.limits.q_e_min,
            q_e_max: model.limits.q_e_max,
            q_tes_min: model.limits.min_frac * ch_min_raw,
            q_tes_max: ch_max,
            q_tes_sec_min: model.limits.min_frac * dis_min_raw,
            q_tes_sec_max: dis_max,
        };
        ph
    ]
}

fn limits_close(a: &[PowerLimits], b: &[PowerLimits], tol_ch: f64, tol_dis: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        (x.q_tes_max - y.q_tes_max).abs() <= tol_ch
            && (x.q_tes_min - y.q_tes_min).abs() <= tol_ch
            && (x.q_tes_sec_max - y.q_tes_sec_max).abs() <= tol_dis
            && (x.q_tes_sec_min - y.q_tes_sec_min).abs() <= tol_dis
    })
}

fn diagnose_infeasible(
    demand: &[f64],
    limits: &[PowerLimits],
) -> (usize, String) {
    for (k, (&d, lim)) in demand.iter().zip(limits).enumerate() {
        let coverage = lim.q_e_max + lim.q_tes_sec_max.max(0.0);
        if d > coverage {
            return (
                k,
                format!(
                    "cooling demand {d} W exceeds combined capacity {coverage} W \
                     (power-feasibility rows)"
                ),
            );
        }
        if d < lim.q_e_min && (d < lim.q_tes_sec_min || d > lim.q_tes_sec_max) {
            return (
                k,
                format!(
                    "demand {d} W fits neither the evaporator window nor the \
                     discharge window (indicator rows)"
                ),
            );
        }
    }
    (
        0,
        "no feasible mode assignment satisfies the charge-ratio band".into(),
    )
}

fn extract_inputs(x: &[f64], ph: usize) -> InputTrajectory {
    let mut u = InputTrajectory::zeros(ph);
    for k in 0..ph {
        u.steps[k] = (x[var_q_tes(k)].max(0.0), x[var_q_tes_sec(k)].max(0.0));
    }
    u
}

/// Solve the receding-horizon scheduling problem from the estimated state.
///
/// Demand, prices and the constant-held ambient forecast must cover `ph`
/// steps; demand must be strictly positive (the mode logic assumes a
/// nonzero demand throughout).
pub fn solve_schedule(
    model: &TesModel,
    x_est: &TesState,
    demand: &[f64],
    prices: &[f64],
    t_surr_now: f64,
    cfg: &SchedulerConfig,
) -> Result<Schedule, ScheduleError> {
    let ph = cfg.ph;
    if ph == 0 {
        return Err(ScheduleError::Config("horizon must be at least 1".into()));
    }
    if demand.len() != ph || prices.len() != ph {
        return Err(ScheduleError::Config(format!(
            "horizon {ph} needs {ph} demand/price entries, got {}/{}",
            demand.len(),
            prices.len()
        )));
    }
    if !(0.0 < cfg.gamma_min && cfg.gamma_min < cfg.gamma_max && cfg.gamma_max < 1.0) {
        return Err(ScheduleError::Config(format!(
            "charge-ratio band [{}, {}] must satisfy 0 < min < max < 1",
            cfg.gamma_min, cfg.gamma_max
        )));
    }
    if let Some(k) = demand.iter().position(|&d| !(d > 0.0)) {
        return Err(ScheduleError::Config(format!(
            "demand must be strictly positive, step {k} has {}",
            demand[k]
        )));
    }
    if let Some(k) = prices.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(ScheduleError::Config(format!(
            "prices must be nonnegative, step {k} has {}",
            prices[k]
        )));
    }

    let t_surr_fc = vec![t_surr_now; ph];
    let (full_ch, full_dis) = model.limits_from_boundary(Some(model.geom.n_lay - 1));
    let eps = cfg.jac_eps_frac * full_ch;
    let pred = pnmpc::jacobian(
        model,
        x_est,
        &t_surr_fc,
        ph,
        cfg.dt_s,
        eps,
        cfg.n_sub,
        cfg.parallel,
    )?;

    let bb_opts = BranchBoundOptions {
        tol: cfg.tol,
        integrality_tol: 1e-6,
        node_limit: cfg.node_limit,
        parallel: cfg.parallel,
        // Cost-tied schedules are common (equal prices); a tiny gap keeps
        // the search from enumerating them while staying far inside the
        // scheduler's own optimality tolerance.
        rel_gap: 1e-7,
    };
    let tol_ch = cfg.limit_tol_frac * full_ch;
    let tol_dis = cfg.limit_tol_frac * full_dis;
    let const_cost: f64 = demand
        .iter()
        .zip(prices)
        .map(|(&d, &p)| step_weight(p, cfg.dt_s) * d)
        .sum();

    let mut limits = limits_along(model, x_est, &pred, &InputTrajectory::zeros(ph), cfg)?;
    let mut incumbent: Option<(milp::Solution, InputTrajectory, MixedIntegerProgram, Vec<PowerLimits>)> =
        None;
    let mut total_nodes = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut widened = false;

    for iter in 1..=cfg.limit_max_iters.max(1) {
        iterations = iter;
        let mip = build_problem(&pred, demand, prices, &limits, cfg)?;
        let sol = branch_and_bound(&mip, &bb_opts);
        total_nodes += sol.nodes;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::IterationLimit if !sol.x.is_empty() => {}
            SolveStatus::Infeasible => {
                if incumbent.is_some() {
                    break; // keep the last feasible iterate, flagged unconverged
                }
                if !widened {
                    // The idle-rollout limits can rule out plans whose own
                    // trajectories would widen them; retry from the loosest
                    // attainable window before declaring infeasibility.
                    widened = true;
                    limits = optimistic_limits(model, ph);
                    continue;
                }
                let (step, reason) = diagnose_infeasible(demand, &limits);
                return Err(ScheduleError::Infeasible { step, reason });
            }
            other => {
                if incumbent.is_some() {
                    break;
                }
                return Err(ScheduleError::Solver(format!(
                    "branch-and-bound ended with {other:?} and no incumbent"
                )));
            }
        }
        let u_star = extract_inputs(&sol.x, ph);
        let new_limits = limits_along(model, x_est, &pred, &u_star, cfg)?;
        // Converged when the plan stays executable under the limits its own
        // trajectory induces (cost-tied alternatives can flip inactive
        // windows forever, so comparing whole limit vectors would not
        // settle).
        let fits = u_star.steps.iter().zip(&new_limits).all(|(&(q_ch, q_dis), l)| {
            q_ch <= l.q_tes_max + tol_ch
                && (q_ch <= tol_ch || q_ch >= l.q_tes_min - tol_ch)
                && q_dis <= l.q_tes_sec_max + tol_dis
                && (q_dis <= tol_dis || q_dis >= l.q_tes_sec_min - tol_dis)
        });
        let settled = fits || limits_close(&limits, &new_limits, tol_ch, tol_dis);
        incumbent = Some((sol, u_star, mip, limits.clone()));
        if settled {
            converged = true;
            break;
        }
        limits = new_limits;
    }

    let (sol, u_star, problem, final_limits) =
        incumbent.expect("loop returns on first-iteration failure");

    // Assemble the schedule from the solution.
    let y_lin = pnmpc::predict(&pred, &u_star)?;
    let resim = pnmpc::rollout(model, x_est, &u_star, &t_surr_fc, cfg.dt_s, cfg.n_sub)?;
    let resim_gamma_max_err = y_lin
        .gamma
        .iter()
        .zip(&resim.gamma)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    let mut steps = Vec::with_capacity(ph);
    for k in 0..ph {
        let flags = ModeFlags {
            d_e_sec: sol.x[var_d_e_sec(ph, k)] > 0.5,
            d_tes: sol.x[var_d_tes(k)] > 0.5,
            d_tes_sec: sol.x[var_d_tes_sec(k)] > 0.5,
        };
        let mode = classify_mode(flags)?;
        let mut q_tes = if flags.d_tes { u_star.steps[k].0 } else { 0.0 };
        let mut q_tes_sec = if flags.d_tes_sec { u_star.steps[k].1 } else { 0.0 };
        if !q_tes.is_finite() || !q_tes_sec.is_finite() {
            return Err(ScheduleError::Solver("non-finite reference".into()));
        }
        q_tes = q_tes.max(0.0);
        q_tes_sec = q_tes_sec.clamp(0.0, demand[k]);
        // Keep the demand identity exact in floating point.
        let q_e_sec = derive_evaporator_power(demand[k], q_tes_sec).max(0.0);
        let q_tes_sec = demand[k] - q_e_sec;
        steps.push(StepDecision {
            q_e_sec,
            q_tes,
            q_tes_sec,
            flags,
            mode,
        });
    }

    Ok(Schedule {
        steps,
        gamma_pred: y_lin.gamma,
        t_int_pred: y_lin.t_int,
        objective_eur: sol.objective * weight_scale(prices, cfg.dt_s) + const_cost,
        problem,
        diagnostics: Diagnostics {
            limit_iterations: iterations,
            converged,
            total_nodes,
            resim_gamma_max_err,
            final_limits,
        },
    })
}

/// Receding horizon: apply only the first step; the rest is re-optimized at
/// the next period.
pub fn step_receding_horizon(schedule: &Schedule) -> StepDecision {
    schedule.steps[0]
}
