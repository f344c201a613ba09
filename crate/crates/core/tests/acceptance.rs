//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured figures. Tolerances are pinned in the constants below.

use milp::{branch_and_bound, solve_lp, BranchBoundOptions, Clause, LinearProgram, MixedIntegerProgram, SolveStatus};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;
use tes_sched::config::AppConfig;
use tes_sched::harness::{self, ReportFormat};
use tes_sched::pnmpc::{self, InputTrajectory};
use tes_sched::scheduler::{self, OperatingMode};
use tes_sched::tes::{TesModel, TesState};

const ENERGY_REL_TOL: f64 = 1e-6;
const LAYER_ORACLE_REL_TOL: f64 = 1e-6;
const SURROGATE_ABS_TOL: f64 = 1e-9;
const LP_ORACLE_TOL: f64 = 1e-8;
const SCHED_OPT_REL_TOL: f64 = 1e-6;
const GAMMA_PLANT_BAND: (f64, f64) = (0.03, 0.97);
const TRACKING_TOL: f64 = 0.01;
const LP_TOL: f64 = 1e-7;

fn table_model() -> TesModel {
    AppConfig::default().build_model().expect("bundled model")
}

fn data_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn random_layer_state(model: &TesModel, rng: &mut ChaCha8Rng) -> TesState {
    let mut state = model.uniform_state(0.5, rng.gen_range(-36.0..-22.0));
    for h in state.h_layers.iter_mut() {
        *h = rng.gen_range(model.h_sens_min..model.h_sens_max);
    }
    state
}

// --- 1. energy conservation --------------------------------------------

#[test]
fn acceptance_1_energy_conservation() {
    let start = Instant::now();
    let model = table_model();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let state = if rng.gen_bool(0.5) {
            model.uniform_state(rng.gen_range(0.0..1.0), rng.gen_range(-35.0..-23.0))
        } else {
            random_layer_state(&model, &mut rng)
        };
        let q_tes = rng.gen_range(0.0..2500.0);
        let q_tes_sec = rng.gen_range(0.0..2500.0);
        let t_surr = rng.gen_range(15.0..35.0);
        let out = model
            .simulate_step(&state, q_tes, q_tes_sec, t_surr, 3600.0, 60)
            .expect("step");
        let de = model.total_energy(&out.state) - model.total_energy(&state);
        let expected = (q_tes_sec - q_tes) * 3600.0 + out.u_surr;
        let scale = model.total_energy(&state).abs().max(1.0);
        worst = worst.max((de - expected).abs() / scale);
    }
    let elapsed = start.elapsed();
    assert!(worst <= ENERGY_REL_TOL, "worst residual {worst}");
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "[acceptance] 1 energy conservation: PASS (worst {:.2e} rel over 1000 steps, {:.2?})",
        worst, elapsed
    );
}

// --- 2. layer-update oracle ---------------------------------------------

/// Independent micro-increment reference: the requested energy is split
/// into 10^4 pieces; each piece drains (or fills) the outermost layer with
/// capacity left, falling back to a uniform clamped sensible change.
fn micro_oracle(model: &TesModel, state: &TesState, du: f64) -> (Vec<f64>, f64) {
    let n = model.geom.n_lay;
    let m_lay = model.layers.layer_mass;
    let (h_lo, h_hi) = (model.pcm.h_lat_minus, model.pcm.h_lat_plus);
    let mut h = state.h_layers.clone();
    let mut consumed = 0.0;
    let charging = du > 0.0;
    let piece_mag = du.abs() / 1e4;
    for _ in 0..10_000 {
        let mut left = piece_mag;
        for j in (0..n).rev() {
            let cap = if charging {
                (h[j] - h_lo) * m_lay
            } else {
                (h_hi - h[j]) * m_lay
            };
            if cap > 0.0 {
                let take = left.min(cap);
                if charging {
                    h[j] -= take / m_lay;
                    consumed += take;
                } else {
                    h[j] += take / m_lay;
                    consumed -= take;
                }
                left -= take;
                if left <= 0.0 {
                    break;
                }
            }
        }
        if left > 0.0 {
            let dh = left / (m_lay * n as f64);
            for hj in h.iter_mut() {
                if charging {
                    let take = dh.min((*hj - model.h_sens_min).max(0.0));
                    *hj -= take;
                    consumed += take * m_lay;
                } else {
                    let take = dh.min((model.h_sens_max - *hj).max(0.0));
                    *hj += take;
                    consumed -= take * m_lay;
                }
            }
        }
    }
    (h, consumed)
}

#[test]
fn acceptance_2_layer_update_oracle() {
    let start = Instant::now();
    let model = table_model();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cap = model.latent_capacity_per_cylinder();
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        // Mix of uniform (band-interior) and fully random states; energies
        // large enough to cross several band edges either way.
        let state = if case % 2 == 0 {
            model.uniform_state(rng.gen_range(0.05..0.95), -29.0)
        } else {
            random_layer_state(&model, &mut rng)
        };
        let du = rng.gen_range(-1.5..1.5) * cap;
        let (got, info) = model.apply_cold_energy(&state, du);
        let (want_h, want_consumed) = micro_oracle(&model, &state, du);
        for (a, b) in got.h_layers.iter().zip(&want_h) {
            worst = worst.max((a - b).abs() / model.pcm.h_lat);
        }
        worst = worst.max((info.consumed - want_consumed).abs() / cap);
    }
    let elapsed = start.elapsed();
    assert!(worst <= LAYER_ORACLE_REL_TOL, "worst deviation {worst}");
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "[acceptance] 2 layer-update oracle: PASS (worst {:.2e} rel over 200 states, {:.2?})",
        worst, elapsed
    );
}

// --- 3. PNMPC consistency -------------------------------------------------

#[test]
fn acceptance_3_pnmpc_consistency() {
    let model = table_model();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let ph = 6;
    let dt = 3600.0;
    let n_sub = 60;
    let eps0 = 20.0;

    let mut exact = 0usize;
    let mut orders: Vec<f64> = Vec::new();
    for _ in 0..20 {
        // Latent states with margin so the free trajectory stays in band.
        let mut x0 = model.uniform_state(0.5, rng.gen_range(-30.5..-27.5));
        for h in x0.h_layers.iter_mut() {
            *h = rng.gen_range(0.15..0.85) * model.pcm.h_lat;
        }
        let t_surr = vec![rng.gen_range(18.0..30.0); ph];

        let full = pnmpc::jacobian(&model, &x0, &t_surr, ph, dt, eps0, n_sub, false).unwrap();
        // Exact causality zeros.
        for bk in 0..ph {
            for bj in (bk + 1)..ph {
                for r in 0..2 {
                    for c in 0..2 {
                        assert_eq!(full.g[(2 * bk + r, 2 * bj + c)], 0.0);
                    }
                }
            }
        }

        let half = pnmpc::jacobian(&model, &x0, &t_surr, ph, dt, eps0 / 2.0, n_sub, false).unwrap();
        for j in [0usize, 1, ph - 1, 2 * ph - 2] {
            let reference = central_column(&model, &x0, &t_surr, ph, dt, eps0 / 10.0, n_sub, j);
            let scale = reference
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(1e-6);
            let e1 = col_err(&full.g, j, &reference);
            let e2 = col_err(&half.g, j, &reference);
            if e2 <= 1e-10 * scale {
                exact += 1; // piecewise-affine region: differences are exact
            } else {
                orders.push((e1 / e2).log2());
            }
        }
    }
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(
        orders.is_empty() || min_order >= 0.99,
        "observed orders {orders:?}"
    );

    // Constant-resistance surrogate: small inputs keep the rollout affine,
    // where the linear prediction must be exact.
    let x0 = model.uniform_state(0.5, model.pcm.t_lat);
    let pred = pnmpc::jacobian(&model, &x0, &vec![25.0; ph], ph, dt, 5.0, n_sub, false).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mut u = InputTrajectory::zeros(ph);
        for s in u.steps.iter_mut() {
            s.0 = rng.gen_range(0.0..10.0);
            s.1 = rng.gen_range(0.0..10.0);
        }
        let lin = pnmpc::predict(&pred, &u).unwrap();
        let non = pnmpc::rollout(&model, &x0, &u, &vec![25.0; ph], dt, n_sub).unwrap();
        for (a, b) in lin.gamma.iter().zip(&non.gamma) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in lin.t_int.iter().zip(&non.t_int) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= SURROGATE_ABS_TOL, "surrogate mismatch {worst}");
    println!(
        "[acceptance] 3 pnmpc consistency: PASS ({} exact columns, min order {:.2}, surrogate {:.1e})",
        exact,
        if orders.is_empty() { f64::NAN } else { min_order },
        worst
    );
}

fn central_column(
    model: &TesModel,
    x0: &TesState,
    t_surr: &[f64],
    ph: usize,
    dt: f64,
    eps: f64,
    n_sub: usize,
    j: usize,
) -> Vec<f64> {
    let mut up = InputTrajectory::zeros(ph);
    let mut dn = InputTrajectory::zeros(ph);
    if j % 2 == 0 {
        up.steps[j / 2].0 = eps;
        dn.steps[j / 2].0 = -eps;
    } else {
        up.steps[j / 2].1 = eps;
        dn.steps[j / 2].1 = -eps;
    }
    // Negative power is not a valid plant input, so mirror around zero via
    // the one-sided rollouts the solver itself would see.
    let yp = pnmpc::rollout(model, x0, &up, t_surr, dt, n_sub).unwrap();
    let y0 = pnmpc::rollout(model, x0, &InputTrajectory::zeros(ph), t_surr, dt, n_sub).unwrap();
    let p = yp.stacked_increments();
    let z = y0.stacked_increments();
    // One-sided reference at a tenth of the step; adequate for order checks.
    p.iter().zip(&z).map(|(a, b)| (a - b) / eps).collect()
}

fn col_err(g: &nalgebra::DMatrix<f64>, j: usize, reference: &[f64]) -> f64 {
    reference
        .iter()
        .enumerate()
        .map(|(i, r)| (g[(i, j)] - r).abs())
        .fold(0.0, f64::max)
}

// --- 4. MILP oracle --------------------------------------------------------

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-11 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[i][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[i][k] -= f * a[col][k];
                }
                b[i] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn vertex_enumeration_min(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let m = lp.num_rows();
    let total = n + m;
    let col = |j: usize, i: usize| -> f64 {
        if j < n {
            lp.rows[i][j]
        } else if j - n == i {
            1.0
        } else {
            0.0
        }
    };
    let mut best: Option<f64> = None;
    let mut basis = vec![0usize; m];
    fn rec(
        start: usize,
        depth: usize,
        m: usize,
        total: usize,
        basis: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if depth == m {
            visit(basis);
            return;
        }
        for j in start..total {
            basis[depth] = j;
            rec(j + 1, depth + 1, m, total, basis, visit);
        }
    }
    rec(0, 0, m, total, &mut basis, &mut |basis: &[usize]| {
        let a: Vec<Vec<f64>> = (0..m)
            .map(|i| basis.iter().map(|&j| col(j, i)).collect())
            .collect();
        if let Some(y) = gauss_solve(a, lp.row_upper.clone()) {
            if y.iter().all(|&v| v >= -1e-9) {
                let obj: f64 = basis
                    .iter()
                    .zip(&y)
                    .filter(|(&j, _)| j < n)
                    .map(|(&j, &v)| lp.objective[j] * v)
                    .sum();
                best = Some(best.map_or(obj, |cur: f64| cur.min(obj)));
            }
        }
    });
    best
}

#[test]
fn acceptance_4_milp_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    // Random inequality LPs against brute-force vertex enumeration.
    let mut worst_lp: f64 = 0.0;
    for case in 0..100 {
        let mut lp = LinearProgram::new(10);
        for c in lp.objective.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        for _ in 0..6 {
            let row: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            lp.add_row(row, f64::NEG_INFINITY, rng.gen_range(0.5..3.0));
        }
        lp.add_row(vec![1.0; 10], f64::NEG_INFINITY, rng.gen_range(5.0..15.0));
        let sol = solve_lp(&lp, LP_TOL);
        assert_eq!(sol.status, SolveStatus::Optimal, "case {case}");
        let oracle = vertex_enumeration_min(&lp).expect("bounded feasible LP");
        let dev = (sol.objective - oracle).abs() / (1.0 + oracle.abs());
        worst_lp = worst_lp.max(dev);
        assert!(dev <= LP_ORACLE_TOL, "case {case}: {} vs {}", sol.objective, oracle);
    }

    // Random MIPs with up to 8 binaries against exhaustive enumeration.
    let mut worst_mip: f64 = 0.0;
    for case in 0..100 {
        let n_bin = rng.gen_range(2..=8usize);
        let n = n_bin + rng.gen_range(0..=3usize);
        let mut lp = LinearProgram::new(n);
        for c in lp.objective.iter_mut() {
            *c = rng.gen_range(-2.0..2.0);
        }
        for j in 0..n {
            lp.var_upper[j] = if j < n_bin { 1.0 } else { rng.gen_range(1.0..4.0) };
        }
        for _ in 0..rng.gen_range(1..=4usize) {
            let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
            lp.add_row(row, f64::NEG_INFINITY, rng.gen_range(0.5..3.0));
        }
        let mut clauses = Vec::new();
        if n_bin >= 3 && rng.gen_bool(0.7) {
            clauses.push(Clause::AtLeastOne(vec![0, 1, 2]));
        }
        if n_bin >= 2 && rng.gen_bool(0.7) {
            clauses.push(Clause::AtMostOne(vec![n_bin - 2, n_bin - 1]));
        }
        let mip = MixedIntegerProgram {
            lp,
            binaries: (0..n_bin).collect(),
            clauses,
        };
        let sol = branch_and_bound(&mip, &BranchBoundOptions::default());

        let mut best: Option<f64> = None;
        for mask in 0..(1u32 << n_bin) {
            let bit = |v: usize| mask & (1 << v) != 0;
            let ok = mip.clauses.iter().all(|c| match c {
                Clause::AtLeastOne(ms) => ms.iter().any(|&v| bit(v)),
                Clause::AtMostOne(ms) => ms.iter().filter(|&&v| bit(v)).count() <= 1,
            });
            if !ok {
                continue;
            }
            let mut fixed = mip.lp.clone();
            for v in 0..n_bin {
                let val = if bit(v) { 1.0 } else { 0.0 };
                fixed.var_lower[v] = val;
                fixed.var_upper[v] = val;
            }
            let s = solve_lp(&fixed, LP_TOL);
            if s.status == SolveStatus::Optimal {
                best = Some(best.map_or(s.objective, |cur: f64| cur.min(s.objective)));
            }
        }
        match best {
            None => assert_eq!(sol.status, SolveStatus::Infeasible, "case {case}"),
            Some(obj) => {
                assert_eq!(sol.status, SolveStatus::Optimal, "case {case}");
                let dev = (sol.objective - obj).abs() / (1.0 + obj.abs());
                worst_mip = worst_mip.max(dev);
                assert!(dev <= 1e-9, "case {case}: {} vs {}", sol.objective, obj);
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "[acceptance] 4 milp oracle: PASS (lp worst {:.1e}, mip worst {:.1e}, {:.2?})",
        worst_lp, worst_mip, elapsed
    );
}

// --- 5. scheduler optimality at small scale --------------------------------

fn enumerate_schedule_min(sched: &scheduler::Schedule, ph: usize) -> Option<f64> {
    let mip = &sched.problem;
    let nb = 3 * ph; // d_tes, d_tes_sec per step plus derived d_e_sec
    let mut best: Option<f64> = None;
    for mask in 0..(1u64 << nb) {
        let bit = |i: usize| mask & (1 << i) != 0;
        // Variable layout: per step [q, q, d_tes, d_tes_sec], then d_e_sec.
        let assignment = |v: usize| -> bool {
            if v < 4 * ph {
                let k = v / 4;
                match v % 4 {
                    2 => bit(3 * k),
                    3 => bit(3 * k + 1),
                    _ => unreachable!(),
                }
            } else {
                bit(3 * (v - 4 * ph) + 2)
            }
        };
        let ok = mip.clauses.iter().all(|c| match c {
            Clause::AtLeastOne(ms) => ms.iter().any(|&v| assignment(v)),
            Clause::AtMostOne(ms) => ms.iter().filter(|&&v| assignment(v)).count() <= 1,
        });
        if !ok {
            continue;
        }
        let mut lp = mip.lp.clone();
        for &v in &mip.binaries {
            let val = if assignment(v) { 1.0 } else { 0.0 };
            lp.var_lower[v] = val;
            lp.var_upper[v] = val;
        }
        let s = solve_lp(&lp, LP_TOL);
        if s.status == SolveStatus::Optimal {
            best = Some(best.map_or(s.objective, |cur: f64| cur.min(s.objective)));
        }
    }
    best
}

#[test]
fn acceptance_5_scheduler_optimality_small_scale() {
    let start = Instant::now();
    let model = table_model();
    let mut cfg = AppConfig::default().scheduler_config();
    cfg.ph = 4;
    cfg.parallel = false;

    let scenarios: [(f64, [f64; 4], [f64; 4]); 3] = [
        // Peak step beyond evaporator capacity.
        (0.6, [600.0, 2000.0, 900.0, 700.0], [0.05, 0.09, 0.06, 0.04]),
        // Cheap-then-expensive with a late peak, storage at the floor.
        (0.08, [500.0, 550.0, 600.0, 1900.0], [0.03, 0.04, 0.06, 0.09]),
        // Flat demand and prices.
        (0.5, [700.0, 700.0, 700.0, 700.0], [0.06, 0.06, 0.06, 0.06]),
    ];
    for (i, (gamma0, demand, prices)) in scenarios.iter().enumerate() {
        let x0 = model.uniform_state(*gamma0, model.pcm.t_lat);
        let sched = scheduler::solve_schedule(&model, &x0, demand, prices, 25.0, &cfg)
            .unwrap_or_else(|e| panic!("scenario {i}: {e}"));
        let w_scale = scheduler::weight_scale(prices, cfg.dt_s);
        let const_cost: f64 = demand
            .iter()
            .zip(prices)
            .map(|(&d, &p)| scheduler::step_weight(p, cfg.dt_s) * d)
            .sum();
        let oracle =
            enumerate_schedule_min(&sched, 4).expect("enumeration finds a feasible pattern");
        let oracle_eur = oracle * w_scale + const_cost;
        let dev = (sched.objective_eur - oracle_eur).abs() / oracle_eur.abs().max(1e-12);
        assert!(
            dev <= SCHED_OPT_REL_TOL,
            "scenario {i}: scheduler {} vs enumeration {} ({dev:.2e})",
            sched.objective_eur,
            oracle_eur
        );
        if i == 1 {
            // The late peak forces pre-charging from the floor.
            assert!(
                sched.steps[..3]
                    .iter()
                    .any(|s| s.mode == OperatingMode::Mode2),
                "scenario 1 should charge before the peak"
            );
            assert_eq!(sched.steps[3].mode, OperatingMode::Mode3);
            for g in &sched.gamma_pred {
                assert!(*g >= cfg.gamma_min - 1e-6 && *g <= cfg.gamma_max + 1e-6);
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "[acceptance] 5 scheduler optimality (PH=4, 3 scenarios x 2^12 patterns): PASS ({:.2?})",
        elapsed
    );
}

// --- 6. case-study pattern --------------------------------------------------

fn run_case_study(parallel: bool) -> harness::RunReport {
    let app = AppConfig::default();
    let model = app.build_model().unwrap();
    let mut cfg = app.scheduler_config();
    cfg.parallel = parallel;
    let profiles = harness::load_profiles(&data_path("day_profile.csv"), app.dt_s).unwrap();
    harness::run_closed_loop(&model, &cfg, &profiles, app.gamma0).unwrap()
}

#[test]
fn acceptance_6_case_study_pattern() {
    let start = Instant::now();
    let report = run_case_study(true);
    let modes: Vec<u8> = report.steps.iter().map(|s| s.mode).collect();
    let peak_hour = 7usize;

    // (a) only modes 1..3
    assert!(modes.iter().all(|&m| (1..=3).contains(&m)), "modes {modes:?}");
    // (b) charging happens before the peak hour
    assert!(
        modes[..peak_hour].contains(&2),
        "no pre-peak charging in {modes:?}"
    );
    // (c) the peak hour needs the double contribution
    assert_eq!(modes[peak_hour], 3, "peak not covered by mode 3: {modes:?}");
    // (d) an evaporator-only period separates charging from discharging
    let last_pre_peak_charge = modes[..peak_hour].iter().rposition(|&m| m == 2).unwrap();
    let first_discharge_after = (last_pre_peak_charge + 1..modes.len())
        .find(|&k| modes[k] == 3)
        .expect("a discharge follows the charging phase");
    assert!(
        (last_pre_peak_charge + 1..first_discharge_after).any(|k| modes[k] == 1),
        "no mode-1 period between charging and discharging: {modes:?}"
    );
    // (e) demand met exactly every step
    for s in &report.steps {
        assert!(
            (s.q_e_sec_w + s.q_tes_sec_w - s.demand_w).abs() <= 1e-9 * s.demand_w,
            "hour {} demand identity",
            s.hour
        );
    }
    // (f) plant charge ratio within the slack band
    for s in &report.steps {
        assert!(
            s.gamma_plant >= GAMMA_PLANT_BAND.0 && s.gamma_plant <= GAMMA_PLANT_BAND.1,
            "hour {}: gamma {}",
            s.hour,
            s.gamma_plant
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "[acceptance] 6 case-study pattern: PASS (modes {:?}, cost {:.4} EUR, {:.2?})",
        modes, report.total_cost_eur, elapsed
    );
}

// --- 7. estimator tracking ---------------------------------------------------

#[test]
fn acceptance_7_estimator_tracking() {
    let report = run_case_study(false);
    assert!(
        report.max_gamma_tracking_err <= TRACKING_TOL,
        "tracking error {}",
        report.max_gamma_tracking_err
    );
    println!(
        "[acceptance] 7 estimator tracking: PASS (max |gamma_est - gamma_plant| = {:.2e})",
        report.max_gamma_tracking_err
    );
}

// --- 8. determinism -----------------------------------------------------------

#[test]
fn acceptance_8_determinism() {
    // Library-level: parallel and sequential runs must render identically.
    let a = run_case_study(true);
    let b = run_case_study(true);
    let c = run_case_study(false);
    let csv_a = harness::render_csv(&a);
    assert_eq!(csv_a, harness::render_csv(&b), "repeat run differs");
    assert_eq!(csv_a, harness::render_csv(&c), "thread mode changes output");
    assert_eq!(harness::render_summary(&a), harness::render_summary(&c));

    // End to end through the CLI binary.
    let out_a = std::env::temp_dir().join(format!("tes_acc8_a_{}", std::process::id()));
    let out_b = std::env::temp_dir().join(format!("tes_acc8_b_{}", std::process::id()));
    for out in [&out_a, &out_b] {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_tes-sched"))
            .args([
                "run",
                "--config",
                data_path("tank.cfg").to_str().unwrap(),
                "--scenario",
                data_path("day_profile.csv").to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .expect("spawn tes-sched");
        assert!(status.success(), "CLI run failed");
    }
    for name in ["report.csv", "summary.json"] {
        let fa = std::fs::read(out_a.join(name)).unwrap();
        let fb = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(fa, fb, "{name} differs between CLI runs");
    }
    std::fs::remove_dir_all(&out_a).ok();
    std::fs::remove_dir_all(&out_b).ok();
    println!("[acceptance] 8 determinism: PASS (library parallel/sequential + CLI byte-identical)");
}

// --- 9. price-scaling invariance ----------------------------------------------

#[test]
fn acceptance_9_price_scaling_invariance() {
    let app = AppConfig::default();
    let model = app.build_model().unwrap();
    let cfg = app.scheduler_config();
    let profiles = harness::load_profiles(&data_path("day_profile.csv"), app.dt_s).unwrap();
    let base = harness::run_closed_loop(&model, &cfg, &profiles, app.gamma0).unwrap();

    let mut scaled = profiles.clone();
    for p in scaled.price_eur_kwh.iter_mut() {
        *p *= 3.7;
    }
    let run = harness::run_closed_loop(&model, &cfg, &scaled, app.gamma0).unwrap();

    for (x, y) in base.steps.iter().zip(&run.steps) {
        assert_eq!(x.mode, y.mode, "hour {}: mode pattern changed", x.hour);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + a.abs());
        assert!(close(x.q_tes_w, y.q_tes_w), "hour {} q_tes", x.hour);
        assert!(close(x.q_tes_sec_w, y.q_tes_sec_w), "hour {} q_tes_sec", x.hour);
        assert!(close(x.q_e_sec_w, y.q_e_sec_w), "hour {} q_e_sec", x.hour);
    }
    let ratio = run.total_cost_eur / base.total_cost_eur;
    assert!((ratio - 3.7).abs() <= 1e-6 * 3.7, "cost ratio {ratio}");
    println!(
        "[acceptance] 9 price-scaling invariance: PASS (cost ratio {:.9})",
        ratio
    );
}

// --- report emission sanity (exercises the file interfaces end to end) -------

#[test]
fn report_files_roundtrip() {
    let report = run_case_study(false);
    let out = std::env::temp_dir().join(format!("tes_acc_report_{}", std::process::id()));
    let written = harness::emit_report(&report, &out, ReportFormat::Csv).unwrap();
    assert_eq!(written.len(), 2);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let total: f64 = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(11).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - report.total_cost_eur).abs() <= 1e-9);
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&summary).unwrap();
    let hist = &parsed["mode_histogram"];
    let sum = hist["mode1"].as_u64().unwrap()
        + hist["mode2"].as_u64().unwrap()
        + hist["mode3"].as_u64().unwrap()
        + hist["mode4"].as_u64().unwrap();
    assert_eq!(sum as usize, report.steps.len());
    std::fs::remove_dir_all(&out).ok();
}
