use std::time::Instant;
use tes_sched::config::AppConfig;
use tes_sched::estimator::{self, Measurement};
use tes_sched::harness::{load_profiles, run_closed_loop};
use tes_sched::scheduler;

fn main() {
    let cfg = AppConfig::default();
    let model = cfg.build_model().unwrap();
    let sc = cfg.scheduler_config();
    let profiles = load_profiles(std::path::Path::new("crates/core/data/day_profile.csv"), 3600.0).unwrap();

    // Per-period diagnostics
    let mut plant = model.uniform_state(cfg.gamma0, model.pcm.t_lat);
    let mut est = estimator::initial_estimate(&model, cfg.gamma0, &Measurement { t_int: plant.t_int, t_surr: profiles.t_surr_c[0], time_s: 0.0 });
    let mut prev = Measurement { t_int: plant.t_int, t_surr: profiles.t_surr_c[0], time_s: 0.0 };
    let mut applied = (0.0, 0.0);
    let hold = |v: &Vec<f64>, t: usize| -> Vec<f64> {
        (t..t + 12).map(|i| *v.get(i).unwrap_or(v.last().unwrap())).collect()
    };
    for t in 0..12 {
        if t > 0 {
            let now = Measurement { t_int: plant.t_int, t_surr: profiles.t_surr_c[t], time_s: t as f64 * 3600.0 };
            let du = estimator::estimate_transferred_energy(&model, &now, &prev, applied.0, applied.1, 3600.0);
            est = estimator::update_state(&model, &est, du, &now).0;
            prev = now;
        }
        let t0 = Instant::now();
        let s = scheduler::solve_schedule(&model, &est.state, &hold(&profiles.demand_w, t), &hold(&profiles.price_eur_kwh, t), profiles.t_surr_c[t], &sc).unwrap();
        let a = scheduler::step_receding_horizon(&s);
        let out = model.simulate_step(&plant, a.q_tes, a.q_tes_sec, profiles.t_surr_c[t], 3600.0, 60).unwrap();
        plant = out.state;
        applied = (a.q_tes, a.q_tes_sec);
        println!(
            "t={t:2} mode{} q_e={:7.1} q_tes={:7.1} q_sec={:7.1} gamma={:.3} est={:.3} | {:5.2}s nodes={:5} iters={} conv={} resim={:.4}",
            a.mode.number(), a.q_e_sec, a.q_tes, a.q_tes_sec,
            model.charge_ratio(&plant), est.gamma,
            t0.elapsed().as_secs_f64(), s.diagnostics.total_nodes,
            s.diagnostics.limit_iterations, s.diagnostics.converged, s.diagnostics.resim_gamma_max_err
        );
    }
    let t0 = Instant::now();
    let report = run_closed_loop(&model, &sc, &profiles, cfg.gamma0).unwrap();
    println!("full loop {:.2}s cost {:.4} modes {:?} track {:.5} resim {:.4} conv {}",
        t0.elapsed().as_secs_f64(), report.total_cost_eur, report.mode_histogram,
        report.max_gamma_tracking_err, report.max_resim_gamma_err, report.all_converged);
}
