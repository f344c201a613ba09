use std::time::Instant;
use milp::{branch_and_bound, BranchBoundOptions};
use tes_sched::config::AppConfig;
use tes_sched::pnmpc::{self, InputTrajectory};
use tes_sched::scheduler::{self};

fn main() {
    let cfg = AppConfig::default();
    let model = cfg.build_model().unwrap();
    let sc = cfg.scheduler_config();
    let demand: Vec<f64> = vec![500.0, 480.0, 460.0, 470.0, 550.0, 800.0, 1200.0, 2100.0, 1300.0, 1000.0, 750.0, 600.0];
    let price: Vec<f64> = vec![0.052, 0.049, 0.047, 0.050, 0.058, 0.061, 0.064, 0.082, 0.071, 0.067, 0.050, 0.053];
    let x0 = model.uniform_state(0.10, model.pcm.t_lat);

    let eps = 0.01 * model.limits_from_boundary(Some(19)).0;
    let pred = pnmpc::jacobian(&model, &x0, &vec![24.0; 12], 12, 3600.0, eps, 60, false).unwrap();
    let mut limits = scheduler::limits_along(&model, &x0, &pred, &InputTrajectory::zeros(12), &sc).unwrap();
    let opts = BranchBoundOptions { node_limit: 20000, rel_gap: 1e-7, ..Default::default() };
    for iter in 1..=5 {
        let mip = scheduler::build_problem(&pred, &demand, &price, &limits, &sc).unwrap();
        let t0 = Instant::now();
        let sol = branch_and_bound(&mip, &opts);
        println!("iter {iter}: {:?} status {:?} nodes {} obj {}", t0.elapsed(), sol.status, sol.nodes, sol.objective);
        if sol.x.is_empty() { break; }
        let mut u = InputTrajectory::zeros(12);
        for k in 0..12 { u.steps[k] = (sol.x[4*k].max(0.0), sol.x[4*k+1].max(0.0)); }
        println!("  u: {:?}", u.steps.iter().map(|s| (s.0.round(), s.1.round())).collect::<Vec<_>>());
        limits = scheduler::limits_along(&model, &x0, &pred, &u, &sc).unwrap();
        println!("  caps: {:?}", limits.iter().map(|l| (l.q_tes_max.round(), l.q_tes_sec_max.round())).collect::<Vec<_>>());
    }
}
