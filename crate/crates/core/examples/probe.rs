//! Scratch probe: grid-search behavior on generated MCND instances.
use bundlenet::eta::{EtaConfig, EtaKind};
use bundlenet::harness::build_oracle;
use bundlenet::oracles::{generate_mcnd, Instance, McndGenParams};
use bundlenet::solver::{run_bundle, SolverConfig};
use bundlenet::trace::Termination;

fn main() {
    let params = McndGenParams::default();
    let budgets = [10usize, 25, 50, 100];
    let grid = [0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0];
    let n = 8;

    // references
    let mut refs = Vec::new();
    let mut oracles = Vec::new();
    for seed in 0..n {
        let inst = Instance::Mcnd(generate_mcnd(&params, 100 + seed).unwrap());
        let oracle = build_oracle(inst).unwrap();
        let mut best = f64::NEG_INFINITY;
        for &eta0 in &grid {
            let mut cfg = SolverConfig::new(EtaConfig::new(EtaKind::Constant, eta0));
            cfg.max_iter = 150; cfg.record_times = false;
            let t = run_bundle(&oracle, &vec![0.0; oracle_dim(&oracle)], &cfg).unwrap();
            best = best.max(t.best_raw_lr_within(None));
        }
        let mut cfg = SolverConfig::new(EtaConfig::new(EtaKind::Soft, 10.0));
        cfg.max_iter = 2000; cfg.epsilon = 1e-8; cfg.record_times = false;
        let t = run_bundle(&oracle, &vec![0.0; oracle_dim(&oracle)], &cfg).unwrap();
        if let Termination::Error(e) = &t.termination { eprintln!("ref err: {e}"); }
        best = best.max(t.best_raw_lr_within(None));
        println!("instance {seed}: ref = {best:.4}, scale = {:.3}", bundlenet::oracles::Oracle::scale(&oracle));
        refs.push(best);
        oracles.push(oracle);
    }

    for &eta0 in &grid {
        print!("eta0 {eta0:>8}: ");
        for &b in &budgets {
            let mut gap_sum = 0.0;
            for (oracle, reference) in oracles.iter().zip(&refs) {
                let mut cfg = SolverConfig::new(EtaConfig::new(EtaKind::Constant, eta0));
                cfg.max_iter = b; cfg.record_times = false;
                let t = run_bundle(oracle, &vec![0.0; oracle_dim(oracle)], &cfg).unwrap();
                let bound = t.best_raw_lr_within(None);
                gap_sum += 100.0 * (reference - bound) / reference;
            }
            print!("b{b}: {:7.3}%  ", gap_sum / n as f64);
        }
        println!();
    }
}

fn oracle_dim(o: &impl bundlenet::oracles::Oracle) -> usize { o.dimension() }
