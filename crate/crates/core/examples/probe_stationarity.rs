use rclab_core::dynamics::{exact_tv_curve, run_chain, tv_distance_empirical};
use rclab_core::graph::generate_random_regular;
use rclab_core::model::{Configuration, ModelParams};
use rclab_core::oracle::{Oracle, Restriction};
use std::time::Instant;

fn main() {
    let g = generate_random_regular(8, 3, 2, true).unwrap();
    let m = g.m();
    let p = ModelParams::with_margins(2.0, 3.0, 3, 0.01, 0.005).unwrap();
    let steps = (10.0 * m as f64 * (m as f64).ln()).ceil() as usize;
    let curve = exact_tv_curve(&g, &p, &Configuration::all_out(m), steps + 1).unwrap();
    println!("exact TV from all-out after {steps} steps: {:.5}", curve.get(steps).copied().unwrap_or(*curve.last().unwrap()));
    let o = Oracle::new(&g).unwrap();
    let pi = o.distribution(&p, &Restriction::none()).unwrap();
    let t0 = Instant::now();
    let n_runs = 100_000usize;
    let mut samples = Vec::with_capacity(n_runs);
    for seed in 0..n_runs as u64 {
        samples.push(run_chain(&g, &p, &Configuration::all_out(m), steps as u64, seed, 0).final_config);
    }
    let tv = tv_distance_empirical(&samples, &pi).unwrap();
    println!("empirical TV at 1e5 runs: {tv:.4} in {:?}", t0.elapsed());
}
