// dev probe: oracle-scale phase crossover + n=128 bottleneck behavior
use rclab_core::dynamics::{coalescence_time, run_chain, tv_projected, ChainState, Coalescence, RejectionPolicy, RngStream};
use rclab_core::graph::generate_random_regular;
use rclab_core::model::{beta_c, Configuration, ModelParams};
use rclab_core::oracle::{Oracle, Restriction};
use std::time::Instant;

fn main() {
    // 1. oracle-scale crossover at n=8, Delta=5 (m=20)
    let g8 = generate_random_regular(8, 5, 11, true).unwrap();
    let o = Oracle::new(&g8).unwrap();
    for q in [8.0f64, 16.0] {
        let bc = beta_c(q, 5).unwrap();
        print!("q={q} beta_c={bc:.4}: mass_ord over beta/beta_c in [0.6..1.4]:");
        for factor in [0.6, 0.8, 0.9, 1.0, 1.1, 1.2, 1.4] {
            let p = ModelParams::with_margins(q, bc * factor, 5, 0.25, 0.1).unwrap();
            let pi = o.distribution(&p, &Restriction::none()).unwrap();
            let mut mass_ord = 0.0;
            let mut mass_dis = 0.0;
            for (idx, &pr) in pi.probs.iter().enumerate() {
                let f = (idx as u64).count_ones() as usize;
                if p.is_ordered(f, 20) { mass_ord += pr; }
                if p.is_disordered(f, 20) { mass_dis += pr; }
            }
            print!(" {factor}:{mass_ord:.3}/{mass_dis:.3}");
        }
        println!();
    }
    // 2. n = 128 bottleneck
    let n = 128usize;
    let g = generate_random_regular(n, 5, 1, true).unwrap();
    let m = g.m();
    let q = 16.0f64;
    let bc = beta_c(q, 5).unwrap();
    let t0 = Instant::now();
    for factor in [0.7, 1.0, 1.3] {
        let p = ModelParams::with_margins(q, bc * factor, 5, 0.25, 0.1).unwrap();
        let c = coalescence_time(&g, &p, 7, 1_000_000);
        println!("factor {factor}: coalescence {:?} ({:.1?})", c, t0.elapsed());
    }
    // 3. projected mixing check at 0.7 and 1.3 beta_c
    let budget = (50.0 * m as f64 * (m as f64).ln()) as u64;
    println!("mixing budget = {budget} steps (50 m ln m)");
    for (factor, from_in, policy) in [(0.7, false, RejectionPolicy::KeepDisordered), (1.3, true, RejectionPolicy::KeepOrdered)] {
        let p = ModelParams::with_margins(q, bc * factor, 5, 0.25, 0.1).unwrap();
        // reference: rejection chain histogram
        let x0 = if from_in { Configuration::all_in(m) } else { Configuration::all_out(m) };
        let mut chain = ChainState::new(&g, &x0, rclab_core::connectivity::EngineKind::Auto);
        let mut rng = RngStream::new(999);
        let burn = 20 * m as u64 * 6;
        for _ in 0..burn { let (e, u) = rng.next(m); 
            let old = chain.config().get(e);
            chain.apply_step(&g, &p, e, u);
            let bad = match policy { RejectionPolicy::KeepOrdered => !p.is_ordered(chain.in_count(), m), RejectionPolicy::KeepDisordered => !p.is_disordered(chain.in_count(), m), _ => false };
            if bad { chain.force_set(&g, e, old); }
        }
        let n_ref = 4000usize;
        let buckets = 32usize;
        let mut ref_hist = vec![0.0f64; buckets];
        for _ in 0..n_ref {
            for _ in 0..m { let (e, u) = rng.next(m);
                let old = chain.config().get(e);
                chain.apply_step(&g, &p, e, u);
                let bad = match policy { RejectionPolicy::KeepOrdered => !p.is_ordered(chain.in_count(), m), RejectionPolicy::KeepDisordered => !p.is_disordered(chain.in_count(), m), _ => false };
                if bad { chain.force_set(&g, e, old); }
            }
            let b = chain.in_count() * buckets / (m + 1);
            ref_hist[b] += 1.0 / n_ref as f64;
        }
        // test chains
        let mut pass = 0usize;
        let seeds = 10u64;
        for seed in 0..seeds {
            let out = run_chain(&g, &p, &x0, budget, seed, m as u64);
            let half = out.samples.len() / 2;
            let sample_buckets: Vec<usize> = out.samples[half..].iter().map(|s| s.in_count * buckets / (m + 1)).collect();
            let tv = tv_projected(&sample_buckets, &ref_hist);
            if tv <= 0.25 { pass += 1; }
        }
        println!("factor {factor} start_in={from_in}: {pass}/{seeds} seeds mixed ({:.1?})", t0.elapsed());
    }
}
