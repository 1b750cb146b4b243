use rclab_core::connectivity::EngineKind;
use rclab_core::dynamics::{ChainState, RngStream};
use rclab_core::graph::generate_random_regular;
use rclab_core::model::{beta_c, Configuration, ModelParams};
use std::time::Instant;

fn main() {
    let n = 10_000usize;
    let g = generate_random_regular(n, 5, 3, true).unwrap();
    let m = g.m();
    let q = 8.0;
    let bc = beta_c(q, 5).unwrap();
    for (name, factor, from_in) in [("disordered(0.7bc,all-out)", 0.7, false), ("ordered(1.3bc,all-in)", 1.3, true), ("mid(1.2abs)", 1.2 / bc, false)] {
        let p = ModelParams::with_margins(q, bc * factor, 5, 0.01, 0.005).unwrap();
        let x0 = if from_in { Configuration::all_in(m) } else { Configuration::all_out(m) };
        let mut results = Vec::new();
        for (kind, ename, steps) in [(EngineKind::Hdt, "hdt", 4000u64), (EngineKind::UnionFind, "uf", 4000)] {
            let mut s = ChainState::new(&g, &x0, kind);
            let mut rng = RngStream::new(1);
            // warm up into the regime
            for _ in 0..30_000 { let (e, u) = rng.next(m); s.apply_step(&g, &p, e, u); }
            let t0 = Instant::now();
            for _ in 0..steps { let (e, u) = rng.next(m); s.apply_step(&g, &p, e, u); }
            let dt = t0.elapsed().as_micros() as f64 / steps as f64;
            results.push((ename, dt, s.in_count() as f64 / m as f64));
        }
        let ratio = results[1].1 / results[0].1;
        println!("{name}: hdt {:.1}us uf {:.1}us ratio {ratio:.1} (density {:.3})", results[0].1, results[1].1, results[0].2);
    }
}
