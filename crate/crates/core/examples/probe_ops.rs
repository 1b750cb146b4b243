use rclab_core::connectivity::{ConnectivityEngine, EngineKind, HdtConnectivity};
use rclab_core::dynamics::{ChainState, RngStream};
use rclab_core::graph::generate_random_regular;
use rclab_core::model::{Configuration, ModelParams};
use std::time::Instant;

fn main() {
    let n = 10_000usize;
    let g = generate_random_regular(n, 5, 3, true).unwrap();
    let m = g.m();
    let p = ModelParams::with_margins(8.0, 1.2, 5, 0.01, 0.005).unwrap();
    let mut x0 = Configuration::all_out(m);
    for e in 0..m { if e % 2 == 0 { x0.set(e, true); } }
    // warm up a chain, then classify steps
    let mut s = ChainState::new(&g, &x0, EngineKind::Hdt);
    let mut rng = RngStream::new(1);
    for _ in 0..20_000u64 { let (e, u) = rng.next(m); s.apply_step(&g, &p, e, u); }
    println!("density after warmup: {:.3}", s.in_count() as f64 / m as f64);
    // raw engine op timing: insert/delete cycles on tree vs nontree edges
    let mut eng = HdtConnectivity::new(n);
    for (u, v) in g.edges() { eng.insert_edge(u, v).unwrap(); }
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let t0 = Instant::now();
    let mut cnt_tree = 0; let mut cnt_non = 0;
    for i in 0..4000 {
        let (u, v) = edges[(i * 37) % m];
        if eng.is_forest_edge(u, v) == Some(true) { cnt_tree += 1; } else { cnt_non += 1; }
        eng.delete_edge(u, v).unwrap();
        eng.insert_edge(u, v).unwrap();
    }
    println!("4000 delete+insert cycles (tree {cnt_tree} nontree {cnt_non}): {:?}", t0.elapsed());
    let t0 = Instant::now();
    let mut acc = 0usize;
    for i in 0..40_000 { let (u, v) = edges[(i * 37) % m]; acc += eng.connected(u, v) as usize; }
    println!("40000 connected queries: {:?} (acc {acc})", t0.elapsed());
}
