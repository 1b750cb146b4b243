// dev probe: where does the ordered factorization hold?
use rclab_core::graph::{expansion_profile, generate_random_regular, ExpansionMode};
use rclab_core::model::{Configuration, ModelParams};
use rclab_core::polymers::check_ordered_factorization;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    for (n, delta, eta) in [(12usize, 5usize, 0.15f64), (12, 5, 0.2), (16, 5, 0.2), (20, 5, 0.2), (16, 5, 0.25), (20, 5, 0.25), (14, 3, 0.2), (20, 3, 0.15)] {
        let mut fails = 0usize;
        let mut tried = 0usize;
        let mut graphs_cert = 0usize;
        for seed in 0..8u64 {
            let g = match generate_random_regular(n, delta, seed, true) { Ok(g) => g, Err(_) => continue };
            let phi_half = expansion_profile(&g, 0.5, ExpansionMode::Exact).unwrap().value;
            let phi_d = expansion_profile(&g, 0.1f64.max(1.0/n as f64), ExpansionMode::Exact).unwrap().value;
            if phi_half < 0.1 || phi_d < 5.0/9.0 { continue; }
            graphs_cert += 1;
            let p = ModelParams::with_margins(8.0, 2.0, delta, eta, eta/2.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + 1);
            let max_flips = (eta * g.m() as f64).floor() as usize;
            for _ in 0..800 {
                let k = rng.random_range(0..=max_flips);
                let mut f = Configuration::all_in(g.m());
                let mut edges: Vec<usize> = (0..g.m()).collect();
                edges.shuffle(&mut rng);
                for &e in edges.iter().take(k) { f.set(e, false); }
                tried += 1;
                let r = check_ordered_factorization(&g, &f, &p).unwrap();
                if r > 1e-9 { fails += 1; }
            }
        }
        println!("n={n} delta={delta} eta={eta}: certified graphs {graphs_cert}, {fails}/{tried} failures");
    }
}
