// dev probe: closure growth bound and Heawood certification numbers
use rclab_core::graph::{ball, bfs_decomposition, expansion_profile, generate_random_regular, ExpansionMode, Graph};
use rclab_core::polymers::b_closure;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    // closure bound |B_inf(A)| <= 10|A| on certified Delta=5 expanders
    for n in [12usize, 16, 20, 24] {
        let mut worst_ratio = 0.0f64;
        for seed in 0..6u64 {
            let g = match generate_random_regular(n, 5, seed, true) { Ok(g)=>g, Err(_)=>continue };
            let phi_half = expansion_profile(&g, 0.5, ExpansionMode::Exact).unwrap().value;
            if phi_half < 0.1 { continue; }
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
            let mut edges: Vec<usize> = (0..g.m()).collect();
            for _ in 0..2000 {
                edges.shuffle(&mut rng);
                let k = 1 + rng.random_range(0..=(g.m()/4));
                let a: Vec<usize> = edges[..k].to_vec();
                let c = b_closure(&g, &a);
                let ratio = c.len() as f64 / a.len() as f64;
                if ratio > worst_ratio { worst_ratio = ratio; }
            }
        }
        println!("n={n} Delta=5: worst closure ratio over |A| <= m/4: {worst_ratio:.3}");
    }
    // Heawood: certification + ball structure
    let h = Graph::heawood();
    let phi_half = expansion_profile(&h, 0.5, ExpansionMode::Exact).unwrap().value;
    let phi_02 = expansion_profile(&h, 0.2, ExpansionMode::Exact).unwrap().value;
    let phi_01 = expansion_profile(&h, 1.0/14.0, ExpansionMode::Exact).unwrap().value;
    println!("heawood: phi(1/2)={phi_half:.4} phi(0.2)={phi_02:.4} phi(1/14)={phi_01:.4}");
    let d = bfs_decomposition(&h, 0, 2);
    println!("heawood B_2(0): tree edges {}, excess {}", d.tree_edges.len(), d.excess_edges.len());
    let b = ball(&h, 0, 2);
    println!("heawood |B_2| = {}, |E(B_2)| = {}, shell {}", b.vertices.len(), b.edges.len(), b.shell.len());
}
