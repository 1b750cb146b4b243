// dev probe: tune (q, beta, eta) for the Heawood ordered coupling tests
use rclab_core::coupling::{wsm_check, CouplingOutcome, RevealingCoupler, SamplerMode};
use rclab_core::dynamics::tv_distance_empirical;
use rclab_core::graph::Graph;
use rclab_core::model::{ModelParams, PhaseLabel};
use rclab_core::oracle::{Oracle, Restriction};

fn main() {
    let g = Graph::heawood();
    let o = Oracle::new(&g).unwrap();
    for (q, beta, eta) in [(4.0, 3.0, 0.45), (4.0, 4.0, 0.45), (6.0, 4.0, 0.45), (4.0, 5.0, 0.45), (8.0, 5.0, 0.45)] {
        let p = ModelParams::with_margins(q, beta, 3, eta, 0.2).unwrap();
        let pi_ord = o.distribution(&p, &Restriction::ordered()).unwrap();
        let mut coupler = RevealingCoupler::new(&o, &p, SamplerMode::Oracle);
        let n_seeds = 10_000usize;
        let mut agree = 0usize;
        let mut occ = 0usize;
        let mut wit = 0usize;
        let mut samples_ord = Vec::with_capacity(n_seeds);
        let mut samples_plus = Vec::with_capacity(n_seeds);
        for seed in 0..n_seeds as u64 {
            let run = coupler.run_ordered(0, 2, seed).unwrap();
            match run.outcome {
                CouplingOutcome::AgreeAtV => agree += 1,
                CouplingOutcome::UnsuccessfulOccupancy => occ += 1,
                _ => wit += 1,
            }
            samples_ord.push(run.f_phase);
            samples_plus.push(run.f_boundary);
        }
        let tv_ord = tv_distance_empirical(&samples_ord, &pi_ord).unwrap();
        let clamp = rclab_core::coupling::boundary_clamp(&g, &rclab_core::graph::ball(&g, 0, 2), rclab_core::coupling::BoundaryCondition::Plus);
        let pi_plus = o.distribution(&p, &Restriction::clamp(clamp)).unwrap();
        let tv_plus = tv_distance_empirical(&samples_plus, &pi_plus).unwrap();
        // wsm gap curve r = 1..3
        let e = g.incident_edges(0)[0] as usize;
        let gaps: Vec<f64> = (1..=3).map(|r| wsm_check(&o, &p, 0, e, r, PhaseLabel::Ordered).unwrap().gap).collect();
        println!("q={q} b={beta} eta={eta}: agree {agree} occ {occ} wit {wit} | tv_ord {tv_ord:.4} tv_plus {tv_plus:.4} | gaps {gaps:?}");
    }
}
