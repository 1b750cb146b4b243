//! Ordered and disordered polymer extraction, the B-infinity closure, and
//! the weight factorization identities.

use crate::graph::Graph;
use crate::model::{log_weight, Configuration, ModelParams, PartialConfiguration, UnionFind};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolymerError {
    #[error("configuration violates the {0} occupancy precondition")]
    PhaseViolation(&'static str),
}

/// Closure threshold: a vertex activates once at least ceil(5*Delta/9) of its
/// incident edges are in the set (edge counts are integers, so the real
/// threshold 5*Delta/9 is compared as a ceiling).
pub fn closure_threshold(delta: usize) -> usize {
    (5 * delta).div_ceil(9)
}

/// Least fixed point of "add all edges incident to any vertex carrying at
/// least 5*Delta/9 edges of the set".
pub fn b_closure(g: &Graph, a: &[usize]) -> Vec<usize> {
    let thr = closure_threshold(g.max_degree());
    let mut in_set = vec![false; g.m()];
    let mut count = vec![0usize; g.n()];
    let mut queue: std::collections::VecDeque<usize> = Default::default();
    let add_edge = |e: usize,
                        in_set: &mut Vec<bool>,
                        count: &mut Vec<usize>,
                        queue: &mut std::collections::VecDeque<usize>| {
        if in_set[e] {
            return;
        }
        in_set[e] = true;
        let (u, v) = g.edge(e);
        for w in [u, v] {
            count[w] += 1;
            if count[w] == thr {
                queue.push_back(w);
            }
            if u == v {
                break; // self-loop counted once per endpoint slot
            }
        }
    };
    for &e in a {
        add_edge(e, &mut in_set, &mut count, &mut queue);
    }
    while let Some(v) = queue.pop_front() {
        if count[v] < thr {
            continue;
        }
        for &e in g.incident_edges(v) {
            add_edge(e as usize, &mut in_set, &mut count, &mut queue);
        }
    }
    (0..g.m()).filter(|&e| in_set[e]).collect()
}

/// A disordered polymer: one connected component of G[In(F)], including
/// singleton vertices (which carry weight 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderedPolymer {
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
    pub log_weight: f64,
}

/// An ordered polymer: one connected component of G[B_inf(Out(F))] with the
/// labeling induced by F. `unoccupied` is E_u (the out-edges inside), and
/// `small_components` is c' (components of G[E \ E_u] with fewer than n/2
/// vertices).
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedPolymer {
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
    pub unoccupied: Vec<usize>,
    pub small_components: usize,
    pub log_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolymerFlavor {
    Ordered,
    Disordered,
}

/// Disordered polymers of a configuration with |In| <= eta*m: the components
/// of G[In(F)], with log-weight (1 - |V|) ln q + |E| ln(e^b - 1).
pub fn disordered_polymers(
    g: &Graph,
    f: &Configuration,
    params: &ModelParams,
) -> Result<Vec<DisorderedPolymer>, PolymerError> {
    if !params.is_disordered(f.in_count(), g.m()) {
        return Err(PolymerError::PhaseViolation("disordered"));
    }
    let mut uf = UnionFind::new(g.n());
    for e in f.iter_in() {
        let (u, v) = g.edge(e);
        uf.union(u, v);
    }
    let mut by_root: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> =
        Default::default();
    for v in 0..g.n() {
        let r = uf.find(v);
        by_root.entry(r).or_default().0.push(v);
    }
    for e in f.iter_in() {
        let (u, _) = g.edge(e);
        let r = uf.find(u);
        by_root.get_mut(&r).expect("root present").1.push(e);
    }
    Ok(by_root
        .into_values()
        .map(|(vertices, edges)| {
            let lw = (1.0 - vertices.len() as f64) * params.log_q()
                + edges.len() as f64 * params.log_w();
            DisorderedPolymer { vertices, edges, log_weight: lw }
        })
        .collect())
}

/// Ordered polymers of a configuration with |In| >= (1-eta)*m: components of
/// G[B_inf(Out(F))], each weighted q^{c'} (e^b - 1)^{-|E_u|}.
pub fn ordered_polymers(
    g: &Graph,
    f: &Configuration,
    params: &ModelParams,
) -> Result<Vec<OrderedPolymer>, PolymerError> {
    if !params.is_ordered(f.in_count(), g.m()) {
        return Err(PolymerError::PhaseViolation("ordered"));
    }
    let out: Vec<usize> = f.iter_out().collect();
    Ok(ordered_polymers_from_out(g, &out, params))
}

/// Ordered polymers of a partial configuration; the occupancy precondition is
/// on its revealed in-edges.
pub fn ordered_polymers_partial(
    g: &Graph,
    a: &PartialConfiguration,
    params: &ModelParams,
) -> Result<Vec<OrderedPolymer>, PolymerError> {
    if !params.is_ordered(a.in_count(), g.m()) {
        return Err(PolymerError::PhaseViolation("ordered"));
    }
    let out: Vec<usize> = a.out_edges().collect();
    Ok(ordered_polymers_from_out(g, &out, params))
}

fn ordered_polymers_from_out(
    g: &Graph,
    out_edges: &[usize],
    params: &ModelParams,
) -> Vec<OrderedPolymer> {
    let closure = b_closure(g, out_edges);
    let out_set: std::collections::HashSet<usize> = out_edges.iter().copied().collect();
    // components of G[closure]
    let mut uf = UnionFind::new(g.n());
    for &e in &closure {
        let (u, v) = g.edge(e);
        uf.union(u, v);
    }
    let mut by_root: std::collections::BTreeMap<usize, OrderedPolymer> = Default::default();
    let mut vertex_in_closure = vec![false; g.n()];
    for &e in &closure {
        let (u, v) = g.edge(e);
        vertex_in_closure[u] = true;
        vertex_in_closure[v] = true;
    }
    for v in 0..g.n() {
        if vertex_in_closure[v] {
            let r = uf.find(v);
            by_root
                .entry(r)
                .or_insert_with(|| OrderedPolymer {
                    vertices: Vec::new(),
                    edges: Vec::new(),
                    unoccupied: Vec::new(),
                    small_components: 0,
                    log_weight: 0.0,
                })
                .vertices
                .push(v);
        }
    }
    for &e in &closure {
        let (u, _) = g.edge(e);
        let r = uf.find(u);
        let poly = by_root.get_mut(&r).expect("closure component");
        poly.edges.push(e);
        if out_set.contains(&e) {
            poly.unoccupied.push(e);
        }
    }
    // c'(gamma): components of G[E \ E_u(gamma)] with fewer than n/2 vertices
    let half = g.n() as f64 / 2.0;
    let mut polys: Vec<OrderedPolymer> = by_root.into_values().collect();
    for poly in polys.iter_mut() {
        let banned: std::collections::HashSet<usize> = poly.unoccupied.iter().copied().collect();
        let mut uf2 = UnionFind::new(g.n());
        for e in 0..g.m() {
            if !banned.contains(&e) {
                let (u, v) = g.edge(e);
                uf2.union(u, v);
            }
        }
        let mut sizes: std::collections::HashMap<usize, usize> = Default::default();
        for v in 0..g.n() {
            *sizes.entry(uf2.find(v)).or_insert(0) += 1;
        }
        poly.small_components = sizes.values().filter(|&&s| (s as f64) < half).count();
        poly.log_weight = poly.small_components as f64 * params.log_q()
            - poly.unoccupied.len() as f64 * params.log_w();
    }
    polys
}

/// |log w_G(F) - (ln q + m ln(e^b - 1) + sum of ordered polymer log-weights)|.
pub fn check_ordered_factorization(
    g: &Graph,
    f: &Configuration,
    params: &ModelParams,
) -> Result<f64, PolymerError> {
    let polys = ordered_polymers(g, f, params)?;
    let rhs = params.log_q()
        + g.m() as f64 * params.log_w()
        + polys.iter().map(|p| p.log_weight).sum::<f64>();
    Ok((log_weight(g, f, params) - rhs).abs())
}

/// |log w_G(F) - (n ln q + sum of disordered polymer log-weights)|.
pub fn check_disordered_factorization(
    g: &Graph,
    f: &Configuration,
    params: &ModelParams,
) -> Result<f64, PolymerError> {
    let polys = disordered_polymers(g, f, params)?;
    let rhs =
        g.n() as f64 * params.log_q() + polys.iter().map(|p| p.log_weight).sum::<f64>();
    Ok((log_weight(g, f, params) - rhs).abs())
}

/// Maximum edge count over the configuration's polymers (0 if none).
pub fn largest_polymer_size(
    g: &Graph,
    f: &Configuration,
    flavor: PolymerFlavor,
    params: &ModelParams,
) -> Result<usize, PolymerError> {
    match flavor {
        PolymerFlavor::Ordered => Ok(ordered_polymers(g, f, params)?
            .iter()
            .map(|p| p.edges.len())
            .max()
            .unwrap_or(0)),
        PolymerFlavor::Disordered => Ok(disordered_polymers(g, f, params)?
            .iter()
            .map(|p| p.edges.len())
            .max()
            .unwrap_or(0)),
    }
}

/// Largest in-component edge count, with no phase precondition (used as the
/// witness extraction for the disordered revealing coupling).
pub fn largest_in_component_edges(g: &Graph, f: &Configuration) -> usize {
    let mut uf = UnionFind::new(g.n());
    for e in f.iter_in() {
        let (u, v) = g.edge(e);
        uf.union(u, v);
    }
    let mut edge_counts: std::collections::HashMap<usize, usize> = Default::default();
    for e in f.iter_in() {
        let (u, _) = g.edge(e);
        *edge_counts.entry(uf.find(u)).or_insert(0) += 1;
    }
    edge_counts.values().copied().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{expansion_profile, generate_random_regular, ExpansionMode};
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(q: f64, beta: f64, eta: f64) -> ModelParams {
        ModelParams::with_margins(q, beta, 5, eta, eta / 2.0).unwrap()
    }

    #[test]
    fn closure_threshold_is_integer_ceiling() {
        assert_eq!(closure_threshold(5), 3); // 25/9 -> 3
        assert_eq!(closure_threshold(3), 2); // 15/9 -> 2
        assert_eq!(closure_threshold(9), 5); // 45/9 -> 5 exactly
    }

    #[test]
    fn closure_base_cases() {
        let g = generate_random_regular(12, 5, 3, true).unwrap();
        // single edge: no vertex reaches 3 of 5 incident edges
        let a = vec![0usize];
        assert_eq!(b_closure(&g, &a), a);
        // everything: idempotent ceiling
        let all: Vec<usize> = (0..g.m()).collect();
        assert_eq!(b_closure(&g, &all), all);
    }

    #[test]
    fn closure_activates_a_heavy_vertex() {
        // Delta = 5: three edges sharing a vertex pull in all five
        let g = generate_random_regular(12, 5, 3, true).unwrap();
        let v = 0usize;
        let inc: Vec<usize> = g.incident_edges(v).iter().map(|&e| e as usize).collect();
        let a = vec![inc[0], inc[1], inc[2]];
        let closure = b_closure(&g, &a);
        for &e in &inc {
            assert!(closure.contains(&e), "edge {e} at the heavy vertex missing");
        }
    }

    #[test]
    fn closure_monotone_and_idempotent() {
        let g = generate_random_regular(16, 5, 9, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut edges: Vec<usize> = (0..g.m()).collect();
        for _ in 0..200 {
            edges.shuffle(&mut rng);
            let ka = rng.random_range(0..=g.m() / 3);
            let kb = rng.random_range(ka..=g.m() / 2);
            let a: Vec<usize> = edges[..ka].to_vec();
            let b: Vec<usize> = edges[..kb].to_vec(); // a ⊆ b
            let ca: std::collections::HashSet<usize> = b_closure(&g, &a).into_iter().collect();
            let cb: std::collections::HashSet<usize> = b_closure(&g, &b).into_iter().collect();
            assert!(ca.is_subset(&cb), "closure not monotone");
            let ca_vec: Vec<usize> = ca.iter().copied().collect();
            let caa: std::collections::HashSet<usize> =
                b_closure(&g, &ca_vec).into_iter().collect();
            assert_eq!(ca, caa, "closure not idempotent");
        }
    }

    #[test]
    fn disordered_polymers_base_cases() {
        let g = generate_random_regular(10, 3, 5, true).unwrap();
        let p = params(4.0, 0.5, 0.2);
        // all-out: n singleton polymers of weight 1
        let polys = disordered_polymers(&g, &Configuration::all_out(g.m()), &p).unwrap();
        assert_eq!(polys.len(), g.n());
        for poly in &polys {
            assert_eq!(poly.vertices.len(), 1);
            assert!(poly.edges.is_empty());
            assert_eq!(poly.log_weight, 0.0);
        }
        // one in-edge: one 2-vertex polymer, rest singletons
        let mut f = Configuration::all_out(g.m());
        f.set(0, true);
        let polys = disordered_polymers(&g, &f, &p).unwrap();
        assert_eq!(polys.len(), g.n() - 1);
        let big = polys.iter().find(|poly| poly.vertices.len() == 2).unwrap();
        let expect = -p.log_q() + p.log_w();
        assert!((big.log_weight - expect).abs() < 1e-12);
        // phase violation rejected
        assert_eq!(
            disordered_polymers(&g, &Configuration::all_in(g.m()), &p),
            Err(PolymerError::PhaseViolation("disordered"))
        );
    }

    #[test]
    fn ordered_polymers_base_cases() {
        let g = generate_random_regular(12, 5, 3, true).unwrap();
        let p = params(8.0, 2.0, 0.2);
        // all-in: Out is empty, no polymers
        let polys = ordered_polymers(&g, &Configuration::all_in(g.m()), &p).unwrap();
        assert!(polys.is_empty());
        // one out-edge on an expander: closure adds nothing, c' = 0
        let mut f = Configuration::all_in(g.m());
        f.set(0, true);
        f.set(0, false);
        let polys = ordered_polymers(&g, &f, &p).unwrap();
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].edges, vec![0]);
        assert_eq!(polys[0].unoccupied, vec![0]);
        assert_eq!(polys[0].small_components, 0);
        assert!((polys[0].log_weight - (-p.log_w())).abs() < 1e-12);
        // phase violation rejected
        assert_eq!(
            ordered_polymers(&g, &Configuration::all_out(g.m()), &p),
            Err(PolymerError::PhaseViolation("ordered"))
        );
    }

    #[test]
    fn factorization_trivial_cases() {
        let g = generate_random_regular(12, 5, 3, true).unwrap();
        let p = params(6.0, 1.5, 0.2);
        let r = check_ordered_factorization(&g, &Configuration::all_in(g.m()), &p).unwrap();
        assert!(r < 1e-12);
        let r = check_disordered_factorization(&g, &Configuration::all_out(g.m()), &p).unwrap();
        assert!(r < 1e-12);
        // one in-edge disordered: c = n - 1 on both sides analytically
        let mut f = Configuration::all_out(g.m());
        f.set(3, true);
        let r = check_disordered_factorization(&g, &f, &p).unwrap();
        assert!(r < 1e-12);
        // one out-edge ordered
        let mut f = Configuration::all_in(g.m());
        f.set(3, false);
        let r = check_ordered_factorization(&g, &f, &p).unwrap();
        assert!(r < 1e-9, "single-out residual {r}");
    }

    #[test]
    fn factorizations_on_random_phase_valid_configurations() {
        // certified expander at exact-expansion scale
        let g = generate_random_regular(16, 5, 41, true).unwrap();
        let phi_half = expansion_profile(&g, 0.5, ExpansionMode::Exact).unwrap().value;
        assert!(phi_half >= 0.1, "graph not certified: phi(1/2) = {phi_half}");
        let p = params(8.0, 2.0, 0.15);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let max_flips = (p.eta * g.m() as f64).floor() as usize;
        for _ in 0..300 {
            let k = rng.random_range(0..=max_flips);
            // ordered: flip k random edges out
            let mut f = Configuration::all_in(g.m());
            let mut edges: Vec<usize> = (0..g.m()).collect();
            edges.shuffle(&mut rng);
            for &e in edges.iter().take(k) {
                f.set(e, false);
            }
            let r = check_ordered_factorization(&g, &f, &p).unwrap();
            assert!(r < 1e-9, "ordered residual {r} at k = {k}");
            // disordered: flip k random edges in
            let mut f = Configuration::all_out(g.m());
            for &e in edges.iter().take(k) {
                f.set(e, true);
            }
            let r = check_disordered_factorization(&g, &f, &p).unwrap();
            assert!(r < 1e-9, "disordered residual {r} at k = {k}");
        }
    }

    #[test]
    fn largest_polymer_sizes() {
        let g = generate_random_regular(12, 5, 3, true).unwrap();
        let p = params(6.0, 1.5, 0.2);
        assert_eq!(
            largest_polymer_size(&g, &Configuration::all_in(g.m()), PolymerFlavor::Ordered, &p)
                .unwrap(),
            0
        );
        assert_eq!(
            largest_polymer_size(
                &g,
                &Configuration::all_out(g.m()),
                PolymerFlavor::Disordered,
                &p
            )
            .unwrap(),
            0
        );
        let mut f = Configuration::all_out(g.m());
        f.set(0, true);
        f.set(1, true);
        assert!(largest_in_component_edges(&g, &f) >= 1);
    }

    #[test]
    fn big_component_on_certified_expander() {
        // every configuration with |Out| <= eta*m keeps a giant component of
        // size >= (1 - 5*eta) * n when phi(1/2) >= 1/10
        let g = generate_random_regular(20, 5, 13, true).unwrap();
        let phi_half = expansion_profile(&g, 0.5, ExpansionMode::Exact).unwrap().value;
        let eta = 0.1f64;
        assert!(phi_half > eta, "need eta < phi(1/2), got {phi_half}");
        let delta = eta / (2.0 * phi_half);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let max_out = (eta * g.m() as f64).floor() as usize;
        for _ in 0..500 {
            let k = rng.random_range(0..=max_out);
            let mut f = Configuration::all_in(g.m());
            let mut edges: Vec<usize> = (0..g.m()).collect();
            edges.shuffle(&mut rng);
            for &e in edges.iter().take(k) {
                f.set(e, false);
            }
            let mut uf = UnionFind::new(g.n());
            for e in f.iter_in() {
                let (u, v) = g.edge(e);
                uf.union(u, v);
            }
            let mut sizes: std::collections::HashMap<usize, usize> = Default::default();
            for v in 0..g.n() {
                *sizes.entry(uf.find(v)).or_insert(0) += 1;
            }
            let giant = *sizes.values().max().unwrap();
            let bound = ((1.0 - delta) * g.n() as f64).ceil() as usize;
            assert!(giant >= bound, "giant {giant} < bound {bound} at k = {k}");
        }
    }
}
