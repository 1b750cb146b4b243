//! Brute-force exact computations on small instances: distributions,
//! partition functions, transition matrices and conditional marginals.
//!
//! Configuration enumeration order is fixed as binary counting over edge
//! indices: bit e of a configuration index is the state of edge e. Every
//! oracle output uses this order.

use crate::graph::Graph;
use crate::model::{ModelParams, PartialConfiguration, PhaseLabel};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Full-enumeration cap. Radius-2 tree balls need the Heawood graph (21
/// edges), so the cap sits at 21 rather than a rounder 20.
pub const ORACLE_MAX_EDGES: usize = 21;
/// Transition-matrix cap: 2^12 states.
pub const MATRIX_MAX_EDGES: usize = 12;
/// Potts brute force cap on q^n.
pub const POTTS_MAX_COLORINGS: f64 = 1e7;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("graph has {got} edges, oracle cap is {cap}")]
    TooManyEdges { got: usize, cap: usize },
    #[error("q^n = {0} exceeds the Potts brute-force cap")]
    TooManyColorings(f64),
    #[error("restricted support is empty")]
    EmptySupport,
    #[error("distribution dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

// ---------------------------------------------------------------------------
// Weight table: per-configuration component counts, computed once per graph

pub struct WeightTable {
    pub m: usize,
    pub n: usize,
    comp: Vec<u8>,
}

impl WeightTable {
    pub fn build(g: &Graph) -> Result<Self, OracleError> {
        let m = g.m();
        if m > ORACLE_MAX_EDGES {
            return Err(OracleError::TooManyEdges { got: m, cap: ORACLE_MAX_EDGES });
        }
        let n = g.n();
        let size = 1usize << m;
        let edges: Vec<(u32, u32)> = g.edges().map(|(u, v)| (u as u32, v as u32)).collect();
        let mut comp = vec![0u8; size];
        // parallel by index blocks; deterministic because blocks are disjoint
        let chunk = 1usize << 12;
        comp.par_chunks_mut(chunk).enumerate().for_each(|(ci, slice)| {
            let base = ci * chunk;
            let mut uf_parent = vec![0u32; n];
            for (off, cell) in slice.iter_mut().enumerate() {
                let idx = (base + off) as u64;
                for (v, p) in uf_parent.iter_mut().enumerate() {
                    *p = v as u32;
                }
                let mut components = n as u32;
                for (e, &(u, v)) in edges.iter().enumerate() {
                    if idx >> e & 1 == 1 && u != v {
                        let (mut a, mut b) = (u, v);
                        while uf_parent[a as usize] != a {
                            uf_parent[a as usize] = uf_parent[uf_parent[a as usize] as usize];
                            a = uf_parent[a as usize];
                        }
                        while uf_parent[b as usize] != b {
                            uf_parent[b as usize] = uf_parent[uf_parent[b as usize] as usize];
                            b = uf_parent[b as usize];
                        }
                        if a != b {
                            uf_parent[a.max(b) as usize] = a.min(b);
                            components -= 1;
                        }
                    }
                }
                *cell = components as u8;
            }
        });
        Ok(WeightTable { m, n, comp })
    }

    pub fn components(&self, idx: u64) -> usize {
        self.comp[idx as usize] as usize
    }
}

// ---------------------------------------------------------------------------
// Restrictions

/// Support restriction for conditional distributions: an optional phase
/// condition plus an optional clamp to a partial configuration.
#[derive(Clone, Default)]
pub struct Restriction {
    pub phase: Option<PhaseLabel>,
    pub clamp: Option<PartialConfiguration>,
}

impl Restriction {
    pub fn none() -> Self {
        Default::default()
    }

    pub fn ordered() -> Self {
        Restriction { phase: Some(PhaseLabel::Ordered), clamp: None }
    }

    pub fn disordered() -> Self {
        Restriction { phase: Some(PhaseLabel::Disordered), clamp: None }
    }

    pub fn clamp(pc: PartialConfiguration) -> Self {
        Restriction { phase: None, clamp: Some(pc) }
    }

    pub fn with_clamp(mut self, pc: PartialConfiguration) -> Self {
        self.clamp = Some(pc);
        self
    }
}

/// Compiled restriction usable in enumeration inner loops.
struct CompiledRestriction {
    want: u64,
    /// free (unclamped) edge positions
    free: Vec<u8>,
    /// in-count admissibility per possible count
    f_ok: Vec<bool>,
}

fn compile_restriction(m: usize, params: &ModelParams, r: &Restriction) -> CompiledRestriction {
    let (mut mask, mut want) = (0u64, 0u64);
    if let Some(pc) = &r.clamp {
        assert_eq!(pc.len(), m);
        for e in 0..m {
            if let Some(val) = pc.get(e) {
                mask |= 1 << e;
                if val {
                    want |= 1 << e;
                }
            }
        }
    }
    let free: Vec<u8> = (0..m as u8).filter(|&e| mask >> e & 1 == 0).collect();
    let f_ok: Vec<bool> = (0..=m)
        .map(|f| match r.phase {
            None => true,
            Some(PhaseLabel::Ordered) => params.is_ordered(f, m),
            Some(PhaseLabel::Disordered) => params.is_disordered(f, m),
            Some(PhaseLabel::Neither) => {
                !params.is_ordered(f, m) && !params.is_disordered(f, m)
            }
        })
        .collect();
    CompiledRestriction { want, free, f_ok }
}

// ---------------------------------------------------------------------------
// Oracle

/// Exact enumeration oracle for one graph: owns the component-count table and
/// answers distribution, partition-sum and marginal queries for any params.
pub struct Oracle {
    g: Graph,
    table: WeightTable,
}

/// Scaled weights w(c, f) = exp(c ln q + f ln(e^b - 1) - log_scale), finite
/// for every reachable (c, f).
pub struct ScaledWeights {
    pub log_scale: f64,
    w: Vec<f64>, // (n+1) x (m+1), row-major by c
    m: usize,
}

impl ScaledWeights {
    #[inline]
    fn get(&self, c: usize, f: usize) -> f64 {
        self.w[c * (self.m + 1) + f]
    }
}

impl Oracle {
    pub fn new(g: &Graph) -> Result<Self, OracleError> {
        let table = WeightTable::build(g)?;
        Ok(Oracle { g: g.clone(), table })
    }

    pub fn graph(&self) -> &Graph {
        &self.g
    }

    pub fn m(&self) -> usize {
        self.table.m
    }

    pub fn scaled_weights(&self, params: &ModelParams) -> ScaledWeights {
        let (n, m) = (self.table.n, self.table.m);
        let lq = params.log_q();
        let lw = params.log_w();
        let log_scale = n as f64 * lq.max(0.0) + m as f64 * lw.max(0.0);
        let mut w = vec![0.0; (n + 1) * (m + 1)];
        for c in 0..=n {
            for f in 0..=m {
                w[c * (m + 1) + f] = (c as f64 * lq + f as f64 * lw - log_scale).exp();
            }
        }
        ScaledWeights { log_scale, w, m }
    }

    /// Scaled partition sum over the restricted support. The true log-sum is
    /// ln(result) + sw.log_scale.
    pub fn scaled_sum(&self, sw: &ScaledWeights, params: &ModelParams, r: &Restriction) -> f64 {
        let cr = compile_restriction(self.table.m, params, r);
        self.scaled_sum_compiled(sw, &cr)
    }

    fn scaled_sum_compiled(&self, sw: &ScaledWeights, cr: &CompiledRestriction) -> f64 {
        let nf = cr.free.len();
        let mut idx = cr.want;
        let term = |idx: u64| -> f64 {
            let f = idx.count_ones() as usize;
            if cr.f_ok[f] {
                sw.get(self.table.components(idx), f)
            } else {
                0.0
            }
        };
        let mut acc = term(idx);
        for sub in 1u64..(1u64 << nf) {
            let bit = cr.free[sub.trailing_zeros() as usize];
            idx ^= 1 << bit;
            acc += term(idx);
        }
        acc
    }

    /// log Z over the restricted support.
    pub fn log_z(&self, params: &ModelParams, r: &Restriction) -> Result<f64, OracleError> {
        let sw = self.scaled_weights(params);
        let s = self.scaled_sum(&sw, params, r);
        if s <= 0.0 {
            return Err(OracleError::EmptySupport);
        }
        Ok(s.ln() + sw.log_scale)
    }

    /// Full probability vector over all 2^m configuration indices (zero mass
    /// outside the restriction), renormalized.
    pub fn distribution(
        &self,
        params: &ModelParams,
        r: &Restriction,
    ) -> Result<ExactDistribution, OracleError> {
        let m = self.table.m;
        let sw = self.scaled_weights(params);
        let cr = compile_restriction(m, params, r);
        let mut probs = vec![0.0; 1usize << m];
        let nf = cr.free.len();
        let mut idx = cr.want;
        let mut total = 0.0;
        let mut support = 0usize;
        {
            let mut put = |idx: u64| {
                let f = idx.count_ones() as usize;
                if cr.f_ok[f] {
                    let w = sw.get(self.table.components(idx), f);
                    probs[idx as usize] = w;
                    if w > 0.0 {
                        total += w;
                        support += 1;
                    }
                }
            };
            put(idx);
            for sub in 1u64..(1u64 << nf) {
                let bit = cr.free[sub.trailing_zeros() as usize];
                idx ^= 1 << bit;
                put(idx);
            }
        }
        if total <= 0.0 {
            return Err(OracleError::EmptySupport);
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
        Ok(ExactDistribution {
            m,
            log_z: total.ln() + sw.log_scale,
            probs,
            support_size: support,
        })
    }

    /// Exact marginal P(e -> 1) under the restriction.
    pub fn edge_marginal(
        &self,
        params: &ModelParams,
        r: &Restriction,
        e: usize,
    ) -> Result<f64, OracleError> {
        let m = self.table.m;
        let sw = self.scaled_weights(params);
        let base = r.clamp.clone().unwrap_or_else(|| PartialConfiguration::all_unrevealed(m));
        assert!(!base.is_revealed(e), "marginal of a clamped edge");
        let mut with = base.clone();
        with.reveal(e, true);
        let mut without = base;
        without.reveal(e, false);
        let s1 =
            self.scaled_sum(&sw, params, &Restriction { phase: r.phase, clamp: Some(with) });
        let s0 =
            self.scaled_sum(&sw, params, &Restriction { phase: r.phase, clamp: Some(without) });
        if s1 + s0 <= 0.0 {
            return Err(OracleError::EmptySupport);
        }
        Ok(s1 / (s1 + s0))
    }

    /// Conditional distribution over the 2^|block| joint assignments of
    /// `block` edges given the restriction; bit i of the pattern index is
    /// block[i]'s state.
    pub fn block_distribution(
        &self,
        params: &ModelParams,
        r: &Restriction,
        block: &[usize],
    ) -> Result<Vec<f64>, OracleError> {
        let m = self.table.m;
        let sw = self.scaled_weights(params);
        let base = r.clamp.clone().unwrap_or_else(|| PartialConfiguration::all_unrevealed(m));
        let mut out = vec![0.0; 1usize << block.len()];
        let mut total = 0.0;
        for (pattern, cell) in out.iter_mut().enumerate() {
            let mut pc = base.clone();
            for (i, &e) in block.iter().enumerate() {
                pc.reveal(e, pattern >> i & 1 == 1);
            }
            let s =
                self.scaled_sum(&sw, params, &Restriction { phase: r.phase, clamp: Some(pc) });
            *cell = s;
            total += s;
        }
        if total <= 0.0 {
            return Err(OracleError::EmptySupport);
        }
        for p in out.iter_mut() {
            *p /= total;
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Exact distributions

pub struct ExactDistribution {
    pub m: usize,
    pub log_z: f64,
    /// Probability per configuration index (binary counting over edges).
    pub probs: Vec<f64>,
    pub support_size: usize,
}

impl ExactDistribution {
    pub fn prob(&self, idx: u64) -> f64 {
        self.probs[idx as usize]
    }

    /// Marginal P(e -> 1).
    pub fn edge_marginal(&self, e: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(idx, _)| *idx as u64 >> e & 1 == 1)
            .map(|(_, p)| p)
            .sum()
    }

    /// Distribution of the in-edge count.
    pub fn in_count_distribution(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m + 1];
        for (idx, &p) in self.probs.iter().enumerate() {
            out[(idx as u64).count_ones() as usize] += p;
        }
        out
    }
}

/// Total-variation distance between two exact distributions on the same space.
pub fn exact_tv(d1: &ExactDistribution, d2: &ExactDistribution) -> Result<f64, OracleError> {
    if d1.m != d2.m {
        return Err(OracleError::DimensionMismatch(d1.m, d2.m));
    }
    Ok(0.5 * d1.probs.iter().zip(&d2.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// CDF sampler over an exact distribution's support.
pub struct CdfSampler {
    states: Vec<u64>,
    cum: Vec<f64>,
}

impl CdfSampler {
    pub fn new(d: &ExactDistribution) -> Self {
        let mut states = Vec::with_capacity(d.support_size);
        let mut cum = Vec::with_capacity(d.support_size);
        let mut acc = 0.0;
        for (idx, &p) in d.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                states.push(idx as u64);
                cum.push(acc);
            }
        }
        CdfSampler { states, cum }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.cum.last().copied().unwrap_or(1.0);
        let pos = self.cum.partition_point(|&c| c < u);
        self.states[pos.min(self.states.len() - 1)]
    }
}

// ---------------------------------------------------------------------------
// Transition matrix

/// Sparse row-stochastic transition matrix of the single-edge-update chain
/// over all 2^m configurations.
pub struct TransitionMatrix {
    pub m: usize,
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl TransitionMatrix {
    pub fn n_states(&self) -> usize {
        1 << self.m
    }

    /// One step of a distribution vector: mu' = mu P.
    pub fn evolve(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; mu.len()];
        for (s, row) in self.rows.iter().enumerate() {
            let ps = mu[s];
            if ps == 0.0 {
                continue;
            }
            for &(t, p) in row {
                out[t as usize] += ps * p;
            }
        }
        out
    }
}

/// Build the exact transition matrix from the chain rule, using the weight
/// table's component counts for the cut-edge predicate: an edge bridges iff
/// adding it to the rest of the configuration drops the component count.
pub fn exact_transition_matrix(
    g: &Graph,
    params: &ModelParams,
) -> Result<TransitionMatrix, OracleError> {
    let m = g.m();
    if m > MATRIX_MAX_EDGES {
        return Err(OracleError::TooManyEdges { got: m, cap: MATRIX_MAX_EDGES });
    }
    let table = WeightTable::build(g)?;
    let p = params.p();
    let p_hat = params.p_hat();
    let n_states = 1usize << m;
    let mut rows = Vec::with_capacity(n_states);
    let inv_m = 1.0 / m as f64;
    for s in 0..n_states as u64 {
        let mut row: std::collections::BTreeMap<u32, f64> = Default::default();
        for e in 0..m {
            let bit = 1u64 << e;
            let without = s & !bit;
            let with = s | bit;
            let (u, v) = g.edge(e);
            let cut =
                u != v && table.components(without) - table.components(with) == 1;
            let prob_in = if cut { p_hat } else { p };
            *row.entry(with as u32).or_insert(0.0) += inv_m * prob_in;
            *row.entry(without as u32).or_insert(0.0) += inv_m * (1.0 - prob_in);
        }
        rows.push(row.into_iter().collect());
    }
    Ok(TransitionMatrix { m, rows })
}

// ---------------------------------------------------------------------------
// Potts brute force and deletion-contraction

/// Exact log of the Potts partition function sum_sigma e^{beta * mono(sigma)}
/// for integer q, by enumerating all q^n colorings.
pub fn potts_partition_bruteforce(g: &Graph, q: u32, beta: f64) -> Result<f64, OracleError> {
    let n = g.n();
    let colorings = (q as f64).powi(n as i32);
    if colorings > POTTS_MAX_COLORINGS {
        return Err(OracleError::TooManyColorings(colorings));
    }
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let mut coloring = vec![0u32; n];
    let mut total = 0.0f64;
    // scale by e^{-beta*m} to keep terms bounded, restore at the end
    let scale = beta * edges.len() as f64;
    loop {
        let mono = edges.iter().filter(|&&(u, v)| coloring[u] == coloring[v]).count();
        total += (beta * mono as f64 - scale).exp();
        let mut i = 0;
        loop {
            if i == n {
                return Ok(total.ln() + scale);
            }
            coloring[i] += 1;
            if coloring[i] < q {
                break;
            }
            coloring[i] = 0;
            i += 1;
        }
    }
}

/// Exact log Z by deletion-contraction: Z(G) = Z(G - e) + (e^beta - 1) Z(G/e),
/// with self-loops contributing a factor e^beta each and the empty graph
/// contributing q^{#vertices}.
pub fn z_deletion_contraction(g: &Graph, params: &ModelParams) -> Result<f64, OracleError> {
    if g.m() > 14 {
        return Err(OracleError::TooManyEdges { got: g.m(), cap: 14 });
    }
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let w = params.beta.exp_m1();
    let z = dc_recurse(&edges, g.n(), params.q, w, params.beta.exp());
    Ok(z.ln())
}

fn dc_recurse(edges: &[(usize, usize)], n: usize, q: f64, w: f64, e_beta: f64) -> f64 {
    match edges.iter().position(|&(u, v)| u != v) {
        None => {
            // only self-loops remain: each contributes 1 + w = e^beta
            q.powi(n as i32) * e_beta.powi(edges.len() as i32)
        }
        Some(i) => {
            let (u, v) = edges[i];
            let mut deleted: Vec<(usize, usize)> = edges.to_vec();
            deleted.remove(i);
            let z_del = dc_recurse(&deleted, n, q, w, e_beta);
            // contract: merge `gone` into `keep`, move vertex n-1 into the
            // hole so labels stay 0..n-2
            let keep = u.min(v);
            let gone = u.max(v);
            let contracted: Vec<(usize, usize)> = deleted
                .iter()
                .map(|&(a, b)| {
                    let fix = |x: usize| -> usize {
                        let x = if x == gone { keep } else { x };
                        if gone != n - 1 && x == n - 1 {
                            gone
                        } else {
                            x
                        }
                    };
                    (fix(a), fix(b))
                })
                .collect();
            let z_con = dc_recurse(&contracted, n - 1, q, w, e_beta);
            z_del + w * z_con
        }
    }
}

// ---------------------------------------------------------------------------
// Phase statistics

#[derive(Debug, Clone)]
pub struct PhaseStatistics {
    pub mass_ordered: f64,
    pub mass_disordered: f64,
    pub mass_neither: f64,
    pub tv_to_ordered: f64,
    pub tv_to_disordered: f64,
    /// pi^dis(|In| >= zeta m)
    pub dis_tail: f64,
    /// pi^ord(|In| <= (1 - zeta) m)
    pub ord_tail: f64,
}

pub fn phase_statistics(g: &Graph, params: &ModelParams) -> Result<PhaseStatistics, OracleError> {
    let oracle = Oracle::new(g)?;
    let m = g.m();
    let pi = oracle.distribution(params, &Restriction::none())?;
    let mut mass_ordered = 0.0;
    let mut mass_disordered = 0.0;
    for (idx, &p) in pi.probs.iter().enumerate() {
        let f = (idx as u64).count_ones() as usize;
        if params.is_ordered(f, m) {
            mass_ordered += p;
        } else if params.is_disordered(f, m) {
            mass_disordered += p;
        }
    }
    let mass_neither = (1.0 - mass_ordered - mass_disordered).max(0.0);
    let ord = oracle.distribution(params, &Restriction::ordered())?;
    let dis = oracle.distribution(params, &Restriction::disordered())?;
    let tv_to_ordered = exact_tv(&pi, &ord)?;
    let tv_to_disordered = exact_tv(&pi, &dis)?;
    let mut dis_tail = 0.0;
    let mut ord_tail = 0.0;
    for idx in 0..pi.probs.len() {
        let f = (idx as u64).count_ones() as usize;
        if dis.probs[idx] > 0.0 && f as f64 >= params.zeta * m as f64 {
            dis_tail += dis.probs[idx];
        }
        if ord.probs[idx] > 0.0 && f as f64 <= (1.0 - params.zeta) * m as f64 {
            ord_tail += ord.probs[idx];
        }
    }
    Ok(PhaseStatistics {
        mass_ordered,
        mass_disordered,
        mass_neither,
        tv_to_ordered,
        tv_to_disordered,
        dis_tail,
        ord_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_expm1, Configuration};

    fn params(q: f64, beta: f64) -> ModelParams {
        ModelParams::with_margins(q, beta, 3, 0.01, 0.005).unwrap()
    }

    #[test]
    fn single_edge_distribution() {
        let g = Graph::single_edge();
        let o = Oracle::new(&g).unwrap();
        let p = params(3.0, 0.9);
        let d = o.distribution(&p, &Restriction::none()).unwrap();
        // weights [q^2, q(e^b - 1)], normalized
        let w0 = p.q * p.q;
        let w1 = p.q * p.beta.exp_m1();
        assert!((d.prob(0) - w0 / (w0 + w1)).abs() < 1e-12);
        assert!((d.prob(1) - w1 / (w0 + w1)).abs() < 1e-12);
        assert!((d.edge_marginal(0) - p.p_hat()).abs() < 1e-12);
    }

    #[test]
    fn q_one_is_product_bernoulli() {
        let g = Graph::cycle(4);
        let p = params(1.0, 0.8);
        let o = Oracle::new(&g).unwrap();
        let d = o.distribution(&p, &Restriction::none()).unwrap();
        let pr = p.p();
        for idx in 0..(1u64 << 4) {
            let k = idx.count_ones() as i32;
            let expect = pr.powi(k) * (1.0 - pr).powi(4 - k);
            assert!((d.prob(idx) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let g = Graph::complete(4);
        let o = Oracle::new(&g).unwrap();
        for (q, b) in [(1.5, 0.3), (4.0, 2.0), (16.0, 5.0)] {
            let d = o.distribution(&params(q, b), &Restriction::none()).unwrap();
            let total: f64 = d.probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fk_potts_identity_on_triangle() {
        let g = Graph::cycle(3);
        for q in [2u32, 3] {
            for beta in [0.3, 1.0, 3.0] {
                let p = params(q as f64, beta);
                let o = Oracle::new(&g).unwrap();
                let z_rc = o.log_z(&p, &Restriction::none()).unwrap();
                let z_potts = potts_partition_bruteforce(&g, q, beta).unwrap();
                assert!(
                    (z_rc - z_potts).abs() < 1e-9,
                    "q={q} beta={beta}: {z_rc} vs {z_potts}"
                );
            }
        }
    }

    #[test]
    fn potts_single_edge_closed_form() {
        // q = 2 on one edge: Z = 2 e^beta + 2
        let g = Graph::single_edge();
        let beta = 1.3f64;
        let z = potts_partition_bruteforce(&g, 2, beta).unwrap();
        assert!((z - (2.0 * beta.exp() + 2.0).ln()).abs() < 1e-12);
        // beta -> 0 gives q^n
        let z0 = potts_partition_bruteforce(&g, 3, 1e-12).unwrap();
        assert!((z0 - 9.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn deletion_contraction_matches_enumeration() {
        let graphs = vec![
            Graph::single_edge(),
            Graph::cycle(3),
            Graph::cycle(5),
            Graph::path(5),
            Graph::complete(4),
            Graph::star(4),
            crate::graph::generate_random_regular(8, 3, 4, true).unwrap(),
            // multigraph with a parallel pair and a loop
            Graph::from_edges(3, &[(0, 1), (0, 1), (1, 2), (2, 2)]).unwrap(),
        ];
        for g in &graphs {
            for (q, b) in [(2.0, 0.7), (3.5, 1.4)] {
                let p = params(q, b);
                let o = Oracle::new(g).unwrap();
                let z_enum = o.log_z(&p, &Restriction::none()).unwrap();
                let z_dc = z_deletion_contraction(g, &p).unwrap();
                assert!(
                    (z_enum - z_dc).abs() / z_enum.abs() < 1e-9,
                    "mismatch on n={} m={}: {z_enum} vs {z_dc}",
                    g.n(),
                    g.m()
                );
            }
        }
    }

    #[test]
    fn transition_matrix_rows_sum_to_one_and_fix_pi() {
        let g = Graph::cycle(3);
        let p = params(2.0, 1.0);
        let tm = exact_transition_matrix(&g, &p).unwrap();
        for row in &tm.rows {
            let s: f64 = row.iter().map(|&(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let o = Oracle::new(&g).unwrap();
        let pi = o.distribution(&p, &Restriction::none()).unwrap();
        let evolved = tm.evolve(&pi.probs);
        let residual: f64 = evolved
            .iter()
            .zip(&pi.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(residual < 1e-10, "piP != pi, residual {residual}");
    }

    #[test]
    fn single_edge_matrix_is_two_state_kernel() {
        let g = Graph::single_edge();
        let p = params(3.0, 1.1);
        let tm = exact_transition_matrix(&g, &p).unwrap();
        let ph = p.p_hat();
        for s in 0..2usize {
            for &(t, v) in &tm.rows[s] {
                let expect = if t == 1 { ph } else { 1.0 - ph };
                assert!((v - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn detailed_balance_small_graphs() {
        for g in [Graph::cycle(3), crate::graph::generate_random_regular(8, 3, 2, true).unwrap()]
        {
            let p = params(2.0, 1.0);
            let tm = exact_transition_matrix(&g, &p).unwrap();
            let o = Oracle::new(&g).unwrap();
            let pi = o.distribution(&p, &Restriction::none()).unwrap();
            let mut worst = 0.0f64;
            for (s, row) in tm.rows.iter().enumerate() {
                for &(t, v) in row {
                    if s == t as usize {
                        continue;
                    }
                    let rev = tm.rows[t as usize]
                        .iter()
                        .find(|&&(u, _)| u as usize == s)
                        .map(|&(_, v)| v)
                        .unwrap_or(0.0);
                    worst = worst.max((pi.prob(s as u64) * v - pi.prob(t as u64) * rev).abs());
                }
            }
            assert!(worst < 1e-10, "detailed balance residual {worst}");
        }
    }

    #[test]
    fn exact_tv_basics() {
        let g = Graph::single_edge();
        let o = Oracle::new(&g).unwrap();
        let p = params(2.0, 1.0);
        let d = o.distribution(&p, &Restriction::none()).unwrap();
        assert_eq!(exact_tv(&d, &d).unwrap(), 0.0);
        // disjoint supports -> 1
        let mut pin = PartialConfiguration::all_unrevealed(1);
        pin.reveal(0, true);
        let mut pout = PartialConfiguration::all_unrevealed(1);
        pout.reveal(0, false);
        let din = o.distribution(&p, &Restriction::clamp(pin)).unwrap();
        let dout = o.distribution(&p, &Restriction::clamp(pout)).unwrap();
        assert!((exact_tv(&din, &dout).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tv_triangle_inequality_spot_checks() {
        let g = Graph::cycle(4);
        let o = Oracle::new(&g).unwrap();
        let d1 = o.distribution(&params(2.0, 0.5), &Restriction::none()).unwrap();
        let d2 = o.distribution(&params(3.0, 1.5), &Restriction::none()).unwrap();
        let d3 = o.distribution(&params(8.0, 2.5), &Restriction::none()).unwrap();
        let ab = exact_tv(&d1, &d2).unwrap();
        let bc = exact_tv(&d2, &d3).unwrap();
        let ac = exact_tv(&d1, &d3).unwrap();
        assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn ordered_restriction_support_and_marginal() {
        let g = Graph::cycle(3);
        // eta small: ordered support on the triangle is only all-in
        let p = ModelParams::with_margins(4.0, 2.0, 3, 0.01, 0.005).unwrap();
        let o = Oracle::new(&g).unwrap();
        let d = o.distribution(&p, &Restriction::ordered()).unwrap();
        assert_eq!(d.support_size, 1);
        assert!((d.prob(0b111) - 1.0).abs() < 1e-12);
        assert!((o.edge_marginal(&p, &Restriction::ordered(), 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_phase_marginal_edge_orbit_symmetry() {
        let g = Graph::cycle(3);
        let p = ModelParams::with_margins(2.0, 2.0, 3, 0.4, 0.2).unwrap();
        let o = Oracle::new(&g).unwrap();
        let m0 = o.edge_marginal(&p, &Restriction::ordered(), 0).unwrap();
        let m1 = o.edge_marginal(&p, &Restriction::ordered(), 1).unwrap();
        let m2 = o.edge_marginal(&p, &Restriction::ordered(), 2).unwrap();
        assert!((m0 - m1).abs() < 1e-12 && (m1 - m2).abs() < 1e-12);
        // cross-check against a direct enumeration of the restricted measure
        let d = o.distribution(&p, &Restriction::ordered()).unwrap();
        assert!((d.edge_marginal(0) - m0).abs() < 1e-12);
    }

    #[test]
    fn clamped_conditional_matches_bayes() {
        let g = Graph::complete(4);
        let p = params(2.5, 1.0);
        let o = Oracle::new(&g).unwrap();
        let mut clamp = PartialConfiguration::all_unrevealed(g.m());
        clamp.reveal(0, true);
        clamp.reveal(3, false);
        let d = o.distribution(&p, &Restriction::clamp(clamp.clone())).unwrap();
        let full = o.distribution(&p, &Restriction::none()).unwrap();
        let mut mass = 0.0;
        for idx in 0..full.probs.len() as u64 {
            if clamp.is_refined_by_full(&Configuration::from_index(idx, g.m())) {
                mass += full.prob(idx);
            }
        }
        for idx in 0..full.probs.len() as u64 {
            let expect = if clamp.is_refined_by_full(&Configuration::from_index(idx, g.m())) {
                full.prob(idx) / mass
            } else {
                0.0
            };
            assert!((d.prob(idx) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_restricted_support_is_an_error() {
        let g = Graph::single_edge();
        let p = ModelParams::with_margins(2.0, 1.0, 3, 0.3, 0.1).unwrap();
        let mut pc = PartialConfiguration::all_unrevealed(1);
        pc.reveal(0, true);
        let o = Oracle::new(&g).unwrap();
        let r = Restriction { phase: Some(PhaseLabel::Disordered), clamp: Some(pc) };
        assert!(matches!(o.distribution(&p, &r), Err(OracleError::EmptySupport)));
    }

    #[test]
    fn phase_statistics_limits() {
        let g = crate::graph::generate_random_regular(6, 3, 1, true).unwrap();
        // beta tiny: disordered mass dominates
        let p_lo = ModelParams::with_margins(8.0, 0.05, 3, 0.2, 0.1).unwrap();
        let st = phase_statistics(&g, &p_lo).unwrap();
        assert!(st.mass_disordered > 0.9, "dis mass {}", st.mass_disordered);
        // beta huge: ordered mass dominates
        let p_hi = ModelParams::with_margins(8.0, 6.0, 3, 0.2, 0.1).unwrap();
        let st = phase_statistics(&g, &p_hi).unwrap();
        assert!(st.mass_ordered > 0.9, "ord mass {}", st.mass_ordered);
    }

    #[test]
    fn block_distribution_is_projection() {
        let g = Graph::cycle(4);
        let p = params(2.0, 1.2);
        let o = Oracle::new(&g).unwrap();
        let block = [1usize, 3];
        let bd = o.block_distribution(&p, &Restriction::none(), &block).unwrap();
        let full = o.distribution(&p, &Restriction::none()).unwrap();
        for pat in 0..4usize {
            let mut expect = 0.0;
            for idx in 0..full.probs.len() as u64 {
                let b0 = idx >> 1 & 1;
                let b1 = idx >> 3 & 1;
                if (pat as u64 & 1) == b0 && ((pat as u64) >> 1 & 1) == b1 {
                    expect += full.prob(idx);
                }
            }
            assert!((bd[pat] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_reproduces_distribution() {
        use rand::SeedableRng;
        let g = Graph::cycle(3);
        let p = params(2.0, 1.0);
        let o = Oracle::new(&g).unwrap();
        let d = o.distribution(&p, &Restriction::none()).unwrap();
        let sampler = CdfSampler::new(&d);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut counts = vec![0usize; 8];
        for _ in 0..n {
            counts[sampler.sample(&mut rng) as usize] += 1;
        }
        let tv: f64 = 0.5
            * counts
                .iter()
                .enumerate()
                .map(|(idx, &c)| (c as f64 / n as f64 - d.prob(idx as u64)).abs())
                .sum::<f64>();
        assert!(tv < 0.01, "sampler tv {tv}");
    }

    #[test]
    fn scaled_weights_survive_extreme_beta() {
        let g = Graph::cycle(6);
        let o = Oracle::new(&g).unwrap();
        let p = params(4.0, 60.0); // (e^60)^6 would overflow unscaled
        let d = o.distribution(&p, &Restriction::none()).unwrap();
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.prob((1 << 6) - 1) > 0.999); // all-in dominates
        let lw = log_expm1(60.0);
        assert!(lw.is_finite());
    }
}
