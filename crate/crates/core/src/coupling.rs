//! Weak-spatial-mixing checks and the revealing-coupling processes, run as
//! instrumented executable procedures with their invariants asserted at every
//! iteration.

use crate::dynamics::{ChainState, RngStream};
use crate::graph::{ball, bfs_decomposition, choose_cut_radii, BfsDecomposition, Graph};
use crate::model::{
    boundary_component_set, Configuration, ModelParams, PartialConfiguration, PhaseLabel,
    UnionFind,
};
use crate::oracle::{CdfSampler, Oracle, OracleError, Restriction, ORACLE_MAX_EDGES};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("need radius r > K + 1 (r = {r}, K = {k})")]
    RadiusPrecondition { r: f64, k: usize },
    #[error("oracle method requires at most {cap} ball edges, got {got}")]
    BallSizeCap { got: usize, cap: usize },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

pub const MARGINAL_BALL_EDGE_CAP: usize = ORACLE_MAX_EDGES;

// ---------------------------------------------------------------------------
// Conditional and phase marginals, WSM checks

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Everything outside the ball clamped in.
    Plus,
    /// Everything outside the ball clamped out.
    Minus,
}

/// Clamp all edges outside the ball to the boundary condition.
pub fn boundary_clamp(
    g: &Graph,
    ball: &crate::graph::BallView,
    boundary: BoundaryCondition,
) -> PartialConfiguration {
    let mut pc = PartialConfiguration::all_unrevealed(g.m());
    let inside: std::collections::HashSet<usize> = ball.edges.iter().copied().collect();
    let val = boundary == BoundaryCondition::Plus;
    for e in 0..g.m() {
        if !inside.contains(&e) {
            pc.reveal(e, val);
        }
    }
    pc
}

/// Exact pi_{B_r^+/-(v)}(e -> 1): enumerate ball-interior assignments with the
/// exterior clamped, counting components on the whole graph.
pub fn conditional_edge_marginal_oracle(
    oracle: &Oracle,
    params: &ModelParams,
    ball: &crate::graph::BallView,
    boundary: BoundaryCondition,
    e: usize,
) -> Result<f64, CouplingError> {
    if ball.edges.len() > MARGINAL_BALL_EDGE_CAP {
        return Err(CouplingError::BallSizeCap {
            got: ball.edges.len(),
            cap: MARGINAL_BALL_EDGE_CAP,
        });
    }
    let clamp = boundary_clamp(oracle.graph(), ball, boundary);
    Ok(oracle.edge_marginal(params, &Restriction::clamp(clamp), e)?)
}

/// Chain-estimated conditional marginal with a batch-means standard error.
#[derive(Debug, Clone, Copy)]
pub struct EstimatedMarginal {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

pub fn conditional_edge_marginal_chain(
    g: &Graph,
    params: &ModelParams,
    ball: &crate::graph::BallView,
    boundary: BoundaryCondition,
    e: usize,
    seed: u64,
    sweeps: usize,
) -> EstimatedMarginal {
    let x0 = match boundary {
        BoundaryCondition::Plus => Configuration::all_in(g.m()),
        BoundaryCondition::Minus => Configuration::all_out(g.m()),
    };
    let mut chain = match boundary {
        BoundaryCondition::Plus => ChainState::new_wired_local(g, ball, &x0),
        BoundaryCondition::Minus => ChainState::new_free_local(g, ball, &x0),
    };
    let mut rng = RngStream::new(seed);
    let m = g.m();
    let sweep_len = (ball.edges.len().max(1) * 4) as u64;
    let burn = 10 * sweep_len;
    for _ in 0..burn {
        let (edge, u) = rng.next(m);
        chain.apply_step(g, params, edge, u);
    }
    let n_batches = 16usize;
    let per_batch = sweeps.max(n_batches) / n_batches;
    let mut batch_means = Vec::with_capacity(n_batches);
    let mut total = 0usize;
    for _ in 0..n_batches {
        let mut acc = 0.0;
        for _ in 0..per_batch {
            for _ in 0..sweep_len {
                let (edge, u) = rng.next(m);
                chain.apply_step(g, params, edge, u);
            }
            acc += chain.config().get(e) as u8 as f64;
            total += 1;
        }
        batch_means.push(acc / per_batch as f64);
    }
    let mean = batch_means.iter().sum::<f64>() / n_batches as f64;
    let var = batch_means.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>()
        / (n_batches as f64 - 1.0);
    EstimatedMarginal { mean, std_err: (var / n_batches as f64).sqrt(), samples: total }
}

/// Exact phase-conditional marginal pi^{ord/dis}(e -> 1).
pub fn phase_edge_marginal(
    oracle: &Oracle,
    params: &ModelParams,
    phase: PhaseLabel,
    e: usize,
) -> Result<f64, CouplingError> {
    let r = Restriction { phase: Some(phase), clamp: None };
    Ok(oracle.edge_marginal(params, &r, e)?)
}

#[derive(Debug, Clone, Copy)]
pub struct WsmCheck {
    pub ball_marginal: f64,
    pub phase_marginal: f64,
    pub gap: f64,
    pub pass: bool,
}

/// WSM-within-phase gap |pi_{B_r^+/-}(e -> 1) - pi^{phase}(e -> 1)| with the
/// pass threshold 1/(100 m).
pub fn wsm_check(
    oracle: &Oracle,
    params: &ModelParams,
    v: usize,
    e: usize,
    r: usize,
    phase: PhaseLabel,
) -> Result<WsmCheck, CouplingError> {
    let g = oracle.graph();
    let b = ball(g, v, r);
    let boundary = match phase {
        PhaseLabel::Ordered => BoundaryCondition::Plus,
        _ => BoundaryCondition::Minus,
    };
    let ball_marginal = conditional_edge_marginal_oracle(oracle, params, &b, boundary, e)?;
    let phase_marginal = phase_edge_marginal(oracle, params, phase, e)?;
    let gap = (ball_marginal - phase_marginal).abs();
    Ok(WsmCheck { ball_marginal, phase_marginal, gap, pass: gap <= 1.0 / (100.0 * g.m() as f64) })
}

// ---------------------------------------------------------------------------
// Maximal couplings

/// Draw from the maximal coupling of two finite distributions using one
/// uniform: with probability sum(min) the draws agree (sampled from the
/// overlap); otherwise the residuals are quantile-coupled, which preserves
/// stochastic order. Returns (x, y) indices.
pub fn maximal_coupling_draw(p: &[f64], q: &[f64], u: f64) -> (usize, usize) {
    assert_eq!(p.len(), q.len());
    let overlap: f64 = p.iter().zip(q).map(|(a, b)| a.min(*b)).sum();
    if u < overlap {
        // quantile of the overlap distribution at u
        let mut acc = 0.0;
        for (i, (a, b)) in p.iter().zip(q).enumerate() {
            acc += a.min(*b);
            if u < acc {
                return (i, i);
            }
        }
        let last = p.len() - 1;
        return (last, last);
    }
    let v = (u - overlap) / (1.0 - overlap).max(f64::MIN_POSITIVE);
    let quantile = |residual: &dyn Fn(usize) -> f64| -> usize {
        let total: f64 = (0..p.len()).map(residual).sum();
        let target = v * total;
        let mut acc = 0.0;
        for i in 0..p.len() {
            acc += residual(i);
            if target < acc {
                return i;
            }
        }
        p.len() - 1
    };
    let x = quantile(&|i| (p[i] - q[i]).max(0.0));
    let y = quantile(&|i| (q[i] - p[i]).max(0.0));
    (x, y)
}

/// Exact maximal coupling of the conditional reveal distributions
/// pi_{a1, F_next} and pi_{a2, F_next}: both marginals exact, disagreement
/// probability equal to their total-variation distance.
pub fn optimally_coupled_conditional_pair<R: Rng>(
    oracle: &Oracle,
    params: &ModelParams,
    a1: &PartialConfiguration,
    a2: &PartialConfiguration,
    f_next: &[usize],
    rng: &mut R,
) -> Result<(PartialConfiguration, PartialConfiguration), CouplingError> {
    let block: Vec<usize> = f_next
        .iter()
        .copied()
        .filter(|&e| !a1.is_revealed(e))
        .collect();
    for e in &block {
        assert!(!a2.is_revealed(*e), "revealed sets of a1 and a2 must agree");
    }
    if block.len() > MARGINAL_BALL_EDGE_CAP {
        return Err(CouplingError::BallSizeCap { got: block.len(), cap: MARGINAL_BALL_EDGE_CAP });
    }
    let p = oracle.block_distribution(params, &Restriction::clamp(a1.clone()), &block)?;
    let q = oracle.block_distribution(params, &Restriction::clamp(a2.clone()), &block)?;
    let (x, y) = maximal_coupling_draw(&p, &q, rng.random::<f64>());
    let mut out1 = a1.clone();
    let mut out2 = a2.clone();
    for (i, &e) in block.iter().enumerate() {
        out1.reveal(e, x >> i & 1 == 1);
        out2.reveal(e, y >> i & 1 == 1);
    }
    Ok((out1, out2))
}

// ---------------------------------------------------------------------------
// Revealing couplings

/// How the process draws from conditional distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    /// Exact conditionals by enumeration; per-edge couplings are maximal.
    Oracle,
    /// Clamped Glauber chains under a shared stream; marginals approximate
    /// and the coupling degrades to the shared-uniform monotone coupling.
    Chain { sweeps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingOutcome {
    /// The coupled configurations agree on every edge incident to v.
    AgreeAtV,
    /// The occupancy gate failed at the initial reveal.
    UnsuccessfulOccupancy,
    /// The radius guard fired before any reveal iteration ran.
    UnsuccessfulRadius,
    /// The radius guard fired after revealing; the argument of the tag is the
    /// extracted witness size (largest polymer / in-component edge count).
    LargePolymerWitness(usize),
}

impl CouplingOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            CouplingOutcome::AgreeAtV => "agree_at_v",
            CouplingOutcome::UnsuccessfulOccupancy => "unsuccessful_occupancy",
            CouplingOutcome::UnsuccessfulRadius => "unsuccessful_radius",
            CouplingOutcome::LargePolymerWitness(_) => "large_polymer_witness",
        }
    }
}

/// Snapshot of one reveal iteration.
#[derive(Debug, Clone)]
pub struct RevealState {
    pub iteration: usize,
    pub frontier: Vec<usize>,
    pub revealed_count: usize,
    pub f_phase: PartialConfiguration,
    pub f_boundary: PartialConfiguration,
}

#[derive(Debug, Clone)]
pub struct CouplingRun {
    pub outcome: CouplingOutcome,
    /// Final phase-measure configuration (pi^ord or pi^dis).
    pub f_phase: Configuration,
    /// Final boundary-measure configuration (pi_{B_{r1}^+} or pi_{B_{r1}^-}).
    pub f_boundary: Configuration,
    pub iterations: usize,
    pub occupancy_at_gate: usize,
    pub radius: f64,
    pub r1: usize,
    pub r2: usize,
    pub polymer_witness_size: Option<usize>,
    pub trace: Vec<RevealState>,
    /// True when the chain sampler was used (approximate conditionals).
    pub degraded_sampler: bool,
}

/// Driver for the revealing couplings on one (graph, params) pair; caches the
/// full-measure samplers it needs across seeds.
pub struct RevealingCoupler<'o> {
    oracle: &'o Oracle,
    params: ModelParams,
    mode: SamplerMode,
    ord_sampler: Option<CdfSampler>,
    dis_sampler: Option<CdfSampler>,
    boundary_sampler: Option<(usize, usize, BoundaryCondition, CdfSampler)>,
}

impl<'o> RevealingCoupler<'o> {
    pub fn new(oracle: &'o Oracle, params: &ModelParams, mode: SamplerMode) -> Self {
        RevealingCoupler {
            oracle,
            params: *params,
            mode,
            ord_sampler: None,
            dis_sampler: None,
            boundary_sampler: None,
        }
    }

    fn phase_sampler(&mut self, phase: PhaseLabel) -> Result<&CdfSampler, CouplingError> {
        let slot = match phase {
            PhaseLabel::Ordered => &mut self.ord_sampler,
            _ => &mut self.dis_sampler,
        };
        if slot.is_none() {
            let r = Restriction { phase: Some(phase), clamp: None };
            let d = self.oracle.distribution(&self.params, &r)?;
            *slot = Some(CdfSampler::new(&d));
        }
        Ok(slot.as_ref().unwrap())
    }

    fn boundary_sampler(
        &mut self,
        v: usize,
        r1: usize,
        boundary: BoundaryCondition,
    ) -> Result<&CdfSampler, CouplingError> {
        let stale = match &self.boundary_sampler {
            Some((cv, cr, cb, _)) => !(*cv == v && *cr == r1 && *cb == boundary),
            None => true,
        };
        if stale {
            let g = self.oracle.graph();
            let b = ball(g, v, r1);
            let clamp = boundary_clamp(g, &b, boundary);
            let d = self.oracle.distribution(&self.params, &Restriction::clamp(clamp))?;
            self.boundary_sampler = Some((v, r1, boundary, CdfSampler::new(&d)));
        }
        Ok(&self.boundary_sampler.as_ref().unwrap().3)
    }

    /// Draw a full configuration from the phase measure.
    fn draw_phase_full(
        &mut self,
        phase: PhaseLabel,
        rng: &mut ChaCha8Rng,
    ) -> Result<Configuration, CouplingError> {
        let m = self.oracle.m();
        match self.mode {
            SamplerMode::Oracle => {
                let idx = self.phase_sampler(phase)?.sample(rng);
                Ok(Configuration::from_index(idx, m))
            }
            SamplerMode::Chain { sweeps } => {
                let g = self.oracle.graph();
                let (x0, policy) = match phase {
                    PhaseLabel::Ordered => (
                        Configuration::all_in(m),
                        crate::dynamics::RejectionPolicy::KeepOrdered,
                    ),
                    _ => (
                        Configuration::all_out(m),
                        crate::dynamics::RejectionPolicy::KeepDisordered,
                    ),
                };
                let mut chain = ChainState::new(g, &x0, crate::connectivity::EngineKind::Auto);
                let mut stream = RngStream::new(rng.random::<u64>());
                let params = self.params;
                for _ in 0..(sweeps * m) as u64 {
                    let (e, u) = stream.next(m);
                    let old = chain.config().get(e);
                    chain.apply_step(g, &params, e, u);
                    let inc = chain.in_count();
                    let bad = match policy {
                        crate::dynamics::RejectionPolicy::KeepOrdered => {
                            !params.is_ordered(inc, m)
                        }
                        crate::dynamics::RejectionPolicy::KeepDisordered => {
                            !params.is_disordered(inc, m)
                        }
                        crate::dynamics::RejectionPolicy::None => false,
                    };
                    if bad {
                        chain.force_set(g, e, old);
                    }
                }
                Ok(chain.config().clone())
            }
        }
    }

    /// Reveal `block` edges (ascending) in both partial configurations with
    /// per-edge optimally coupled conditionals under one shared uniform each.
    fn reveal_block_coupled(
        &mut self,
        f_a: &mut PartialConfiguration,
        f_b: &mut PartialConfiguration,
        block: &[usize],
        phase_a: Option<PhaseLabel>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), CouplingError> {
        let mut edges: Vec<usize> = block.to_vec();
        edges.sort_unstable();
        edges.dedup();
        match self.mode {
            SamplerMode::Oracle => {
                for &e in &edges {
                    if f_a.is_revealed(e) {
                        continue;
                    }
                    let ra = Restriction { phase: phase_a, clamp: Some(f_a.clone()) };
                    let pa = self.oracle.edge_marginal(&self.params, &ra, e)?;
                    let rb = Restriction { phase: None, clamp: Some(f_b.clone()) };
                    let pb = self.oracle.edge_marginal(&self.params, &rb, e)?;
                    let u: f64 = rng.random();
                    f_a.reveal(e, u < pa);
                    f_b.reveal(e, u < pb);
                }
                Ok(())
            }
            SamplerMode::Chain { sweeps } => {
                self.reveal_block_chain(f_a, f_b, &edges, rng, sweeps)
            }
        }
    }

    /// Degraded reveal: clamped Glauber chains under one shared stream.
    fn reveal_block_chain(
        &mut self,
        f_a: &mut PartialConfiguration,
        f_b: &mut PartialConfiguration,
        edges: &[usize],
        rng: &mut ChaCha8Rng,
        sweeps: usize,
    ) -> Result<(), CouplingError> {
        let g = self.oracle.graph();
        let m = g.m();
        let params = self.params;
        let build = |pc: &PartialConfiguration| -> (Configuration, Vec<bool>) {
            let mut x = Configuration::all_out(m);
            let mut active = vec![false; m];
            for e in 0..m {
                match pc.get(e) {
                    Some(v) => x.set(e, v),
                    None => {
                        active[e] = true;
                        x.set(e, true); // warm start unrevealed edges in
                    }
                }
            }
            (x, active)
        };
        let (xa, active) = build(f_a);
        let (xb, _) = build(f_b);
        let mut ca = ChainState::new(g, &xa, crate::connectivity::EngineKind::Auto);
        let mut cb = ChainState::new(g, &xb, crate::connectivity::EngineKind::Auto);
        let unrevealed: Vec<usize> = (0..m).filter(|&e| active[e]).collect();
        if unrevealed.is_empty() {
            return Ok(());
        }
        let mut stream = RngStream::new(rng.random::<u64>());
        for _ in 0..(sweeps * unrevealed.len()).max(1) {
            let (j, u) = stream.next(unrevealed.len());
            let e = unrevealed[j];
            ca.apply_step(g, &params, e, u);
            cb.apply_step(g, &params, e, u);
        }
        for &e in edges {
            if !f_a.is_revealed(e) {
                f_a.reveal(e, ca.config().get(e));
                f_b.reveal(e, cb.config().get(e));
            }
        }
        Ok(())
    }

    /// The ordered revealing coupling at radius r around v.
    pub fn run_ordered(
        &mut self,
        v: usize,
        r: usize,
        seed: u64,
    ) -> Result<CouplingRun, CouplingError> {
        self.run_ordered_with_radii(v, r, None, seed)
    }

    /// Variant with a forced (r1, r2) pair; used to exercise the degenerate
    /// radius-guard termination.
    pub fn run_ordered_with_radii(
        &mut self,
        v: usize,
        r: usize,
        radii_override: Option<(usize, usize)>,
        seed: u64,
    ) -> Result<CouplingRun, CouplingError> {
        let g = self.oracle.graph().clone();
        let params = self.params;
        let m = g.m();
        let n = g.n();
        let decomp = bfs_decomposition(&g, v, r);
        let k = decomp.excess_edges.len();
        let (r1, r2) = match radii_override {
            Some(pair) => pair,
            None => {
                if (r as f64) <= (k + 1) as f64 {
                    return Err(CouplingError::RadiusPrecondition { r: r as f64, k });
                }
                choose_cut_radii(&decomp, r as f64, k)
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = g.bfs_distances(v);
        let b1 = ball(&g, v, r1);
        let inside: std::collections::HashSet<usize> = b1.edges.iter().copied().collect();
        let exterior: Vec<usize> = (0..m).filter(|e| !inside.contains(e)).collect();

        // Step 1: reveal everything outside B_{r1} from pi^ord's projection
        let full0 = self.draw_phase_full(PhaseLabel::Ordered, &mut rng)?;
        let mut f_ord = PartialConfiguration::all_unrevealed(m);
        for &e in &exterior {
            f_ord.reveal(e, full0.get(e));
        }
        let occupancy_at_gate = f_ord.in_count();
        let degraded = matches!(self.mode, SamplerMode::Chain { .. });

        if (occupancy_at_gate as f64) < (1.0 - params.eta) * m as f64 {
            // Step 1a: unsuccessful occupancy; finish both draws from the
            // right laws and stop.
            let f_phase =
                self.complete_with_restriction(&f_ord, Some(PhaseLabel::Ordered), &mut rng)?;
            let f_boundary = match self.mode {
                SamplerMode::Oracle => {
                    let idx = self.boundary_sampler(v, r1, BoundaryCondition::Plus)?.sample(&mut rng);
                    Configuration::from_index(idx, m)
                }
                SamplerMode::Chain { .. } => {
                    let clamp = boundary_clamp(&g, &b1, BoundaryCondition::Plus);
                    self.complete_with_restriction(&clamp, None, &mut rng)?
                }
            };
            return Ok(CouplingRun {
                outcome: CouplingOutcome::UnsuccessfulOccupancy,
                f_phase,
                f_boundary,
                iterations: 0,
                occupancy_at_gate,
                radius: r as f64,
                r1,
                r2,
                polymer_witness_size: None,
                trace: Vec::new(),
                degraded_sampler: degraded,
            });
        }

        // Step 1b: the plus-side starts with the exterior all in
        let mut f_plus = PartialConfiguration::all_unrevealed(m);
        for &e in &exterior {
            f_plus.reveal(e, true);
        }
        let mut frontier: std::collections::BTreeSet<usize> =
            b1.vertices.iter().copied().filter(|&w| dist[w] == r1).collect();
        let mut trace: Vec<RevealState> = Vec::new();
        let mut iterations = 0usize;

        loop {
            self.assert_ordered_invariants(
                &g, &decomp, &dist, v, r1, r2, &f_ord, &f_plus, &frontier, iterations,
            )?;
            trace.push(RevealState {
                iteration: iterations,
                frontier: frontier.iter().copied().collect(),
                revealed_count: f_ord.revealed_count(),
                f_phase: f_ord.clone(),
                f_boundary: f_plus.clone(),
            });
            // Step 2 guard: d_G(F_i, v) > r2
            let min_depth = revealed_min_depth(&g, &f_ord, &dist);
            if min_depth <= r2 {
                // Step 3: radius breach
                let (f_phase, f_boundary) =
                    self.final_reveal(&f_ord, &f_plus, Some(PhaseLabel::Ordered), &mut rng)?;
                let witness = largest_ordered_polymer_edges(&g, &f_phase);
                let outcome = if iterations == 0 {
                    CouplingOutcome::UnsuccessfulRadius
                } else {
                    CouplingOutcome::LargePolymerWitness(witness)
                };
                return Ok(CouplingRun {
                    outcome,
                    f_phase,
                    f_boundary,
                    iterations,
                    occupancy_at_gate,
                    radius: r as f64,
                    r1,
                    r2,
                    polymer_witness_size: Some(witness),
                    trace,
                    degraded_sampler: degraded,
                });
            }
            // W_i: boundary vertices of F_i in small components of In(f_ord)
            let w_set = small_component_boundary(&g, &f_ord, n);
            if w_set.is_empty() {
                // Step 2b: success
                let (f_phase, f_boundary) =
                    self.final_reveal(&f_ord, &f_plus, Some(PhaseLabel::Ordered), &mut rng)?;
                if self.mode == SamplerMode::Oracle {
                    check_agreement_at(&g, v, &f_phase, &f_boundary)?;
                }
                return Ok(CouplingRun {
                    outcome: CouplingOutcome::AgreeAtV,
                    f_phase,
                    f_boundary,
                    iterations,
                    occupancy_at_gate,
                    radius: r as f64,
                    r1,
                    r2,
                    polymer_witness_size: None,
                    trace,
                    degraded_sampler: degraded,
                });
            }
            // Step 2a: deepest frontier vertex in a small component; ties by
            // DFS preorder
            let w_i = *w_set
                .iter()
                .min_by_key(|&&w| (std::cmp::Reverse(dist[w]), decomp.dfs_index[w]))
                .expect("nonempty W_i");
            let (p_i, _) = decomp.parent[w_i].expect("frontier vertex has a parent");
            let subtree_v = subtree_vertices_capped(&decomp, p_i, r1);
            let subtree_e = subtree_edges_capped(&decomp, p_i, r1);
            let block: Vec<usize> =
                subtree_e.iter().copied().filter(|&e| !f_ord.is_revealed(e)).collect();
            self.reveal_block_coupled(&mut f_ord, &mut f_plus, &block, None, &mut rng)?;
            for w in subtree_v {
                frontier.remove(&w);
            }
            frontier.insert(p_i);
            iterations += 1;
        }
    }

    /// The disordered revealing coupling; the radius is fixed by the graph as
    /// r = (1/3) log_{Delta-1} n.
    pub fn run_disordered(&mut self, v: usize, seed: u64) -> Result<CouplingRun, CouplingError> {
        let g = self.oracle.graph().clone();
        let params = self.params;
        let m = g.m();
        let delta = g.max_degree();
        let r_real = if delta <= 2 {
            g.n() as f64
        } else {
            (g.n() as f64).ln() / (3.0 * ((delta - 1) as f64).ln())
        };
        let r_floor = r_real.floor().max(1.0) as usize;
        let decomp = bfs_decomposition(&g, v, r_floor);
        let k = decomp.excess_edges.len();
        if r_real <= (k + 1) as f64 {
            return Err(CouplingError::RadiusPrecondition { r: r_real, k });
        }
        let (r1, r2) = choose_cut_radii(&decomp, r_real, k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b1 = ball(&g, v, r1);
        let inside1: std::collections::HashSet<usize> = b1.edges.iter().copied().collect();
        let exterior: Vec<usize> = (0..m).filter(|e| !inside1.contains(e)).collect();
        let degraded = matches!(self.mode, SamplerMode::Chain { .. });

        // Stage 0: reveal everything outside B_{r1} from pi^dis's projection
        let full0 = self.draw_phase_full(PhaseLabel::Disordered, &mut rng)?;
        let mut f_dis = PartialConfiguration::all_unrevealed(m);
        for &e in &exterior {
            f_dis.reveal(e, full0.get(e));
        }
        let occupancy_at_gate = f_dis.in_count();
        let gate_bound = params.eta * m as f64 - b1.edges.len() as f64;
        if occupancy_at_gate as f64 > gate_bound {
            let f_phase =
                self.complete_with_restriction(&f_dis, Some(PhaseLabel::Disordered), &mut rng)?;
            let f_boundary = match self.mode {
                SamplerMode::Oracle => {
                    let idx =
                        self.boundary_sampler(v, r1, BoundaryCondition::Minus)?.sample(&mut rng);
                    Configuration::from_index(idx, m)
                }
                SamplerMode::Chain { .. } => {
                    let clamp = boundary_clamp(&g, &b1, BoundaryCondition::Minus);
                    self.complete_with_restriction(&clamp, None, &mut rng)?
                }
            };
            return Ok(CouplingRun {
                outcome: CouplingOutcome::UnsuccessfulOccupancy,
                f_phase,
                f_boundary,
                iterations: 0,
                occupancy_at_gate,
                radius: r_real,
                r1,
                r2,
                polymer_witness_size: None,
                trace: Vec::new(),
                degraded_sampler: degraded,
            });
        }

        // Stage 1: minus side reveals the exterior all out; bulk reveal down
        // to E \ E(B_{r2+1})
        let mut f_minus = PartialConfiguration::all_unrevealed(m);
        for &e in &exterior {
            f_minus.reveal(e, false);
        }
        let b_inner = ball(&g, v, r2 + 1);
        let inner: std::collections::HashSet<usize> = b_inner.edges.iter().copied().collect();
        let stage1_block: Vec<usize> = b1
            .edges
            .iter()
            .copied()
            .filter(|e| !inner.contains(e) && !f_dis.is_revealed(*e))
            .collect();
        self.reveal_block_coupled(&mut f_dis, &mut f_minus, &stage1_block, None, &mut rng)?;
        if !f_minus.in_subset_of(&f_dis) {
            return Err(CouplingError::InvariantViolation(
                "disordered coupling lost In(minus) ⊆ In(dis)".into(),
            ));
        }
        let trace = vec![RevealState {
            iteration: 0,
            frontier: b_inner.shell.clone(),
            revealed_count: f_dis.revealed_count(),
            f_phase: f_dis.clone(),
            f_boundary: f_minus.clone(),
        }];

        // xi test on the partially revealed dis-side configuration
        let xi = boundary_component_set(&g, &f_dis);
        let free_boundary = xi.iter().all(|class| class.len() == 1);
        let (f_phase, f_boundary) = self.final_reveal(&f_dis, &f_minus, None, &mut rng)?;
        if free_boundary {
            if self.mode == SamplerMode::Oracle {
                check_agreement_at(&g, v, &f_phase, &f_boundary)?;
            }
            Ok(CouplingRun {
                outcome: CouplingOutcome::AgreeAtV,
                f_phase,
                f_boundary,
                iterations: 1,
                occupancy_at_gate,
                radius: r_real,
                r1,
                r2,
                polymer_witness_size: None,
                trace,
                degraded_sampler: degraded,
            })
        } else {
            let witness = crate::polymers::largest_in_component_edges(&g, &f_phase);
            Ok(CouplingRun {
                outcome: CouplingOutcome::LargePolymerWitness(witness),
                f_phase,
                f_boundary,
                iterations: 1,
                occupancy_at_gate,
                radius: r_real,
                r1,
                r2,
                polymer_witness_size: Some(witness),
                trace,
                degraded_sampler: degraded,
            })
        }
    }

    /// Complete a partial configuration to a full one, edge by edge, from the
    /// conditional distribution (optionally phase-restricted).
    fn complete_with_restriction(
        &mut self,
        base: &PartialConfiguration,
        phase: Option<PhaseLabel>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Configuration, CouplingError> {
        let m = self.oracle.m();
        let mut pc = base.clone();
        match self.mode {
            SamplerMode::Oracle => {
                for e in 0..m {
                    if pc.is_revealed(e) {
                        continue;
                    }
                    let r = Restriction { phase, clamp: Some(pc.clone()) };
                    let p = self.oracle.edge_marginal(&self.params, &r, e)?;
                    pc.reveal(e, rng.random::<f64>() < p);
                }
            }
            SamplerMode::Chain { .. } => {
                let mut other = pc.clone();
                let block: Vec<usize> = pc.unrevealed_edges().collect();
                let e2 = block.clone();
                self.reveal_block_chain(&mut pc, &mut other, &e2, rng, 32)?;
                let _ = block;
            }
        }
        let mut out = Configuration::all_out(m);
        for e in 0..m {
            out.set(e, pc.get(e).expect("fully revealed"));
        }
        Ok(out)
    }

    /// Reveal everything that remains, coupled, and return full configs.
    fn final_reveal(
        &mut self,
        f_a: &PartialConfiguration,
        f_b: &PartialConfiguration,
        phase_a: Option<PhaseLabel>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Configuration, Configuration), CouplingError> {
        let m = self.oracle.m();
        let mut a = f_a.clone();
        let mut b = f_b.clone();
        let block: Vec<usize> = a.unrevealed_edges().collect();
        self.reveal_block_coupled(&mut a, &mut b, &block, phase_a, rng)?;
        let mut fa = Configuration::all_out(m);
        let mut fb = Configuration::all_out(m);
        for e in 0..m {
            fa.set(e, a.get(e).expect("revealed"));
            fb.set(e, b.get(e).expect("revealed"));
        }
        Ok((fa, fb))
    }

    #[allow(clippy::too_many_arguments)]
    fn assert_ordered_invariants(
        &self,
        g: &Graph,
        decomp: &BfsDecomposition,
        dist: &[usize],
        v: usize,
        r1: usize,
        r2: usize,
        f_ord: &PartialConfiguration,
        f_plus: &PartialConfiguration,
        frontier: &std::collections::BTreeSet<usize>,
        iteration: usize,
    ) -> Result<(), CouplingError> {
        let fail = |msg: String| Err(CouplingError::InvariantViolation(msg));
        // Inv1: equal revealed sets, In containment, exterior revealed
        for e in 0..g.m() {
            if f_ord.is_revealed(e) != f_plus.is_revealed(e) {
                return fail(format!("Inv1({iteration}): revealed sets differ at edge {e}"));
            }
        }
        if !f_ord.in_subset_of(f_plus) {
            return fail(format!("Inv1({iteration}): In(ord) not within In(plus)"));
        }
        let b1 = ball(g, v, r1);
        let inside: std::collections::HashSet<usize> = b1.edges.iter().copied().collect();
        for e in 0..g.m() {
            if !inside.contains(&e) && !f_ord.is_revealed(e) {
                return fail(format!("Inv1({iteration}): exterior edge {e} unrevealed"));
            }
        }
        // Inv2: pairwise disjoint subtrees over the frontier
        let mut seen: std::collections::HashMap<usize, usize> = Default::default();
        for &u in frontier {
            for w in subtree_vertices_capped(decomp, u, r1) {
                if let Some(prev) = seen.insert(w, u) {
                    return fail(format!(
                        "Inv2({iteration}): subtrees of {prev} and {u} share vertex {w}"
                    ));
                }
            }
        }
        // Inv3: frontier subtrees cover exactly V(F_i) ∩ V(T), with their
        // edges revealed
        let mut v_f: std::collections::HashSet<usize> = Default::default();
        for e in f_ord.revealed_edges() {
            let (a, b) = g.edge(e);
            v_f.insert(a);
            v_f.insert(b);
        }
        let v_t: std::collections::HashSet<usize> =
            b1.vertices.iter().copied().collect();
        let covered: std::collections::HashSet<usize> = seen.keys().copied().collect();
        let expect: std::collections::HashSet<usize> =
            v_f.intersection(&v_t).copied().collect();
        if covered != expect {
            return fail(format!(
                "Inv3({iteration}): subtree cover has {} vertices, V(F)∩V(T) has {}",
                covered.len(),
                expect.len()
            ));
        }
        for &u in frontier {
            for e in subtree_edges_capped(decomp, u, r1) {
                if !f_ord.is_revealed(e) {
                    return fail(format!(
                        "Inv3({iteration}): subtree edge {e} of frontier {u} unrevealed"
                    ));
                }
            }
        }
        // Inv4: if d(F_i, v) > r2 then boundary(F_i) within the frontier
        let min_depth = revealed_min_depth(g, f_ord, dist);
        if min_depth > r2 {
            for w in boundary_vertices(g, f_ord) {
                if !frontier.contains(&w) {
                    return fail(format!(
                        "Inv4({iteration}): boundary vertex {w} not in frontier"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// min over revealed edges of the smaller endpoint distance from v.
fn revealed_min_depth(g: &Graph, pc: &PartialConfiguration, dist: &[usize]) -> usize {
    let mut best = usize::MAX;
    for e in pc.revealed_edges() {
        let (a, b) = g.edge(e);
        best = best.min(dist[a]).min(dist[b]);
    }
    best
}

/// Vertices incident to both a revealed and an unrevealed edge.
fn boundary_vertices(g: &Graph, pc: &PartialConfiguration) -> Vec<usize> {
    let mut rev = vec![false; g.n()];
    let mut unrev = vec![false; g.n()];
    for e in 0..g.m() {
        let (a, b) = g.edge(e);
        if pc.is_revealed(e) {
            rev[a] = true;
            rev[b] = true;
        } else {
            unrev[a] = true;
            unrev[b] = true;
        }
    }
    (0..g.n()).filter(|&w| rev[w] && unrev[w]).collect()
}

/// Boundary vertices whose component in G[In(pc)] has fewer than n/2 vertices.
fn small_component_boundary(g: &Graph, pc: &PartialConfiguration, n: usize) -> Vec<usize> {
    let mut uf = UnionFind::new(g.n());
    for e in pc.in_edges() {
        let (a, b) = g.edge(e);
        uf.union(a, b);
    }
    let mut sizes: std::collections::HashMap<usize, usize> = Default::default();
    for w in 0..g.n() {
        *sizes.entry(uf.find(w)).or_insert(0) += 1;
    }
    boundary_vertices(g, pc)
        .into_iter()
        .filter(|&w| sizes[&uf.find(w)] * 2 < n)
        .collect()
}

fn subtree_vertices_capped(decomp: &BfsDecomposition, u: usize, r1: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![u];
    while let Some(x) = stack.pop() {
        out.push(x);
        for &(c, _) in decomp.children(x) {
            if decomp.depth[c] <= r1 {
                stack.push(c);
            }
        }
    }
    out
}

fn subtree_edges_capped(decomp: &BfsDecomposition, u: usize, r1: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![u];
    while let Some(x) = stack.pop() {
        for &(c, e) in decomp.children(x) {
            if decomp.depth[c] <= r1 {
                out.push(e);
                stack.push(c);
            }
        }
    }
    out
}

fn largest_ordered_polymer_edges(g: &Graph, f: &Configuration) -> usize {
    let out: Vec<usize> = f.iter_out().collect();
    let closure = crate::polymers::b_closure(g, &out);
    let mut uf = UnionFind::new(g.n());
    for &e in &closure {
        let (u, v) = g.edge(e);
        uf.union(u, v);
    }
    let mut counts: std::collections::HashMap<usize, usize> = Default::default();
    for &e in &closure {
        let (u, _) = g.edge(e);
        *counts.entry(uf.find(u)).or_insert(0) += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

fn check_agreement_at(
    g: &Graph,
    v: usize,
    f_a: &Configuration,
    f_b: &Configuration,
) -> Result<(), CouplingError> {
    for &e in g.incident_edges(v) {
        if f_a.get(e as usize) != f_b.get(e as usize) {
            return Err(CouplingError::InvariantViolation(format!(
                "successful termination but configurations disagree at edge {e} incident to {v}"
            )));
        }
    }
    Ok(())
}
