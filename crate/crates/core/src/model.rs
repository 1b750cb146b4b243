//! Model parameters, edge configurations, phases and configuration weights.

use crate::graph::Graph;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("q must be >= 1, got {0}")]
    InvalidQ(f64),
    #[error("beta must be > 0, got {0}")]
    InvalidBeta(f64),
    #[error("beta_c requires q > 2, got q = {0}")]
    BetaCRequiresQAboveTwo(f64),
    #[error("invalid constants: eta = {eta}, zeta = {zeta} (need 0 < zeta < eta < 1/2)")]
    InvalidConstants { eta: f64, zeta: f64 },
    #[error("configuration length {got} does not match edge count {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("revealed sets overlap at edge {0}")]
    OverlappingUnion(usize),
    #[error("bad configuration encoding: {0}")]
    BadEncoding(String),
}

/// ln(e^beta - 1), stable for both tiny and large beta.
pub fn log_expm1(beta: f64) -> f64 {
    if beta > 40.0 {
        // e^beta - 1 == e^beta * (1 - e^-beta); second factor is 1 - eps
        beta + (-(-beta).exp()).ln_1p()
    } else {
        beta.exp_m1().ln()
    }
}

/// Random-cluster parameters: q >= 1, beta > 0, the degree of the ambient
/// regular graph, and the phase/slack margins eta and zeta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub q: f64,
    pub beta: f64,
    pub delta_deg: usize,
    /// Phase margin: ordered means at least (1-eta)m in-edges, disordered at
    /// most eta*m.
    pub eta: f64,
    /// Slack margin used by the rejection-chain event bookkeeping; zeta < eta.
    pub zeta: f64,
}

impl ModelParams {
    /// Parameters with the default margins: eta = min(delta/5, 1/100) for the
    /// expander constant `delta = 0.1`, and zeta = min(20*Delta/ln q, eta/2).
    /// The zeta formula only drops below eta for astronomically large q, so it
    /// is clamped to eta/2 at practical sizes.
    pub fn new(q: f64, beta: f64, delta_deg: usize) -> Result<Self, ModelError> {
        let delta = 0.1f64;
        let eta = (delta / 5.0).min(0.01);
        let zeta_formula = 20.0 * delta_deg as f64 / q.ln().max(f64::MIN_POSITIVE);
        let zeta = zeta_formula.min(eta / 2.0);
        Self::with_margins(q, beta, delta_deg, eta, zeta)
    }

    /// Parameters with explicit eta/zeta overrides.
    pub fn with_margins(
        q: f64,
        beta: f64,
        delta_deg: usize,
        eta: f64,
        zeta: f64,
    ) -> Result<Self, ModelError> {
        if !(q >= 1.0) {
            return Err(ModelError::InvalidQ(q));
        }
        if !(beta > 0.0) {
            return Err(ModelError::InvalidBeta(beta));
        }
        if !(0.0 < zeta && zeta < eta && eta < 0.5) {
            return Err(ModelError::InvalidConstants { eta, zeta });
        }
        Ok(ModelParams { q, beta, delta_deg, eta, zeta })
    }

    /// p = 1 - e^{-beta}.
    pub fn p(&self) -> f64 {
        -(-self.beta).exp_m1()
    }

    /// p_hat = p / ((1-p)q + p) = (e^beta - 1)/(q + e^beta - 1).
    pub fn p_hat(&self) -> f64 {
        let p = self.p();
        p / ((1.0 - p) * self.q + p)
    }

    /// ln q.
    pub fn log_q(&self) -> f64 {
        self.q.ln()
    }

    /// ln(e^beta - 1).
    pub fn log_w(&self) -> f64 {
        log_expm1(self.beta)
    }

    /// Ordered-phase occupancy threshold: in_count >= (1-eta)*m.
    pub fn is_ordered(&self, in_count: usize, m: usize) -> bool {
        in_count as f64 >= (1.0 - self.eta) * m as f64
    }

    /// Disordered-phase occupancy threshold: in_count <= eta*m.
    pub fn is_disordered(&self, in_count: usize, m: usize) -> bool {
        in_count as f64 <= self.eta * m as f64
    }
}

/// Exact ordered/disordered transition point: log((q-2)/((q-1)^{1-2/Delta}-1)).
/// Defined for q > 2 and Delta >= 3.
pub fn beta_c(q: f64, delta_deg: usize) -> Result<f64, ModelError> {
    if !(q > 2.0) {
        return Err(ModelError::BetaCRequiresQAboveTwo(q));
    }
    assert!(delta_deg >= 3, "beta_c needs Delta >= 3");
    let expo = 1.0 - 2.0 / delta_deg as f64;
    Ok(((q - 2.0) / ((q - 1.0).powf(expo) - 1.0)).ln())
}

/// Large-q asymptotic reference for the transition point: 2*ln(q)/Delta.
pub fn beta_c_asymptotic(q: f64, delta_deg: usize) -> f64 {
    2.0 * q.ln() / delta_deg as f64
}

/// Phase classification of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseLabel {
    Ordered,
    Disordered,
    Neither,
}

impl PhaseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseLabel::Ordered => "ordered",
            PhaseLabel::Disordered => "disordered",
            PhaseLabel::Neither => "neither",
        }
    }
}

/// Classify a configuration by its in-edge count.
pub fn phase_of(f: &Configuration, params: &ModelParams, m: usize) -> PhaseLabel {
    debug_assert_eq!(f.len(), m);
    let k = f.in_count();
    if params.is_ordered(k, m) {
        PhaseLabel::Ordered
    } else if params.is_disordered(k, m) {
        PhaseLabel::Disordered
    } else {
        PhaseLabel::Neither
    }
}

/// A full edge configuration: one bit per edge index, with a cached in-count.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    words: Vec<u64>,
    len: usize,
    in_count: usize,
}

impl std::fmt::Debug for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Configuration(")?;
        for e in 0..self.len {
            write!(f, "{}", self.get(e) as u8)?;
        }
        write!(f, ")")
    }
}

impl Configuration {
    pub fn all_out(m: usize) -> Self {
        Configuration { words: vec![0; m.div_ceil(64)], len: m, in_count: 0 }
    }

    pub fn all_in(m: usize) -> Self {
        let mut c = Self::all_out(m);
        for e in 0..m {
            c.set(e, true);
        }
        c
    }

    /// Build from the oracle's binary-counting index: bit e of `bits` is the
    /// state of edge e.
    pub fn from_index(bits: u64, m: usize) -> Self {
        assert!(m <= 64);
        let mut c = Self::all_out(m);
        for e in 0..m {
            if bits >> e & 1 == 1 {
                c.set(e, true);
            }
        }
        c
    }

    /// The oracle's binary-counting index of this configuration (m <= 64).
    pub fn to_index(&self) -> u64 {
        assert!(self.len <= 64);
        if self.len == 0 {
            0
        } else {
            self.words[0] & mask_upto(self.len)
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, e: usize) -> bool {
        debug_assert!(e < self.len);
        self.words[e / 64] >> (e % 64) & 1 == 1
    }

    pub fn set(&mut self, e: usize, v: bool) {
        debug_assert!(e < self.len);
        let w = &mut self.words[e / 64];
        let bit = 1u64 << (e % 64);
        let was = *w & bit != 0;
        if v && !was {
            *w |= bit;
            self.in_count += 1;
        } else if !v && was {
            *w &= !bit;
            self.in_count -= 1;
        }
    }

    pub fn in_count(&self) -> usize {
        self.in_count
    }

    pub fn out_count(&self) -> usize {
        self.len - self.in_count
    }

    pub fn iter_in(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&e| self.get(e))
    }

    pub fn iter_out(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&e| !self.get(e))
    }

    /// In-set containment: every in-edge of `self` is in `other`.
    pub fn in_subset_of(&self, other: &Configuration) -> bool {
        assert_eq!(self.len, other.len);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Serialize as `<m>:<hex>` with edge bit e stored LSB-first in byte e/8.
    pub fn to_hex(&self) -> String {
        let mut s = format!("{}:", self.len);
        let n_bytes = self.len.div_ceil(8);
        for i in 0..n_bytes {
            let byte = (self.words[i / 8] >> (8 * (i % 8))) as u8;
            s.push_str(&format!("{byte:02x}"));
        }
        s
    }

    pub fn from_hex(s: &str) -> Result<Self, ModelError> {
        let (m_str, hex) = s
            .split_once(':')
            .ok_or_else(|| ModelError::BadEncoding("missing ':' separator".into()))?;
        let m: usize = m_str
            .parse()
            .map_err(|_| ModelError::BadEncoding(format!("bad edge count {m_str:?}")))?;
        let n_bytes = m.div_ceil(8);
        if hex.len() != 2 * n_bytes {
            return Err(ModelError::BadEncoding(format!(
                "expected {} hex chars for m = {m}, got {}",
                2 * n_bytes,
                hex.len()
            )));
        }
        let mut c = Self::all_out(m);
        for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
            let byte = u8::from_str_radix(std::str::from_utf8(chunk).unwrap(), 16)
                .map_err(|e| ModelError::BadEncoding(e.to_string()))?;
            for b in 0..8 {
                let e = 8 * i + b;
                if byte >> b & 1 == 1 {
                    if e >= m {
                        return Err(ModelError::BadEncoding(
                            "set bit beyond edge count".into(),
                        ));
                    }
                    c.set(e, true);
                }
            }
        }
        Ok(c)
    }
}

fn mask_upto(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

/// Number of connected components of (V, In(f)); isolated vertices count.
pub fn component_count(g: &Graph, f: &Configuration) -> usize {
    assert_eq!(f.len(), g.m());
    let mut uf = UnionFind::new(g.n());
    for e in f.iter_in() {
        let (u, v) = g.edge(e);
        uf.union(u, v);
    }
    uf.component_count()
}

/// Log-weight of a configuration: c(f)*ln q + |f|*ln(e^beta - 1).
pub fn log_weight(g: &Graph, f: &Configuration, params: &ModelParams) -> f64 {
    let c = component_count(g, f);
    c as f64 * params.log_q() + f.in_count() as f64 * params.log_w()
}

/// Wired component count on a ball: components of (B_r(rho), In(f)) that
/// contain no shell vertex. `f` must be defined exactly on the ball's edges,
/// indexed by the ball's local edge order.
pub fn wired_component_count(ball: &crate::graph::BallView, f: &Configuration) -> usize {
    assert_eq!(f.len(), ball.edges.len());
    let nb = ball.vertices.len();
    let mut uf = UnionFind::new(nb);
    for (le, &ge) in ball.edges.iter().enumerate() {
        if f.get(le) {
            let (u, v) = ball.graph_edge_endpoints(ge);
            uf.union(ball.local_index(u), ball.local_index(v));
        }
    }
    let mut touches_shell = vec![false; nb];
    for &s in &ball.shell {
        let root = uf.find(ball.local_index(s));
        touches_shell[root] = true;
    }
    let mut count = 0;
    for v in 0..nb {
        if uf.find(v) == v && !touches_shell[v] {
            count += 1;
        }
    }
    count
}

/// Partial configuration: per-edge {0, 1, *}.
#[derive(Clone, PartialEq, Eq)]
pub struct PartialConfiguration {
    revealed: Vec<u64>,
    value: Vec<u64>,
    len: usize,
}

impl std::fmt::Debug for PartialConfiguration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Partial(")?;
        for e in 0..self.len {
            match self.get(e) {
                None => write!(f, "*")?,
                Some(true) => write!(f, "1")?,
                Some(false) => write!(f, "0")?,
            }
        }
        write!(f, ")")
    }
}

impl PartialConfiguration {
    pub fn all_unrevealed(m: usize) -> Self {
        let w = m.div_ceil(64);
        PartialConfiguration { revealed: vec![0; w], value: vec![0; w], len: m }
    }

    /// Promote a full configuration to a fully revealed partial one.
    pub fn from_full(c: &Configuration) -> Self {
        let mut a = Self::all_unrevealed(c.len());
        for e in 0..c.len() {
            a.reveal(e, c.get(e));
        }
        a
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// None = unrevealed; Some(state) otherwise.
    pub fn get(&self, e: usize) -> Option<bool> {
        debug_assert!(e < self.len);
        let (w, b) = (e / 64, e % 64);
        if self.revealed[w] >> b & 1 == 1 {
            Some(self.value[w] >> b & 1 == 1)
        } else {
            None
        }
    }

    pub fn reveal(&mut self, e: usize, v: bool) {
        debug_assert!(e < self.len);
        let (w, b) = (e / 64, e % 64);
        self.revealed[w] |= 1 << b;
        if v {
            self.value[w] |= 1 << b;
        } else {
            self.value[w] &= !(1 << b);
        }
    }

    pub fn is_revealed(&self, e: usize) -> bool {
        self.get(e).is_some()
    }

    pub fn revealed_count(&self) -> usize {
        self.revealed.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn revealed_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&e| self.is_revealed(e))
    }

    pub fn unrevealed_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&e| !self.is_revealed(e))
    }

    pub fn in_count(&self) -> usize {
        self.value.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn in_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&e| self.get(e) == Some(true))
    }

    pub fn out_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&e| self.get(e) == Some(false))
    }

    /// Does `other` refine `self`? Positional agreement on all revealed edges
    /// of `self`; a contradiction yields false, not an error.
    pub fn is_refined_by(&self, other: &PartialConfiguration) -> bool {
        assert_eq!(self.len, other.len);
        for w in 0..self.revealed.len() {
            let r = self.revealed[w];
            if r & !other.revealed[w] != 0 {
                return false;
            }
            if (self.value[w] ^ other.value[w]) & r != 0 {
                return false;
            }
        }
        true
    }

    /// A full configuration refines `self`.
    pub fn is_refined_by_full(&self, full: &Configuration) -> bool {
        self.is_refined_by(&PartialConfiguration::from_full(full))
    }

    /// Union of two partial configurations with disjoint revealed sets.
    pub fn union(&self, other: &PartialConfiguration) -> Result<PartialConfiguration, ModelError> {
        if self.len != other.len {
            return Err(ModelError::LengthMismatch { got: other.len, expected: self.len });
        }
        for w in 0..self.revealed.len() {
            let overlap = self.revealed[w] & other.revealed[w];
            if overlap != 0 {
                let e = w * 64 + overlap.trailing_zeros() as usize;
                return Err(ModelError::OverlappingUnion(e));
            }
        }
        let mut out = self.clone();
        for w in 0..out.revealed.len() {
            out.revealed[w] |= other.revealed[w];
            out.value[w] |= other.value[w];
        }
        Ok(out)
    }

    /// In-set containment on revealed in-edges.
    pub fn in_subset_of(&self, other: &PartialConfiguration) -> bool {
        assert_eq!(self.len, other.len);
        self.value.iter().zip(&other.value).all(|(a, b)| a & !b == 0)
    }
}

/// Boundary component set xi(A): the partition of the boundary vertices of
/// R(A) (vertices incident to both a revealed and an unrevealed edge) induced
/// by connectivity in G[In(A)]. Canonical form: classes sorted internally and
/// between each other.
pub fn boundary_component_set(g: &Graph, a: &PartialConfiguration) -> Vec<Vec<usize>> {
    assert_eq!(a.len(), g.m());
    let mut incident_revealed = vec![false; g.n()];
    let mut incident_unrevealed = vec![false; g.n()];
    for e in 0..g.m() {
        let (u, v) = g.edge(e);
        if a.is_revealed(e) {
            incident_revealed[u] = true;
            incident_revealed[v] = true;
        } else {
            incident_unrevealed[u] = true;
            incident_unrevealed[v] = true;
        }
    }
    let mut uf = UnionFind::new(g.n());
    for e in a.in_edges() {
        let (u, v) = g.edge(e);
        uf.union(u, v);
    }
    let mut classes: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..g.n() {
        if incident_revealed[v] && incident_unrevealed[v] {
            classes.entry(uf.find(v)).or_default().push(v);
        }
    }
    let mut out: Vec<Vec<usize>> = classes.into_values().collect();
    out.sort();
    out
}

/// Plain union-find; used for component counting throughout the crate.
#[derive(Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), rank: vec![0; n], components: n }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (hi, lo) = if self.rank[ra] >= self.rank[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[lo] = hi as u32;
        if self.rank[hi] == self.rank[lo] {
            self.rank[hi] += 1;
        }
        self.components -= 1;
        true
    }

    pub fn connected(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn component_count(&self) -> usize {
        self.components
    }
}
