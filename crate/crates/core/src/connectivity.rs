//! Fully-dynamic connectivity over the in-edge set.
//!
//! Three engines behind one interface:
//!
//! - [`HdtConnectivity`]: hierarchical spanning forests over Euler tour trees
//!   (Holm–de Lichtenberg–Thorup style), amortized O(log^2 n) per update;
//!   the default for large chains.
//! - [`UnionFindConnectivity`]: union-find with an epoch rebuild after any
//!   deletion. Effectively O(n + m) per query following a delete; the naive
//!   fallback used for differential testing.
//! - [`NaiveConnectivity`]: adjacency-bitset BFS; exact and fast for small n,
//!   doubles as the shadow oracle.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConnectivityError {
    #[error("duplicate insert of edge ({0}, {1})")]
    DuplicateInsert(usize, usize),
    #[error("delete of missing edge ({0}, {1})")]
    MissingEdge(usize, usize),
}

pub trait ConnectivityEngine {
    fn n(&self) -> usize;
    fn insert_edge(&mut self, u: usize, v: usize) -> Result<(), ConnectivityError>;
    fn delete_edge(&mut self, u: usize, v: usize) -> Result<(), ConnectivityError>;
    fn contains_edge(&self, u: usize, v: usize) -> bool;
    fn connected(&mut self, u: usize, v: usize) -> bool;
    fn component_size(&mut self, v: usize) -> usize;

    /// Present edges that the engine can prove redundant for connectivity
    /// (e.g. non-tree edges of a spanning forest) may report Some(false)
    /// here, licensing a constant-time cut probe. None means "don't know".
    fn is_forest_edge(&self, _u: usize, _v: usize) -> Option<bool> {
        None
    }

    /// Would e = {u, v} be a cut-edge of (V, In ∪ {e})? For an absent edge
    /// this is !connected(u, v); for a present edge, whether removing it
    /// disconnects its endpoints (delete → query → reinsert, or the
    /// forest-edge shortcut). Observable state is unchanged.
    fn would_be_cut_edge(&mut self, u: usize, v: usize) -> bool {
        if u == v {
            return false;
        }
        if self.contains_edge(u, v) {
            if self.is_forest_edge(u, v) == Some(false) {
                return false; // a cycle through the edge exists
            }
            self.delete_edge(u, v).expect("edge present");
            let cut = !self.connected(u, v);
            self.insert_edge(u, v).expect("edge absent after delete");
            cut
        } else {
            !self.connected(u, v)
        }
    }
}

/// Engine selector used by chain construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    /// Bitset BFS for small n, HDT above.
    Auto,
    Naive,
    UnionFind,
    Hdt,
}

/// Enum dispatch over the three engines.
pub enum Connectivity {
    Naive(NaiveConnectivity),
    UnionFind(UnionFindConnectivity),
    Hdt(HdtConnectivity),
}

impl Connectivity {
    pub fn new(kind: EngineKind, n: usize) -> Self {
        match kind {
            EngineKind::Auto => {
                if n <= 256 {
                    Connectivity::Naive(NaiveConnectivity::new(n))
                } else {
                    Connectivity::Hdt(HdtConnectivity::new(n))
                }
            }
            EngineKind::Naive => Connectivity::Naive(NaiveConnectivity::new(n)),
            EngineKind::UnionFind => Connectivity::UnionFind(UnionFindConnectivity::new(n)),
            EngineKind::Hdt => Connectivity::Hdt(HdtConnectivity::new(n)),
        }
    }
}

macro_rules! dispatch {
    ($self:ident, $e:ident, $body:expr) => {
        match $self {
            Connectivity::Naive($e) => $body,
            Connectivity::UnionFind($e) => $body,
            Connectivity::Hdt($e) => $body,
        }
    };
}

impl ConnectivityEngine for Connectivity {
    fn n(&self) -> usize {
        dispatch!(self, e, e.n())
    }
    fn insert_edge(&mut self, u: usize, v: usize) -> Result<(), ConnectivityError> {
        dispatch!(self, e, e.insert_edge(u, v))
    }
    fn delete_edge(&mut self, u: usize, v: usize) -> Result<(), ConnectivityError> {
        dispatch!(self, e, e.delete_edge(u, v))
    }
    fn contains_edge(&self, u: usize, v: usize) -> bool {
        dispatch!(self, e, e.contains_edge(u, v))
    }
    fn connected(&mut self, u: usize, v: usize) -> bool {
        dispatch!(self, e, e.connected(u, v))
    }
    fn component_size(&mut self, v: usize) -> usize {
        dispatch!(self, e, e.component_size(v))
    }
    fn is_forest_edge(&self, u: usize, v: usize) -> Option<bool> {
        dispatch!(self, e, e.is_forest_edge(u, v))
    }
}

fn key(u: usize, v: usize) -> (u32, u32) {
    (u.min(v) as u32, u.max(v) as u32)
}

// ---------------------------------------------------------------------------
// Naive adjacency-bitset engine

pub struct NaiveConnectivity {
    n: usize,
    words: usize,
    adj: Vec<u64>, // n rows of `words` u64s
    edges: std::collections::HashSet<(u32, u32)>,
}

impl NaiveConnectivity {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        NaiveConnectivity { n, words, adj: vec![0; n * words], edges: Default::default() }
    }

    fn set_bit(&mut self, u: usize, v: usize, on: bool) {
        let idx = u * self.words + v / 64;
        if on {
            self.adj[idx] |= 1 << (v % 64);
        } else {
            self.adj[idx] &= !(1 << (v % 64));
        }
    }

    /// Single-word BFS for n <= 64: no allocation.
    fn reach1(&self, u: usize) -> u64 {
        let mut reached = 1u64 << u;
        let mut frontier = reached;
        while frontier != 0 {
            let mut next = 0u64;
            let mut bits = frontier;
            while bits != 0 {
                let v = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                next |= self.adj[v];
            }
            next &= !reached;
            reached |= next;
            frontier = next;
        }
        reached
    }

    fn reach(&self, u: usize) -> Vec<u64> {
        let mut reached = vec![0u64; self.words];
        let mut frontier = vec![0u64; self.words];
        reached[u / 64] |= 1 << (u % 64);
        frontier[u / 64] |= 1 << (u % 64);
        let mut next = vec![0u64; self.words];
        loop {
            let mut any = false;
            next.iter_mut().for_each(|w| *w = 0);
            for w in 0..self.words {
                let mut bits = frontier[w];
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let v = w * 64 + b;
                    let row = &self.adj[v * self.words..(v + 1) * self.words];
                    for (i, &row_word) in row.iter().enumerate() {
                        let new = row_word & !reached[i];
                        if new != 0 {
                            reached[i] |= new;
                            next[i] |= new;
                            any = true;
                        }
                    }
                }
            }
            if !any {
                return reached;
            }
            std::mem::swap(&mut frontier, &mut next);
        }
    }
}

impl ConnectivityEngine for NaiveConnectivity {
    fn n(&self) -> usize {
        self.n
    }

    fn insert_edge(&mut self, u: usize, v: usize) -> Result<(), ConnectivityError> {
        if !self.edges.insert(key(u, v)) {
            return Err(ConnectivityError::DuplicateInsert(u, v));
        }
        self.set_bit(u, v, true);
        self.set_bit(v, u, true);
        Ok(())
    }

    fn delete_edge(&mut self, u: usize, v: usize) -> Result<(), ConnectivityError> {
        if !self.edges.remove(&key(u, v)) {
            return Err(ConnectivityError::MissingEdge(u, v));
        }
        self.set_bit(u, v, false);
        self.set_bit(v, u, false);
        Ok(())
    }

    fn contains_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&key(u, v))
    }

    fn connected(&mut self, u: usize, v: usize) -> bool {
        if u == v {
            return true;
        }
        if self.words == 1 {
            return self.reach1(u) >> v & 1 == 1;
        }
        let reached = self.reach(u);
        reached[v / 64] >> (v % 64) & 1 == 1
    }

    fn component_size(&mut self, v: usize) -> usize {
        if self.words == 1 {
            return self.reach1(v).count_ones() as usize;
        }
        self.reach(v).iter().map(|w| w.count_ones() as usize).sum()
    }
}

// ---------------------------------------------------------------------------
// Union-find with epoch rebuild on deletion

pub struct UnionFindConnectivity {
    n: usize,
    edges: std::collections::HashSet<(u32, u32)>,
    parent: Vec<u32>,
    size: Vec<u32>,
    dirty: bool,
}

impl UnionFindConnectivity {
    pub fn new(n: usize) -> Self {
        UnionFindConnectivity {
            n,
            edges: Default::default(),
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            dirty: false,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (hi, lo) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[lo] = hi as u32;
        self.size[hi] += self.size[lo];
    }

    fn rebuild_if_dirty(&mut self) {
        if !self.dirty {
            return;
        }
        for v in 0..self.n {
            self.parent[v] = v as u32;
            self.size[v] = 1;
        }
        let edges: Vec<(u32, u32)> = self.edges.iter().copied().collect();
        for (u, v) in edges {
            self.union(u as usize, v as usize);
        }
        self.dirty = false;
    }
}

impl ConnectivityEngine for UnionFindConnectivity {
    fn n(&self) -> usize {
        self.n
    }

    fn insert_edge(&mut self, u: usize, v: usize) -> Result<(), ConnectivityError> {
        if !self.edges.insert(key(u, v)) {
            return Err(ConnectivityError::DuplicateInsert(u, v));
        }
        if !self.dirty {
            self.union(u, v);
        }
        Ok(())
    }

    fn delete_edge(&mut self, u: usize, v: usize) -> Result<(), ConnectivityError> {
        if !self.edges.remove(&key(u, v)) {
            return Err(ConnectivityError::MissingEdge(u, v));
        }
        self.dirty = true;
        Ok(())
    }

    fn contains_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&key(u, v))
    }

    fn connected(&mut self, u: usize, v: usize) -> bool {
        self.rebuild_if_dirty();
        self.find(u) == self.find(v)
    }

    fn component_size(&mut self, v: usize) -> usize {
        self.rebuild_if_dirty();
        let r = self.find(v);
        self.size[r] as usize
    }
}

// ---------------------------------------------------------------------------
// Treap over Euler tour sequences (struct-of-arrays, parent pointers)

const NIL: u32 = u32::MAX;

// node flag bits
const F_IS_VERTEX: u8 = 1 << 0;
const F_EXACT: u8 = 1 << 1;
const F_NONTREE: u8 = 1 << 2;
const F_SUB_EXACT: u8 = 1 << 3;
const F_SUB_NONTREE: u8 = 1 << 4;

struct Treap {
    left: Vec<u32>,
    right: Vec<u32>,
    parent: Vec<u32>,
    priority: Vec<u32>,
    /// packed subtree counters: low 32 bits all nodes, high 32 vertex nodes
    cv: Vec<u64>,
    flags: Vec<u8>,
    payload: Vec<u32>, // vertex id or edge slot
    free: Vec<u32>,
    rng_state: u64,
}

impl Treap {
    fn new() -> Self {
        Treap {
            left: Vec::new(),
            right: Vec::new(),
            parent: Vec::new(),
            priority: Vec::new(),
            cv: Vec::new(),
            flags: Vec::new(),
            payload: Vec::new(),
            free: Vec::new(),
            rng_state: 0x243f6a8885a308d3,
        }
    }

    fn next_priority(&mut self) -> u32 {
        // splitmix64, truncated
        self.rng_state = self.rng_state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.rng_state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        (z ^ (z >> 31)) as u32
    }

    fn alloc(&mut self, is_vertex: bool, payload: u32) -> u32 {
        let pr = self.next_priority();
        let cv = 1u64 | ((is_vertex as u64) << 32);
        let fl = if is_vertex { F_IS_VERTEX } else { 0 };
        if let Some(i) = self.free.pop() {
            let ix = i as usize;
            self.left[ix] = NIL;
            self.right[ix] = NIL;
            self.parent[ix] = NIL;
            self.priority[ix] = pr;
            self.cv[ix] = cv;
            self.flags[ix] = fl;
            self.payload[ix] = payload;
            i
        } else {
            self.left.push(NIL);
            self.right.push(NIL);
            self.parent.push(NIL);
            self.priority.push(pr);
            self.cv.push(cv);
            self.flags.push(fl);
            self.payload.push(payload);
            (self.left.len() - 1) as u32
        }
    }

    fn release(&mut self, i: u32) {
        self.free.push(i);
    }

    #[inline]
    fn count(&self, i: u32) -> u32 {
        self.cv[i as usize] as u32
    }

    #[inline]
    fn vcount(&self, i: u32) -> u32 {
        (self.cv[i as usize] >> 32) as u32
    }

    #[inline]
    fn payload(&self, i: u32) -> u32 {
        self.payload[i as usize]
    }

    #[inline]
    fn has_flag(&self, i: u32, bit: u8) -> bool {
        self.flags[i as usize] & bit != 0
    }

    fn set_own_flag(&mut self, i: u32, bit: u8, on: bool) {
        if on {
            self.flags[i as usize] |= bit;
        } else {
            self.flags[i as usize] &= !bit;
        }
    }

    /// Recompute aggregates of i from its children; true if anything changed.
    fn pull(&mut self, i: u32) -> bool {
        let ix = i as usize;
        let (l, r) = (self.left[ix], self.right[ix]);
        let own = self.flags[ix];
        let mut cv = 1u64 | (((own & F_IS_VERTEX != 0) as u64) << 32);
        let mut sub = own & (F_EXACT | F_NONTREE);
        if l != NIL {
            cv += self.cv[l as usize];
            let lf = self.flags[l as usize];
            sub |= (lf >> 2) & (F_EXACT | F_NONTREE); // shift SUB bits down
        }
        if r != NIL {
            cv += self.cv[r as usize];
            let rf = self.flags[r as usize];
            sub |= (rf >> 2) & (F_EXACT | F_NONTREE);
        }
        // sub currently holds the OR in the EXACT/NONTREE positions; store it
        // in the SUB positions
        let new_flags = (own & (F_IS_VERTEX | F_EXACT | F_NONTREE)) | (sub << 2);
        let changed = self.cv[ix] != cv || self.flags[ix] != new_flags;
        self.cv[ix] = cv;
        self.flags[ix] = new_flags;
        changed
    }

    fn root_of(&self, mut i: u32) -> u32 {
        while self.parent[i as usize] != NIL {
            i = self.parent[i as usize];
        }
        i
    }

    /// Re-aggregate from i upward, stopping once nothing changes.
    fn bubble(&mut self, mut i: u32) {
        while i != NIL {
            if !self.pull(i) {
                return;
            }
            i = self.parent[i as usize];
        }
    }

    fn position(&self, i: u32) -> u32 {
        let mut pos = match self.left[i as usize] {
            NIL => 0,
            l => self.count(l),
        };
        let mut cur = i;
        loop {
            let p = self.parent[cur as usize];
            if p == NIL {
                return pos;
            }
            if self.right[p as usize] == cur {
                pos += 1 + match self.left[p as usize] {
                    NIL => 0,
                    l => self.count(l),
                };
            }
            cur = p;
        }
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.priority[a as usize] >= self.priority[b as usize] {
            let ar = self.right[a as usize];
            if ar != NIL {
                self.parent[ar as usize] = NIL;
            }
            let m = self.merge(ar, b);
            self.right[a as usize] = m;
            self.parent[m as usize] = a;
            self.pull(a);
            a
        } else {
            let bl = self.left[b as usize];
            if bl != NIL {
                self.parent[bl as usize] = NIL;
            }
            let m = self.merge(a, bl);
            self.left[b as usize] = m;
            self.parent[m as usize] = b;
            self.pull(b);
            b
        }
    }

    /// Split the sequence rooted at `root` into (first k nodes, rest).
    fn split(&mut self, root: u32, k: u32) -> (u32, u32) {
        if root == NIL {
            return (NIL, NIL);
        }
        let ix = root as usize;
        let lsize = match self.left[ix] {
            NIL => 0,
            l => self.count(l),
        };
        if k <= lsize {
            let l = self.left[ix];
            if l != NIL {
                self.parent[l as usize] = NIL;
            }
            self.left[ix] = NIL;
            let (a, b) = self.split(l, k);
            self.left[ix] = b;
            if b != NIL {
                self.parent[b as usize] = root;
            }
            self.pull(root);
            (a, root)
        } else {
            let r = self.right[ix];
            if r != NIL {
                self.parent[r as usize] = NIL;
            }
            self.right[ix] = NIL;
            let (a, b) = self.split(r, k - lsize - 1);
            self.right[ix] = a;
            if a != NIL {
                self.parent[a as usize] = root;
            }
            self.pull(root);
            (root, b)
        }
    }

    /// Rotate the circular tour so that node i becomes the sequence head.
    fn rotate_to_front(&mut self, i: u32) -> u32 {
        let root = self.root_of(i);
        let pos = self.position(i);
        if pos == 0 {
            return root;
        }
        let (a, b) = self.split(root, pos);
        self.merge(b, a)
    }

    fn find_flagged(&self, root: u32, own_bit: u8, sub_bit: u8) -> Option<u32> {
        if root == NIL || !self.has_flag(root, sub_bit) {
            return None;
        }
        let mut i = root;
        loop {
            if self.has_flag(i, own_bit) {
                return Some(i);
            }
            let l = self.left[i as usize];
            if l != NIL && self.has_flag(l, sub_bit) {
                i = l;
                continue;
            }
            let r = self.right[i as usize];
            if r != NIL && self.has_flag(r, sub_bit) {
                i = r;
                continue;
            }
            unreachable!("aggregate flag set but no flagged node");
        }
    }

    fn find_exact_tree(&self, root: u32) -> Option<u32> {
        self.find_flagged(root, F_EXACT, F_SUB_EXACT)
    }

    fn find_nontree(&self, root: u32) -> Option<u32> {
        self.find_flagged(root, F_NONTREE, F_SUB_NONTREE)
    }
}

/// Edge record in a recycled slot arena: endpoints, level, tree flag, and
/// the arc-node pair per level (NIL when absent).
struct EdgeSlot {
    u: u32,
    v: u32,
    level: u8,
    is_tree: bool,
    arcs: Vec<(u32, u32)>,
}

pub struct HdtConnectivity {
    n: usize,
    levels: usize,
    t: Treap,
    /// vertex node ids: vert_node[level * n + v]
    vert_node: Vec<u32>,
    /// per-level non-tree incidences: nontree[level * n + v] holds
    /// (slot, other endpoint) pairs
    nontree: Vec<std::collections::BTreeSet<(u32, u32)>>,
    /// normalized endpoints -> slot index
    by_key: std::collections::HashMap<(u32, u32), u32>,
    slots: Vec<EdgeSlot>,
    free_slots: Vec<u32>,
}

impl HdtConnectivity {
    pub fn new(n: usize) -> Self {
        let levels = (usize::BITS - n.max(2).leading_zeros()) as usize + 1;
        let mut t = Treap::new();
        let mut vert_node = vec![NIL; levels * n];
        for (i, cell) in vert_node.iter_mut().enumerate() {
            let v = i % n;
            *cell = t.alloc(true, v as u32);
        }
        HdtConnectivity {
            n,
            levels,
            t,
            vert_node,
            nontree: vec![Default::default(); levels * n],
            by_key: Default::default(),
            slots: Vec::new(),
            free_slots: Vec::new(),
        }
    }

    fn vnode(&self, level: usize, v: usize) -> u32 {
        self.vert_node[level * self.n + v]
    }

    fn alloc_slot(&mut self, u: u32, v: u32) -> u32 {
        if let Some(s) = self.free_slots.pop() {
            let slot = &mut self.slots[s as usize];
            slot.u = u;
            slot.v = v;
            slot.level = 0;
            slot.is_tree = false;
            slot.arcs.iter_mut().for_each(|a| *a = (NIL, NIL));
            s
        } else {
            self.slots.push(EdgeSlot {
                u,
                v,
                level: 0,
                is_tree: false,
                arcs: vec![(NIL, NIL); self.levels],
            });
            (self.slots.len() - 1) as u32
        }
    }

    fn ett_link(&mut self, level: usize, u: usize, v: usize, slot: u32, exact_here: bool) {
        let un = self.vnode(level, u);
        let vn = self.vnode(level, v);
        let tu = self.t.rotate_to_front(un);
        let tv = self.t.rotate_to_front(vn);
        debug_assert_ne!(tu, tv, "ett_link on already-connected endpoints");
        let auv = self.t.alloc(false, slot);
        let avu = self.t.alloc(false, slot);
        if exact_here {
            self.t.set_own_flag(auv, F_EXACT, true);
            self.t.pull(auv);
        }
        self.slots[slot as usize].arcs[level] = (auv, avu);
        let a = self.t.merge(tu, auv);
        let b = self.t.merge(a, tv);
        self.t.merge(b, avu);
    }

    fn ett_cut(&mut self, level: usize, slot: u32) {
        let (auv, avu) =
            std::mem::replace(&mut self.slots[slot as usize].arcs[level], (NIL, NIL));
        debug_assert_ne!(auv, NIL);
        let root = self.t.root_of(auv);
        let pa = self.t.position(auv);
        let pb = self.t.position(avu);
        let (p1, p2) = (pa.min(pb), pa.max(pb));
        let (x, rest) = self.t.split(root, p1);
        let (arc1, rest) = self.t.split(rest, 1);
        let (inner, rest) = self.t.split(rest, p2 - p1 - 1);
        let (arc2, z) = self.t.split(rest, 1);
        debug_assert_eq!(self.t.count(arc1), 1);
        debug_assert_eq!(self.t.count(arc2), 1);
        self.t.release(arc1);
        self.t.release(arc2);
        self.t.merge(x, z);
        let _ = inner; // the detached subtree is its own tour already
    }

    fn set_nontree_flag(&mut self, level: usize, v: usize) {
        let node = self.vnode(level, v);
        let has = !self.nontree[level * self.n + v].is_empty();
        if self.t.has_flag(node, F_NONTREE) != has {
            self.t.set_own_flag(node, F_NONTREE, has);
            self.t.bubble(node);
        }
    }

    fn set_exact_flag(&mut self, level: usize, slot: u32, on: bool) {
        let (auv, _) = self.slots[slot as usize].arcs[level];
        debug_assert_ne!(auv, NIL);
        if self.t.has_flag(auv, F_EXACT) != on {
            self.t.set_own_flag(auv, F_EXACT, on);
            self.t.bubble(auv);
        }
    }

    /// Search for a replacement edge after cutting a level-`level` tree edge;
    /// `probe` is any vertex inside the smaller of the two trees.
    fn replace(&mut self, level: usize, probe: usize) -> bool {
        let n = self.n;
        // the level forest is not restructured during the scan (pushes edit
        // the next level, raises only edit flags), so the root is stable
        let root = self.t.root_of(self.vnode(level, probe));
        // push the smaller tree's exact-level tree edges one level down
        loop {
            let Some(arc) = self.t.find_exact_tree(root) else { break };
            let slot = self.t.payload(arc);
            self.set_exact_flag(level, slot, false);
            let (u, v) = {
                let rec = &mut self.slots[slot as usize];
                debug_assert!(rec.is_tree && rec.level as usize == level);
                rec.level = (level + 1) as u8;
                (rec.u as usize, rec.v as usize)
            };
            debug_assert!(level + 1 < self.levels, "level overflow");
            self.ett_link(level + 1, u, v, slot, true);
        }
        // scan the smaller tree's level non-tree edges
        loop {
            let Some(vn) = self.t.find_nontree(root) else { break };
            let x = self.t.payload(vn) as usize;
            let Some(&(slot, y32)) = self.nontree[level * n + x].iter().next() else {
                self.set_nontree_flag(level, x);
                continue;
            };
            let y = y32 as usize;
            let same_side = self.t.root_of(self.vnode(level, y)) == root;
            self.nontree[level * n + x].remove(&(slot, y32));
            self.nontree[level * n + y].remove(&(slot, x as u32));
            self.set_nontree_flag(level, x);
            self.set_nontree_flag(level, y);
            if same_side {
                debug_assert!(level + 1 < self.levels, "level overflow");
                self.nontree[(level + 1) * n + x].insert((slot, y32));
                self.nontree[(level + 1) * n + y].insert((slot, x as u32));
                self.set_nontree_flag(level + 1, x);
                self.set_nontree_flag(level + 1, y);
                self.slots[slot as usize].level = (level + 1) as u8;
            } else {
                // replacement: promote to a tree edge at this level
                self.slots[slot as usize].is_tree = true;
                for l in (0..=level).rev() {
                    self.ett_link(l, x, y, slot, l == level);
                }
                return true;
            }
        }
        false
    }
}

impl ConnectivityEngine for HdtConnectivity {
    fn n(&self) -> usize {
        self.n
    }

    fn insert_edge(&mut self, u: usize, v: usize) -> Result<(), ConnectivityError> {
        let k = key(u, v);
        if self.by_key.contains_key(&k) {
            return Err(ConnectivityError::DuplicateInsert(u, v));
        }
        let slot = self.alloc_slot(k.0, k.1);
        self.by_key.insert(k, slot);
        let is_tree = self.t.root_of(self.vnode(0, u)) != self.t.root_of(self.vnode(0, v));
        self.slots[slot as usize].is_tree = is_tree;
        if is_tree {
            self.ett_link(0, u, v, slot, true);
        } else {
            self.nontree[u].insert((slot, v as u32)); // level-0 row offset is 0
            self.nontree[v].insert((slot, u as u32));
            self.set_nontree_flag(0, u);
            self.set_nontree_flag(0, v);
        }
        Ok(())
    }

    fn delete_edge(&mut self, u: usize, v: usize) -> Result<(), ConnectivityError> {
        let k = key(u, v);
        let Some(slot) = self.by_key.remove(&k) else {
            return Err(ConnectivityError::MissingEdge(u, v));
        };
        let (level, is_tree) = {
            let rec = &self.slots[slot as usize];
            (rec.level as usize, rec.is_tree)
        };
        if !is_tree {
            self.nontree[level * self.n + u].remove(&(slot, v as u32));
            self.nontree[level * self.n + v].remove(&(slot, u as u32));
            self.set_nontree_flag(level, u);
            self.set_nontree_flag(level, v);
            self.free_slots.push(slot);
            return Ok(());
        }
        for l in (0..=level).rev() {
            self.ett_cut(l, slot);
        }
        self.free_slots.push(slot);
        for l in (0..=level).rev() {
            // pick the smaller of the two separated trees at this level
            let (ru, rv) = (
                self.t.root_of(self.vnode(l, u)),
                self.t.root_of(self.vnode(l, v)),
            );
            debug_assert_ne!(ru, rv);
            let probe = if self.t.vcount(ru) <= self.t.vcount(rv) { u } else { v };
            if self.replace(l, probe) {
                break;
            }
        }
        Ok(())
    }

    fn contains_edge(&self, u: usize, v: usize) -> bool {
        self.by_key.contains_key(&key(u, v))
    }

    fn is_forest_edge(&self, u: usize, v: usize) -> Option<bool> {
        self.by_key.get(&key(u, v)).map(|&slot| self.slots[slot as usize].is_tree)
    }

    fn connected(&mut self, u: usize, v: usize) -> bool {
        if u == v {
            return true;
        }
        self.t.root_of(self.vnode(0, u)) == self.t.root_of(self.vnode(0, v))
    }

    fn component_size(&mut self, v: usize) -> usize {
        let root = self.t.root_of(self.vnode(0, v));
        self.t.vcount(root) as usize
    }
}
