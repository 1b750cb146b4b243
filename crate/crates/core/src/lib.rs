//! Random-cluster model simulation laboratory.
//!
//! The crate bundles everything needed to run and cross-check random-cluster
//! (FK) Glauber dynamics on small and medium graphs:
//!
//! - [`graph`]: immutable multigraphs, random regular generation, balls,
//!   BFS decompositions and expansion diagnostics;
//! - [`model`]: model parameters, edge configurations, phases and weights;
//! - [`connectivity`]: fully-dynamic connectivity engines answering the
//!   cut-edge query inside every chain step;
//! - [`dynamics`]: the Glauber chain, boundary-conditioned local chains,
//!   monotone couplings and mixing diagnostics;
//! - [`polymers`]: ordered/disordered polymer extraction and the weight
//!   factorization identities;
//! - [`coupling`]: weak-spatial-mixing checks and the revealing-coupling
//!   processes, instrumented with runtime invariants;
//! - [`oracle`]: brute-force exact distributions, transition matrices and
//!   Potts sums on small instances — the ground truth for everything else.

pub mod connectivity;
pub mod coupling;
pub mod dynamics;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod polymers;
