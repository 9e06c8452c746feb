//! Capacity of q-ary ICI-free constrained systems under composition
//! constraints.
//!
//! Three independent routes compute the same number: an analytic solution
//! ([`closedform`]), a convex dual over symbol tilts ([`dual`]), and direct
//! maximization of the edge entropy ([`oracle::direct_optimize_311`]). Exact
//! word counting in [`oracle`] ties all of them to finite-length rates.

pub mod closedform;
pub mod dual;
pub mod error;
pub mod graphs;
pub mod markov;
pub mod oracle;
pub mod spectral;

pub use closedform::{cap_311, cap_qab, ordinary_capacity, Witness311, WitnessCase};
pub use dual::{capacity_composition, solve_dual, CapacityResult, DualProblem, Route};
pub use error::{Error, Result};
pub use graphs::{
    build_from_forbidden, build_ici_graph, Alphabet, LabeledGraph, Symbol, SymbolClass, WeightSpec,
};
pub use markov::{ClassMasses, CompositionVector, MarkovChain};
pub use oracle::{
    check_size, count_words, direct_optimize_311, rate_curve, CountResult, CountWindow, WindowMode,
};
