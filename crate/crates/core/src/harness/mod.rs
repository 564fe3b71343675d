//! Testing machinery: exhaustive exploration, a brute-force oracle for the
//! matching of interaction sets, the bounded operational-correspondence
//! checker, a random program generator and the fixture corpus.

pub mod correspondence;
pub mod explore;
pub mod fixtures;
pub mod generator;
pub mod oracle;

pub use correspondence::{check_correspondence, check_correspondence_with, swap_ports, CorrespondenceReport};
pub use explore::{explore, reachability_graph, ExploreReport, Graph};
pub use oracle::oracle_eta_reductions;

use crate::model::{ConstraintAutomaton, Name};
use crate::textio::parse_automata;

/// Source of the standard automata (also shipped as `fixtures/library.ca`).
pub const LIBRARY: &str = include_str!("../../../../fixtures/library.ca");

/// The standard automata: Sync, Async1, Async2, SyncMulti2, SyncMulti3,
/// Async1Multi2 and Barrier.
pub fn library() -> Vec<(Name, ConstraintAutomaton)> {
    parse_automata(LIBRARY).expect("library automata parse")
}

pub fn library_automaton(name: &str) -> ConstraintAutomaton {
    library()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, a)| a)
        .unwrap_or_else(|| panic!("no library automaton {name}"))
}
