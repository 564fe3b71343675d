//! Bounded check that a choreography and its projection move in lockstep.
//!
//! Pairs `(chor configuration, network configuration)` are explored
//! breadth-first. At each pair:
//!
//! * completeness: every choreography step has a network step ending in a
//!   network that the projection of the new choreography prunes, with the
//!   same automaton states;
//! * soundness: every network step has such a choreography step.
//!
//! The matched pairs are explored further.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::chor_engine::{self, Configuration};
use crate::cp_engine::{self, pruning_leq, CpConfig};
use crate::epp::{project_connectors, project_network, EppError};
use crate::model::{ChorState, Choreography, ConnectorMapping, Name};
use crate::textio::print_choreography_inline;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapKind {
    Completeness,
    Soundness,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gap {
    pub kind: GapKind,
    pub depth: usize,
    pub choreography: String,
    pub step: String,
}

impl fmt::Display for Gap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            GapKind::Completeness => "choreography step without network step",
            GapKind::Soundness => "network step without choreography step",
        };
        write!(f, "{what} at depth {}: {} in {}", self.depth, self.step, self.choreography)
    }
}

#[derive(Clone, Debug, Default)]
pub struct CorrespondenceReport {
    pub pairs: usize,
    pub gaps: Vec<Gap>,
    pub truncated: bool,
}

impl CorrespondenceReport {
    pub fn completeness_gaps(&self) -> usize {
        self.gaps.iter().filter(|g| g.kind == GapKind::Completeness).count()
    }

    pub fn soundness_gaps(&self) -> usize {
        self.gaps.iter().filter(|g| g.kind == GapKind::Soundness).count()
    }
}

pub fn check_correspondence(
    c: &Choreography,
    sigma: &ChorState,
    g: &ConnectorMapping,
    bound: usize,
) -> Result<CorrespondenceReport, EppError> {
    check_correspondence_with(c, sigma, g, &project_connectors(g), bound)
}

/// Like [`check_correspondence`] with the network running on `cp_g` instead
/// of the projected connectors.
pub fn check_correspondence_with(
    c: &Choreography,
    sigma: &ChorState,
    g: &ConnectorMapping,
    cp_g: &ConnectorMapping,
    bound: usize,
) -> Result<CorrespondenceReport, EppError> {
    let chor0 = Configuration::initial(c, sigma, g);
    let cp0 = CpConfig::initial(&project_network(&chor0.chor, sigma)?, cp_g);
    let mut report = CorrespondenceReport::default();
    let mut seen: BTreeSet<(Configuration, CpConfig)> = BTreeSet::new();
    let mut queue = VecDeque::from([(chor0, cp0, 0usize)]);
    // Projections are cached per choreography configuration.
    let mut projections: BTreeMap<Configuration, Option<cp_engine::Network>> = BTreeMap::new();

    while let Some((chor, cp, depth)) = queue.pop_front() {
        if !seen.insert((chor.clone(), cp.clone())) {
            continue;
        }
        report.pairs += 1;
        let chor_steps = chor_engine::reductions(&chor, g);
        let cp_steps = cp_engine::reductions(&cp, cp_g);
        if depth >= bound {
            report.truncated |= !chor_steps.is_empty() || !cp_steps.is_empty();
            continue;
        }
        let mut matches = |next: &Configuration, n: &CpConfig| -> bool {
            let proj = projections
                .entry(next.clone())
                .or_insert_with(|| project_network(&next.chor, &next.sigma).ok());
            match proj {
                Some(p) => next.autos == n.autos && pruning_leq(p, &n.network),
                None => false,
            }
        };
        let mut successors = Vec::new();
        let text = || print_choreography_inline(&chor.chor);
        for r in &chor_steps {
            match cp_steps.iter().find(|(_, n)| matches(&r.next, n)) {
                Some((_, n)) => successors.push((r.next.clone(), n.clone())),
                None => report.gaps.push(Gap {
                    kind: GapKind::Completeness,
                    depth,
                    choreography: text(),
                    step: r.kind.to_string(),
                }),
            }
        }
        for (step, n) in &cp_steps {
            match chor_steps.iter().find(|r| matches(&r.next, n)) {
                Some(r) => successors.push((r.next.clone(), n.clone())),
                None => report.gaps.push(Gap {
                    kind: GapKind::Soundness,
                    depth,
                    choreography: text(),
                    step: step.to_string(),
                }),
            }
        }
        for (a, b) in successors {
            queue.push_back((a, b, depth + 1));
        }
    }
    Ok(report)
}

/// Exchanges two ports in the automaton of `connector`. Used to check that
/// the correspondence checker notices broken connectors.
pub fn swap_ports(g: &ConnectorMapping, connector: &str, a: &str, b: &str) -> ConnectorMapping {
    let mut out = g.clone();
    if let Some(aut) = out.get_mut(connector) {
        let rename: BTreeMap<Name, Name> = [(a.to_owned(), b.to_owned()), (b.to_owned(), a.to_owned())].into();
        *aut = aut.rename_ports(&rename);
    }
    out
}
