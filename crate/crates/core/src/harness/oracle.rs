//! Brute-force reference for matching an interaction set against labels.
//!
//! Written independently of the matcher: a step is built from small atoms
//! applied one after another, and the label is whatever flows the atoms
//! used. Atoms are
//!
//! * a sender `p` firing all of its interactions, completing those towards a
//!   chosen subset of its receivers and writing its value into one chosen
//!   cell per receiver left waiting,
//! * a runtime receive taking its value out of a cell,
//! * a cell-to-cell copy.
//!
//! Atoms chain through the store and the memory. A sequence is kept only if
//! no atom reads a cell written by an earlier one, so every read sees the
//! memory from before the step.

use std::collections::{BTreeMap, BTreeSet};

use crate::chor_engine::eval_expr;
use crate::model::{ChorState, Constraint, EtaSet, Flow, Interaction, MemorySnapshot, Name, Value};

/// One step result: `(label, residual, store, memory)`.
pub type OracleStep = (Constraint, EtaSet, ChorState, MemorySnapshot);

#[derive(Clone, Debug)]
enum Atom {
    Send {
        sender: Name,
        sync: BTreeSet<Name>,
        cells: BTreeSet<Name>,
    },
    Recv {
        term: Interaction,
        cell: Name,
    },
    Copy {
        from: Name,
        to: Name,
    },
}

impl Atom {
    fn flows(&self) -> Vec<Flow> {
        match self {
            Atom::Send { sender, sync, cells } => sync
                .iter()
                .map(|q| Flow::ports(sender, q))
                .chain(cells.iter().map(|m| Flow::to_mem(sender, m)))
                .collect(),
            Atom::Recv { term, cell } => vec![Flow::from_mem(cell, term.receiver())],
            Atom::Copy { from, to } => vec![Flow::mem_to_mem(from, to)],
        }
    }

    fn reads(&self) -> BTreeSet<&str> {
        match self {
            Atom::Send { .. } => BTreeSet::new(),
            Atom::Recv { cell, .. } => [cell.as_str()].into(),
            Atom::Copy { from, .. } => [from.as_str()].into(),
        }
    }

    fn writes(&self) -> BTreeSet<&str> {
        match self {
            Atom::Send { cells, .. } => cells.iter().map(|m| m.as_str()).collect(),
            Atom::Recv { .. } => BTreeSet::new(),
            Atom::Copy { to, .. } => [to.as_str()].into(),
        }
    }

    /// Applies the atom, or `None` when its premise fails.
    fn apply(&self, etas: &EtaSet, st: &State) -> Option<State> {
        let mut next = st.clone();
        match self {
            Atom::Send { sender, sync, cells } => {
                let group: Vec<&Interaction> =
                    etas.iter().filter(|e| e.sender() == Some(sender.as_str())).collect();
                let value = match group[0] {
                    Interaction::Com { expr, .. } => eval_expr(expr, &st.sigma, sender).ok()?,
                    Interaction::Sel { label, .. } => Value::Label(label.clone()),
                    _ => return None,
                };
                for eta in group {
                    next.residual.remove(eta);
                    let q = eta.receiver();
                    match eta {
                        Interaction::Com { var, .. } if sync.contains(q) => next.sigma.set(q, var, value.clone()),
                        Interaction::Sel { .. } if sync.contains(q) => {}
                        Interaction::Com { var, .. } => {
                            next.residual.insert(Interaction::RecvVal {
                                receiver: q.into(),
                                var: var.clone(),
                                value: value.clone(),
                            });
                        }
                        Interaction::Sel { label, .. } => {
                            next.residual.insert(Interaction::RecvSel {
                                receiver: q.into(),
                                label: label.clone(),
                            });
                        }
                        _ => return None,
                    }
                }
                for m in cells {
                    next.mem.insert(m.clone(), value.clone());
                }
            }
            Atom::Recv { term, cell } => {
                let held = st.mem.get(cell)?;
                match term {
                    Interaction::RecvVal { receiver, var, value } if held == value => {
                        next.sigma.set(receiver, var, value.clone());
                    }
                    Interaction::RecvSel { label, .. } if *held == Value::Label(label.clone()) => {}
                    _ => return None,
                }
                next.residual.remove(term);
            }
            Atom::Copy { from, to } => {
                let v = st.mem.get(from)?;
                if v.is_bottom() {
                    return None;
                }
                next.mem.insert(to.clone(), v.clone());
            }
        }
        Some(next)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct State {
    residual: EtaSet,
    sigma: ChorState,
    mem: MemorySnapshot,
}

fn subsets<T: Clone + Ord>(items: &[T]) -> Vec<BTreeSet<T>> {
    (0..1u32 << items.len())
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, x)| x.clone())
                .collect()
        })
        .collect()
}

fn atoms(etas: &EtaSet, cells: &[Name]) -> Vec<(Atom, Name)> {
    // Each atom comes with a key; atoms sharing a key exclude each other.
    let mut out = Vec::new();
    let senders: BTreeSet<&str> = etas.iter().filter_map(|e| e.sender()).collect();
    for p in senders {
        let receivers: Vec<Name> = etas
            .iter()
            .filter(|e| e.sender() == Some(p))
            .map(|e| e.receiver().to_owned())
            .collect();
        for sync in subsets(&receivers) {
            // every waiting receiver picks the cell its value goes through
            let waiting = receivers.len() - sync.len();
            if waiting > 0 && cells.is_empty() {
                continue;
            }
            let mut choices: BTreeSet<BTreeSet<Name>> = BTreeSet::new();
            for pick in 0..cells.len().pow(waiting as u32) {
                let mut written = BTreeSet::new();
                let mut rest = pick;
                for _ in 0..waiting {
                    written.insert(cells[rest % cells.len()].clone());
                    rest /= cells.len();
                }
                choices.insert(written);
            }
            for written in choices {
                out.push((
                    Atom::Send {
                        sender: p.into(),
                        sync: sync.clone(),
                        cells: written,
                    },
                    format!("send {p}"),
                ));
            }
        }
    }
    for term in etas.iter().filter(|e| e.is_runtime()) {
        for m in cells {
            out.push((
                Atom::Recv {
                    term: term.clone(),
                    cell: m.clone(),
                },
                format!("recv {term:?}"),
            ));
        }
    }
    for from in cells {
        for to in cells {
            out.push((
                Atom::Copy {
                    from: from.clone(),
                    to: to.clone(),
                },
                format!("copy {from} {to}"),
            ));
        }
    }
    out
}

/// Every step `etas` can take in store `sigma` and memory `mu`, over all
/// labels built from the processes of `etas` and the cells of `mu`.
pub fn oracle_eta_reductions(etas: &EtaSet, sigma: &ChorState, mu: &MemorySnapshot) -> BTreeSet<OracleStep> {
    let cells: Vec<Name> = mu.keys().cloned().collect();
    let atoms = atoms(etas, &cells);
    let start = State {
        residual: etas.clone(),
        sigma: sigma.clone(),
        mem: mu.clone(),
    };
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::new();
    search(etas, &atoms, 0, &start, &BTreeMap::new(), &BTreeSet::new(), &BTreeSet::new(), &mut seen, &mut out);
    out
}

/// Depth-first search over atom sequences. `flows` maps each target to its
/// source, `written` holds the cells written so far and `used` the keys of
/// applied atoms.
#[allow(clippy::too_many_arguments)]
fn search(
    etas: &EtaSet,
    atoms: &[(Atom, Name)],
    depth: usize,
    st: &State,
    flows: &BTreeMap<Name, Flow>,
    written: &BTreeSet<Name>,
    used: &BTreeSet<&str>,
    seen: &mut BTreeSet<(State, Vec<Flow>, BTreeSet<Name>, Vec<String>)>,
    out: &mut BTreeSet<OracleStep>,
) {
    let key = (
        st.clone(),
        flows.values().cloned().collect::<Vec<_>>(),
        written.clone(),
        used.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
    );
    if !seen.insert(key) {
        return;
    }
    if depth > 0 {
        let label = Constraint::new(flows.values().cloned()).expect("targets are distinct");
        out.insert((label, st.residual.clone(), st.sigma.clone(), st.mem.clone()));
    }
    for (atom, k) in atoms {
        if used.contains(k.as_str()) || atom.reads().iter().any(|m| written.contains(*m)) {
            continue;
        }
        let mut fl = flows.clone();
        let mut ok = true;
        for f in atom.flows() {
            let target = f.target.name().to_owned();
            if fl.insert(target, f).is_some() {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let Some(next) = atom.apply(etas, st) else {
            continue;
        };
        let mut w = written.clone();
        w.extend(atom.writes().into_iter().map(str::to_owned));
        let mut u = used.clone();
        u.insert(k.as_str());
        search(etas, atoms, depth + 1, &next, &fl, &w, &u, seen, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Expr;

    #[test]
    fn single_com_has_a_sync_and_an_async_step() {
        let etas: EtaSet = [Interaction::com("p", Expr::var("x"), "q", "y")].into();
        let sigma = ChorState::new().with("p", "x", Value::Int(1));
        let mu: MemorySnapshot = [("m".to_string(), Value::Bottom)].into();
        let steps = oracle_eta_reductions(&etas, &sigma, &mu);
        let labels: BTreeSet<String> = steps.iter().map(|s| s.0.to_string()).collect();
        assert!(labels.contains("p > q"), "{labels:?}");
        assert!(labels.contains("p > m"), "{labels:?}");
        // a copy of an empty cell never happens
        assert!(!labels.iter().any(|l| l.contains("m > m")));
    }
}
