//! Matching an interaction set against one transition label.
//!
//! Shared by the concrete engine (values come from evaluating expressions)
//! and the compatibility checker (every send becomes a fresh token). The
//! caller supplies how a sender's expression turns into a value.
//!
//! Granularity: every sender with a port flow in the label fires all of its
//! pending interactions at once. A receiver `q` with `p > q` in the label
//! completes synchronously; the other receivers of `p` are left as runtime
//! receives, which requires `p` to write at least one cell and at most one
//! per waiting receiver.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::model::{Constraint, Endpoint, EtaSet, Expr, Interaction, MemorySnapshot, Name, Value};

/// Why a label does not match.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MatchFailure {
    /// The label mentions a process with no suitable pending interaction,
    /// or a sender would leave a receiver unserved.
    Ports(String),
    /// A cell is empty or holds something other than what a pending
    /// receive expects.
    Value(String),
    /// No order of the flows reads every cell before writing it.
    Order,
    /// A sent expression failed to evaluate.
    Eval(String),
}

impl fmt::Display for MatchFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchFailure::Ports(why) => write!(f, "ports: {why}"),
            MatchFailure::Value(why) => write!(f, "value: {why}"),
            MatchFailure::Order => f.write_str("cells cannot be read before they are written"),
            MatchFailure::Eval(why) => write!(f, "evaluation: {why}"),
        }
    }
}

/// Result of a successful match.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchEffect {
    /// Interactions left over, including newly created runtime receives.
    pub residual: EtaSet,
    pub mem: MemorySnapshot,
    /// Variable updates `(process, var, value)` from completed receives.
    pub writes: Vec<(Name, Name, Value)>,
    /// Interactions consumed by the step (as they were before it).
    pub fired: Vec<Interaction>,
}

/// Matches `etas` against `phi` in memory `mu`. `eval(p, e)` produces the
/// value sent by `p`; it is called once per sender.
pub(crate) fn match_label(
    etas: &EtaSet,
    phi: &Constraint,
    mu: &MemorySnapshot,
    eval: &mut dyn FnMut(&str, &Expr) -> Result<Value, String>,
) -> Result<MatchEffect, MatchFailure> {
    if phi.is_empty() {
        return Err(MatchFailure::Ports("empty label".into()));
    }

    // Per sender: synchronous targets and written cells.
    let mut sync: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut cells: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut from_mem: Vec<(&str, &str)> = Vec::new();
    let mut mem_mem: Vec<(&str, &str)> = Vec::new();
    for flow in phi.flows() {
        match (&flow.source, &flow.target) {
            (Endpoint::Port(p), Endpoint::Port(q)) => {
                sync.entry(p).or_default().insert(q);
                cells.entry(p).or_default();
            }
            (Endpoint::Port(p), Endpoint::Mem(m)) => {
                cells.entry(p).or_default().insert(m);
                sync.entry(p).or_default();
            }
            (Endpoint::Mem(m), Endpoint::Port(q)) => from_mem.push((m, q)),
            (Endpoint::Mem(m1), Endpoint::Mem(m2)) => mem_mem.push((m1, m2)),
        }
    }

    let mut residual = etas.clone();
    let mut new_mem = mu.clone();
    let mut writes = Vec::new();
    let mut fired = Vec::new();
    let mut runtime_new = Vec::new();

    // Atoms for the read-before-write check: (reads, writes).
    let mut atoms: Vec<(BTreeSet<&str>, BTreeSet<&str>)> = Vec::new();

    for (p, targets) in &sync {
        let group: Vec<&Interaction> = etas.iter().filter(|eta| eta.sender() == Some(*p)).collect();
        let Some(first) = group.first() else {
            return Err(MatchFailure::Ports(format!("{p} has no pending send")));
        };
        let written = &cells[p];
        let value = match first {
            Interaction::Com { expr, .. } => eval(p, expr).map_err(MatchFailure::Eval)?,
            Interaction::Sel { label, .. } => Value::Label(label.clone()),
            _ => unreachable!("runtime terms have no sender"),
        };
        for q in targets {
            if !group.iter().any(|eta| eta.receiver() == *q) {
                return Err(MatchFailure::Ports(format!("{p} sends nothing to {q}")));
            }
        }
        // Each receiver left waiting takes its value from one cell.
        let waiting = group.iter().filter(|eta| !targets.contains(eta.receiver())).count();
        if written.len() > waiting {
            return Err(MatchFailure::Ports(format!(
                "{p} writes {} cells for {waiting} waiting receivers",
                written.len()
            )));
        }
        for eta in &group {
            residual.remove(*eta);
            fired.push((*eta).clone());
            let q = eta.receiver();
            let synchronous = targets.contains(q);
            if !synchronous && written.is_empty() {
                return Err(MatchFailure::Ports(format!("{p} cannot deliver to {q}")));
            }
            match eta {
                Interaction::Com { receiver, var, .. } => {
                    if synchronous {
                        writes.push((receiver.clone(), var.clone(), value.clone()));
                    } else {
                        runtime_new.push(Interaction::RecvVal {
                            receiver: receiver.clone(),
                            var: var.clone(),
                            value: value.clone(),
                        });
                    }
                }
                Interaction::Sel { receiver, label, .. } => {
                    if !synchronous {
                        runtime_new.push(Interaction::RecvSel {
                            receiver: receiver.clone(),
                            label: label.clone(),
                        });
                    }
                }
                _ => unreachable!(),
            }
        }
        for m in written {
            new_mem.insert((*m).to_owned(), value.clone());
        }
        atoms.push((BTreeSet::new(), written.iter().copied().collect()));
    }

    for (m, q) in &from_mem {
        let Some(eta) = etas.iter().find(|eta| eta.receiver() == *q) else {
            return Err(MatchFailure::Ports(format!("{q} has nothing to receive")));
        };
        let stored = mu.get(*m).cloned().unwrap_or(Value::Bottom);
        if stored.is_bottom() {
            return Err(MatchFailure::Value(format!("cell {m} is empty")));
        }
        match eta {
            Interaction::RecvVal { receiver, var, value } => {
                if stored != *value {
                    return Err(MatchFailure::Value(format!("{q} expects {value} but {m} holds {stored}")));
                }
                writes.push((receiver.clone(), var.clone(), value.clone()));
            }
            Interaction::RecvSel { label, .. } => {
                let expected = Value::Label(label.clone());
                if stored != expected {
                    return Err(MatchFailure::Value(format!("{q} expects {expected} but {m} holds {stored}")));
                }
            }
            _ => {
                return Err(MatchFailure::Ports(format!(
                    "{q} reads from {m} while its sender has not sent yet"
                )))
            }
        }
        residual.remove(eta);
        fired.push(eta.clone());
        atoms.push(([*m].into(), BTreeSet::new()));
    }

    for (m1, m2) in &mem_mem {
        let stored = mu.get(*m1).cloned().unwrap_or(Value::Bottom);
        if stored.is_bottom() {
            return Err(MatchFailure::Value(format!("cell {m1} is empty")));
        }
        new_mem.insert((*m2).to_owned(), stored);
        atoms.push(([*m1].into(), [*m2].into()));
    }

    if !reads_before_writes(&atoms) {
        return Err(MatchFailure::Order);
    }

    residual.extend(runtime_new);
    Ok(MatchEffect {
        residual,
        mem: new_mem,
        writes,
        fired,
    })
}

/// Whether the atoms can be ordered so that every reader of a cell comes
/// before the (other) atom writing it.
pub(crate) fn reads_before_writes(atoms: &[(BTreeSet<&str>, BTreeSet<&str>)]) -> bool {
    let n = atoms.len();
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for (i, (reads, _)) in atoms.iter().enumerate() {
        for (j, (_, writes)) in atoms.iter().enumerate() {
            if i != j && !reads.is_disjoint(writes) {
                succ[i].push(j);
                indeg[j] += 1;
            }
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = ready.pop() {
        seen += 1;
        for &j in &succ[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.push(j);
            }
        }
    }
    seen == n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Flow;

    fn lookup<'a>(store: &'a [(&'a str, &'a str, Value)]) -> impl FnMut(&str, &Expr) -> Result<Value, String> + 'a {
        move |p, e| match e {
            Expr::Var(x) => store
                .iter()
                .find(|(q, y, _)| *q == p && y == x)
                .map(|(_, _, v)| v.clone())
                .ok_or_else(|| format!("{p}.{x} unbound")),
            Expr::Const(v) => Ok(v.clone()),
            _ => Err("unsupported".into()),
        }
    }

    fn com(p: &str, x: &str, q: &str) -> Interaction {
        Interaction::com(p, Expr::var(x), q, x)
    }

    fn phi(flows: Vec<Flow>) -> Constraint {
        Constraint::new(flows).unwrap()
    }

    #[test]
    fn sync_completes() {
        let store = [("a", "x", Value::Int(3))];
        let etas: EtaSet = [com("a", "x", "b")].into();
        let eff = match_label(&etas, &phi(vec![Flow::ports("a", "b")]), &MemorySnapshot::new(), &mut lookup(&store)).unwrap();
        assert!(eff.residual.is_empty());
        assert_eq!(eff.writes, vec![("b".into(), "x".into(), Value::Int(3))]);
    }

    #[test]
    fn send_into_cell_leaves_runtime_receive() {
        let store = [("a", "x", Value::Int(3))];
        let etas: EtaSet = [com("a", "x", "b")].into();
        let mu: MemorySnapshot = [("m".to_string(), Value::Bottom)].into();
        let eff = match_label(&etas, &phi(vec![Flow::to_mem("a", "m")]), &mu, &mut lookup(&store)).unwrap();
        assert_eq!(
            eff.residual,
            [Interaction::RecvVal {
                receiver: "b".into(),
                var: "x".into(),
                value: Value::Int(3)
            }]
            .into()
        );
        assert_eq!(eff.mem["m"], Value::Int(3));
    }

    #[test]
    fn receive_checks_value() {
        let etas: EtaSet = [Interaction::RecvVal {
            receiver: "b".into(),
            var: "x".into(),
            value: Value::Int(3),
        }]
        .into();
        let full: MemorySnapshot = [("m".to_string(), Value::Int(3))].into();
        let wrong: MemorySnapshot = [("m".to_string(), Value::Int(4))].into();
        let empty: MemorySnapshot = [("m".to_string(), Value::Bottom)].into();
        let label = phi(vec![Flow::from_mem("m", "b")]);
        assert!(match_label(&etas, &label, &full, &mut lookup(&[])).is_ok());
        assert!(matches!(match_label(&etas, &label, &wrong, &mut lookup(&[])), Err(MatchFailure::Value(_))));
        assert!(matches!(match_label(&etas, &label, &empty, &mut lookup(&[])), Err(MatchFailure::Value(_))));
    }

    #[test]
    fn barrier_needs_both_pairs() {
        let store = [("a", "money", Value::Int(1)), ("c", "book", Value::Int(2))];
        let both: EtaSet = [com("a", "money", "b"), com("c", "book", "s")].into();
        let label = phi(vec![Flow::ports("a", "b"), Flow::ports("c", "s")]);
        assert!(match_label(&both, &label, &MemorySnapshot::new(), &mut lookup(&store)).is_ok());
        let half: EtaSet = [com("a", "money", "b")].into();
        assert!(matches!(
            match_label(&half, &label, &MemorySnapshot::new(), &mut lookup(&store)),
            Err(MatchFailure::Ports(_))
        ));
    }

    #[test]
    fn partial_multicast_without_cells_fails() {
        let etas: EtaSet = [Interaction::sel("a", "b", "ok"), Interaction::sel("a", "c", "ok")].into();
        let label = phi(vec![Flow::ports("a", "b")]);
        assert!(matches!(
            match_label(&etas, &label, &MemorySnapshot::new(), &mut lookup(&[])),
            Err(MatchFailure::Ports(_))
        ));
    }

    #[test]
    fn read_and_write_same_cell_in_cycle_fails() {
        // m1 > m2 and m2 > m1 would need each read before the other write.
        let mu: MemorySnapshot = [("m1".to_string(), Value::Int(1)), ("m2".to_string(), Value::Int(2))].into();
        let label = phi(vec![Flow::mem_to_mem("m1", "m2"), Flow::mem_to_mem("m2", "m1")]);
        assert_eq!(match_label(&EtaSet::new(), &label, &mu, &mut lookup(&[])), Err(MatchFailure::Order));
        let shift = phi(vec![Flow::mem_to_mem("m2", "m1")]);
        let eff = match_label(&EtaSet::new(), &shift, &mu, &mut lookup(&[])).unwrap();
        assert_eq!(eff.mem["m1"], Value::Int(2));
    }

    #[test]
    fn reads_see_the_old_value() {
        // Receive from m1 while m2 is shifted into m1 in the same step.
        let mu: MemorySnapshot = [("m1".to_string(), Value::Int(1)), ("m2".to_string(), Value::Int(2))].into();
        let etas: EtaSet = [Interaction::RecvVal {
            receiver: "q".into(),
            var: "x".into(),
            value: Value::Int(1),
        }]
        .into();
        let label = phi(vec![Flow::from_mem("m1", "q"), Flow::mem_to_mem("m2", "m1")]);
        let eff = match_label(&etas, &label, &mu, &mut lookup(&[])).unwrap();
        assert_eq!(eff.mem["m1"], Value::Int(2));
        assert_eq!(eff.writes, vec![("q".into(), "x".into(), Value::Int(1))]);
    }
}
