//! Static compatibility check between a choreography and its connectors.
//!
//! Values are abstracted away: every send stores a fresh token, and a
//! pending receive only matches a cell holding the very token it waits for.
//! A worklist of judgements `A ⊢ C` is processed until it is empty (the
//! answer is yes) or a prefix at the head cannot move through its connector
//! (the answer is no). Compatibility implies deadlock freedom when every
//! automaton is confluent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::chor_engine::{block_edits, exposures, rewrite, union_of, Exposed, Location};
use crate::matching::match_label;
use crate::model::{
    initial_states, AutState, AutomatonStateMap, Choreography, ConnectorMapping, ConstraintAutomaton, Endpoint,
    EtaSet, Name, Value,
};
use crate::textio::print_choreography_inline;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CompatError {
    #[error("procedure {0} is never called outside its own body")]
    UncalledProcedure(Name),
    #[error("the choreography contains runtime terms")]
    RuntimeTerms,
    #[error("call to undefined procedure {0}")]
    UnboundCall(Name),
    #[error("undefined connector {0}")]
    UndefinedConnector(Name),
    #[error("gave up after {0} judgements")]
    Budget(usize),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CompatOptions {
    /// Compare states at calls only on connectors used by the procedure body.
    pub modular: bool,
    /// Maximum number of judgements processed (0 = unlimited).
    pub budget: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CompatStats {
    pub judgements: usize,
    pub max_worklist: usize,
    /// Pushed judgements that were not smaller than the one they came from.
    /// The size measure guarantees termination only while this stays 0.
    pub not_shrinking: usize,
}

/// A failed judgement, printed for the user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub reason: String,
    /// The choreography of the failing judgement, on one line.
    pub choreography: String,
    /// The head prefix that could not move, if any.
    pub head: Option<String>,
    pub connector: Option<Name>,
    pub state: Option<Name>,
    /// Automaton states of the failing judgement.
    pub states: AutomatonStateMap,
    /// How the failing judgement was reached from the initial one.
    pub path: Vec<String>,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "not compatible: {}", self.reason)?;
        if let (Some(c), Some(s)) = (&self.connector, &self.state) {
            writeln!(f, "  connector {c} in state {s}")?;
        }
        if let Some(h) = &self.head {
            writeln!(f, "  head: {h}")?;
        }
        writeln!(f, "  judgement: {}", self.choreography)?;
        for (name, st) in &self.states {
            writeln!(f, "    {name} = {st}")?;
        }
        if !self.path.is_empty() {
            writeln!(f, "  reached by:")?;
            for step in &self.path {
                writeln!(f, "    {step}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Yes(CompatStats),
    No(Box<Counterexample>),
}

impl Verdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, Verdict::Yes(_))
    }
}

/// Where the automaton states of a judgement come from.
#[derive(Clone, Debug)]
enum States {
    Known(AutomatonStateMap),
    /// The states recorded for a procedure at its first call.
    Of(Name),
}

#[derive(Clone, Debug)]
struct Judgement {
    states: States,
    chor: Choreography,
    path: Vec<String>,
}

pub fn check_compat(c: &Choreography, g: &ConnectorMapping, opts: CompatOptions) -> Result<Verdict, CompatError> {
    if c.contains_runtime_terms() {
        return Err(CompatError::RuntimeTerms);
    }
    if let Some(x) = c.unbound_calls().into_iter().next() {
        return Err(CompatError::UnboundCall(x));
    }
    for gamma in c.connectors() {
        if !g.contains_key(&gamma) {
            return Err(CompatError::UndefinedConnector(gamma));
        }
    }
    precheck_calls(c)?;

    let mut checker = Checker {
        g,
        opts,
        table: BTreeMap::new(),
        bodies: BTreeMap::new(),
        next_token: 0,
        stats: CompatStats::default(),
    };
    checker.run(Judgement {
        states: States::Known(initial_states(g)),
        chor: crate::chor_engine::normalize(c),
        path: Vec::new(),
    })
}

/// Every definition must be called from its continuation, otherwise its
/// body judgement has no states to start from.
fn precheck_calls(c: &Choreography) -> Result<(), CompatError> {
    match c {
        Choreography::Prefix { cont, .. } => precheck_calls(cont),
        Choreography::Cond { then_, else_, .. } => {
            precheck_calls(then_)?;
            precheck_calls(else_)
        }
        Choreography::Def { name, body, cont } => {
            let mut calls = BTreeSet::new();
            collect_calls(cont, &mut calls);
            if !calls.contains(name) {
                return Err(CompatError::UncalledProcedure(name.clone()));
            }
            precheck_calls(body)?;
            precheck_calls(cont)
        }
        Choreography::Call(_) | Choreography::End => Ok(()),
    }
}

fn collect_calls(c: &Choreography, out: &mut BTreeSet<Name>) {
    match c {
        Choreography::Prefix { cont, .. } => collect_calls(cont, out),
        Choreography::Cond { then_, else_, .. } => {
            collect_calls(then_, out);
            collect_calls(else_, out);
        }
        Choreography::Def { body, cont, .. } => {
            collect_calls(body, out);
            collect_calls(cont, out);
        }
        Choreography::Call(x) => {
            out.insert(x.clone());
        }
        Choreography::End => {}
    }
}

struct Checker<'a> {
    g: &'a ConnectorMapping,
    opts: CompatOptions,
    /// States recorded at the first call of each procedure.
    table: BTreeMap<Name, AutomatonStateMap>,
    bodies: BTreeMap<Name, Choreography>,
    next_token: u64,
    stats: CompatStats,
}

impl Checker<'_> {
    fn run(&mut self, initial: Judgement) -> Result<Verdict, CompatError> {
        let mut stack = vec![initial];
        while let Some(j) = stack.pop() {
            self.stats.judgements += 1;
            if self.opts.budget > 0 && self.stats.judgements > self.opts.budget {
                return Err(CompatError::Budget(self.opts.budget));
            }
            let size = j.chor.size();
            let states = match &j.states {
                States::Known(a) => a.clone(),
                States::Of(x) => match self.table.get(x) {
                    Some(a) => a.clone(),
                    None => return Err(CompatError::UncalledProcedure(x.clone())),
                },
            };
            let pushed = match self.step(&states, &j)? {
                Ok(next) => next,
                Err(cex) => return Ok(Verdict::No(cex)),
            };
            self.stats.not_shrinking += pushed.iter().filter(|n| n.chor.size() >= size).count();
            stack.extend(pushed);
            self.stats.max_worklist = self.stats.max_worklist.max(stack.len());
        }
        Ok(Verdict::Yes(self.stats.clone()))
    }

    fn fail(&self, states: &AutomatonStateMap, j: &Judgement, reason: String) -> Box<Counterexample> {
        Box::new(Counterexample {
            reason,
            choreography: print_choreography_inline(&j.chor),
            head: None,
            connector: None,
            state: None,
            states: states.clone(),
            path: j.path.clone(),
        })
    }

    /// Judgements that must hold for `j` to hold, or why it fails.
    #[allow(clippy::type_complexity)]
    fn step(
        &mut self,
        states: &AutomatonStateMap,
        j: &Judgement,
    ) -> Result<Result<Vec<Judgement>, Box<Counterexample>>, CompatError> {
        let extend = |what: String| {
            let mut p = j.path.clone();
            p.push(what);
            p
        };
        let known = |a: &AutomatonStateMap| States::Known(a.clone());
        match &j.chor {
            Choreography::End => Ok(Ok(Vec::new())),
            Choreography::Cond {
                process,
                then_,
                else_,
                ..
            } => Ok(Ok(vec![
                Judgement {
                    states: known(states),
                    chor: then_.as_ref().clone(),
                    path: extend(format!("then branch of {process}")),
                },
                Judgement {
                    states: known(states),
                    chor: else_.as_ref().clone(),
                    path: extend(format!("else branch of {process}")),
                },
            ])),
            Choreography::Def { name, body, cont } => {
                self.bodies.insert(name.clone(), body.as_ref().clone());
                // The continuation goes on top so that its calls fix the
                // states of the body first.
                Ok(Ok(vec![
                    Judgement {
                        states: States::Of(name.clone()),
                        chor: body.as_ref().clone(),
                        path: extend(format!("body of {name}")),
                    },
                    Judgement {
                        states: known(states),
                        chor: cont.as_ref().clone(),
                        path: extend(format!("scope of {name}")),
                    },
                ]))
            }
            Choreography::Call(x) => {
                let relevant: Option<BTreeSet<Name>> = if self.opts.modular {
                    self.bodies.get(x).map(|b| b.connectors())
                } else {
                    None
                };
                match self.table.get(x) {
                    None => {
                        self.table.insert(x.clone(), states.clone());
                        Ok(Ok(Vec::new()))
                    }
                    Some(recorded) => {
                        if equal_up_to_tokens(recorded, states, relevant.as_ref()) {
                            Ok(Ok(Vec::new()))
                        } else {
                            Ok(Err(self.fail(
                                states,
                                j,
                                format!("call to {x} in connector states that differ from its first call"),
                            )))
                        }
                    }
                }
            }
            Choreography::Prefix { etas, connector, .. } => Ok(self.prefix_step(states, j, etas, connector)),
        }
    }

    fn prefix_step(
        &mut self,
        states: &AutomatonStateMap,
        j: &Judgement,
        head: &EtaSet,
        gamma: &str,
    ) -> Result<Vec<Judgement>, Box<Counterexample>> {
        let automaton = &self.g[gamma];
        let current = &states[gamma];
        let items = exposures(&j.chor, false);
        let group: Vec<(&EtaSet, &[Location])> = items
            .iter()
            .filter_map(|i| match i {
                Exposed::Block {
                    etas,
                    connector,
                    locations,
                } if connector == gamma => Some((etas, locations.as_slice())),
                _ => None,
            })
            .collect();
        let etas = union_of(&group);
        let mut next = Vec::new();
        for (index, t) in automaton.outgoing(&current.state) {
            if !t.label.flows().iter().any(|f| matches!(f.source, Endpoint::Port(_)) || matches!(f.target, Endpoint::Port(_))) {
                continue;
            }
            let mut token = self.next_token;
            let result = match_label(&etas, &t.label, &current.mem, &mut |_, _| {
                token += 1;
                Ok(Value::Token(token))
            });
            let Ok(eff) = result else { continue };
            self.next_token = token;
            let mut after = states.clone();
            after.insert(
                gamma.to_owned(),
                AutState {
                    state: t.to.clone(),
                    mem: eff.mem.clone(),
                },
            );
            let edits = block_edits(&group, &eff.residual);
            let mut path = j.path.clone();
            path.push(format!("{gamma} #{index}: {} -[{}]-> {}", t.from, t.label, t.to));
            next.push(Judgement {
                states: States::Known(after),
                chor: rewrite(&j.chor, &edits),
                path,
            });
        }
        if next.is_empty() {
            let mut cex = self.fail(states, j, "no transition of the connector matches the interactions at the head".into());
            cex.head = Some(crate::textio::print_etaset(head));
            cex.connector = Some(gamma.to_owned());
            cex.state = Some(current.state.clone());
            return Err(cex);
        }
        Ok(next)
    }
}

/// Equality of automaton states up to a consistent renaming of tokens,
/// optionally restricted to some connectors.
fn equal_up_to_tokens(a: &AutomatonStateMap, b: &AutomatonStateMap, only: Option<&BTreeSet<Name>>) -> bool {
    let mut fwd: BTreeMap<u64, u64> = BTreeMap::new();
    let mut bwd: BTreeMap<u64, u64> = BTreeMap::new();
    let keys: BTreeSet<&Name> = a.keys().chain(b.keys()).collect();
    for k in keys {
        if only.is_some_and(|o| !o.contains(k)) {
            continue;
        }
        let (Some(x), Some(y)) = (a.get(k), b.get(k)) else { return false };
        if x.state != y.state || x.mem.len() != y.mem.len() {
            return false;
        }
        for ((m1, v1), (m2, v2)) in x.mem.iter().zip(y.mem.iter()) {
            if m1 != m2 {
                return false;
            }
            match (v1, v2) {
                (Value::Token(t1), Value::Token(t2)) => {
                    if *fwd.entry(*t1).or_insert(*t2) != *t2 || *bwd.entry(*t2).or_insert(*t1) != *t1 {
                        return false;
                    }
                }
                (v1, v2) if v1 != v2 => return false,
                _ => {}
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Confluence

/// What a cell holds after a sequence of transitions, relative to before.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Sym {
    Initial(Name),
    Input(Name),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Confluence {
    Confluent,
    /// Two transitions leaving `state` whose effects were not reconciled
    /// within one further step.
    Unknown { state: Name, first: usize, second: usize },
}

fn effect(a: &ConstraintAutomaton, path: &[usize]) -> BTreeMap<Name, Sym> {
    let mut cells: BTreeMap<Name, Sym> = a.mems.iter().map(|m| (m.clone(), Sym::Initial(m.clone()))).collect();
    for &i in path {
        let before = cells.clone();
        for f in a.transitions[i].label.flows() {
            if let Endpoint::Mem(target) = &f.target {
                let v = match &f.source {
                    Endpoint::Port(p) => Sym::Input(p.clone()),
                    Endpoint::Mem(m) => before[m].clone(),
                };
                cells.insert(target.clone(), v);
            }
        }
    }
    cells
}

/// Checks that any two transitions leaving a state can be joined again in at
/// most one more step each, with the same effect on memory.
pub fn check_confluence(a: &ConstraintAutomaton) -> Confluence {
    for s in &a.states {
        let out: Vec<(usize, &str)> = a.outgoing(s).map(|(i, t)| (i, t.to.as_str())).collect();
        for (k, &(i, s1)) in out.iter().enumerate() {
            for &(j, s2) in &out[k + 1..] {
                let ends = |first: usize, mid: &str| -> Vec<(String, BTreeMap<Name, Sym>)> {
                    let mut v = vec![(mid.to_owned(), effect(a, &[first]))];
                    for (n, t) in a.outgoing(mid) {
                        v.push((t.to.clone(), effect(a, &[first, n])));
                    }
                    v
                };
                let left = ends(i, s1);
                let right = ends(j, s2);
                if !left.iter().any(|l| right.contains(l)) {
                    return Confluence::Unknown {
                        state: s.clone(),
                        first: i,
                        second: j,
                    };
                }
            }
        }
    }
    Confluence::Confluent
}
