//! Execution of Connected Processes networks: each process runs its own
//! behaviour and the projected automata decide which sends and receives
//! happen together.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::chor_engine::eval_in_store;
use crate::epp::{Behaviour, Direction, PortName};
use crate::matching::reads_before_writes;
use crate::model::{
    initial_states, AutState, AutomatonStateMap, ConnectorMapping, Constraint, Endpoint, MemorySnapshot, Name,
    Value,
};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Process {
    pub store: BTreeMap<Name, Value>,
    pub behaviour: Behaviour,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Network {
    pub processes: BTreeMap<Name, Process>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CpConfig {
    pub network: Network,
    pub autos: AutomatonStateMap,
}

impl CpConfig {
    pub fn initial(network: &Network, g: &ConnectorMapping) -> Self {
        CpConfig {
            network: network.clone(),
            autos: initial_states(g),
        }
    }

    /// Every process has finished.
    pub fn is_terminated(&self) -> bool {
        self.network.processes.values().all(|p| is_finished(&p.behaviour))
    }
}

fn is_finished(b: &Behaviour) -> bool {
    match b {
        Behaviour::End => true,
        Behaviour::Def { cont, .. } => is_finished(cont),
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CpStep {
    Com {
        connector: Name,
        transition: usize,
        label: Constraint,
        before: AutState,
        after: AutState,
    },
    Cond {
        process: Name,
        taken: bool,
    },
}

impl fmt::Display for CpStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CpStep::Com {
                connector,
                label,
                before,
                after,
                ..
            } => write!(f, "com  {connector}  {label}  {} -> {}", before.state, after.state),
            CpStep::Cond { process, taken } => {
                write!(f, "cond  {process}  {}  - -> -", if *taken { "then" } else { "else" })
            }
        }
    }
}

const UNFOLD_FUEL: usize = 32;

/// Rewrites `b` so that the first action is visible: definitions are looked
/// through and calls on the way are replaced by their bodies. `None` when a
/// call has no definition or unfolding does not reach an action.
pub fn expose_head(b: &Behaviour) -> Option<Behaviour> {
    fn go(b: &Behaviour, env: &mut Vec<(Name, Behaviour)>, fuel: usize) -> Option<Behaviour> {
        match b {
            Behaviour::Def { name, body, cont } => {
                env.push((name.clone(), body.as_ref().clone()));
                let k = go(cont, env, fuel);
                env.pop();
                Some(Behaviour::Def {
                    name: name.clone(),
                    body: body.clone(),
                    cont: Box::new(k?),
                })
            }
            Behaviour::Call(x) => {
                if fuel == 0 {
                    return None;
                }
                let body = env.iter().rev().find(|(n, _)| n == x)?.1.clone();
                go(&body, env, fuel - 1)
            }
            other => Some(other.clone()),
        }
    }
    go(b, &mut Vec::new(), UNFOLD_FUEL)
}

/// The action at the head, looking through definitions.
pub fn head(b: &Behaviour) -> &Behaviour {
    match b {
        Behaviour::Def { cont, .. } => head(cont),
        other => other,
    }
}

fn replace_head(b: &Behaviour, new: Behaviour) -> Behaviour {
    match b {
        Behaviour::Def { name, body, cont } => Behaviour::Def {
            name: name.clone(),
            body: body.clone(),
            cont: Box::new(replace_head(cont, new)),
        },
        _ => new,
    }
}

/// A process whose head is unfolded and ready to act.
struct Ready<'a> {
    store: &'a BTreeMap<Name, Value>,
    unfolded: Behaviour,
}

/// What a process does in a step through one connector.
#[derive(Clone, Debug)]
enum Part {
    Sent(Value),
    Received(Name, Value),
    Branched(Name),
}

fn port_of(endpoint: &Endpoint) -> Option<PortName> {
    endpoint.as_port().and_then(PortName::parse)
}

/// Matches the ready processes against one label of a projected automaton.
fn cp_match(
    ready: &BTreeMap<Name, Ready<'_>>,
    phi: &Constraint,
    mu: &MemorySnapshot,
) -> Option<(BTreeMap<Name, Part>, MemorySnapshot)> {
    if phi.is_empty() {
        return None;
    }
    let mut parts: BTreeMap<Name, Part> = BTreeMap::new();
    let mut new_mem = mu.clone();
    let mut atoms: Vec<(BTreeSet<&str>, BTreeSet<&str>)> = Vec::new();
    let mut cells_of: BTreeMap<Name, BTreeSet<&str>> = BTreeMap::new();

    // A sender fires once, whatever number of flows leave its port.
    for flow in phi.flows() {
        if !matches!(flow.source, Endpoint::Port(_)) {
            continue;
        }
        let port = port_of(&flow.source)?;
        if port.direction != Direction::Out {
            return None;
        }
        let cells = cells_of.entry(port.process.clone()).or_default();
        if let Endpoint::Mem(m) = &flow.target {
            cells.insert(m);
        }
        if parts.contains_key(&port.process) {
            continue;
        }
        let r = ready.get(&port.process)?;
        let value = match head(&r.unfolded) {
            Behaviour::Send { port: p, expr, .. } if *p == port => {
                eval_in_store(expr, r.store, &port.process).ok()?
            }
            Behaviour::SelSend { port: p, label, .. } if *p == port => Value::Label(label.clone()),
            _ => return None,
        };
        parts.insert(port.process.clone(), Part::Sent(value));
    }
    for (p, cells) in &cells_of {
        let Some(Part::Sent(v)) = parts.get(p) else {
            unreachable!("every sender has a part")
        };
        for m in cells {
            new_mem.insert((*m).to_owned(), v.clone());
        }
        atoms.push((BTreeSet::new(), cells.clone()));
    }

    for flow in phi.flows() {
        match (&flow.source, &flow.target) {
            (_, Endpoint::Port(_)) => {
                let port = port_of(&flow.target)?;
                if port.direction != Direction::In || parts.contains_key(&port.process) {
                    return None;
                }
                let value = match &flow.source {
                    Endpoint::Port(_) => {
                        let src = port_of(&flow.source)?;
                        match parts.get(&src.process) {
                            Some(Part::Sent(v)) => v.clone(),
                            _ => return None,
                        }
                    }
                    Endpoint::Mem(m) => {
                        atoms.push(([m.as_str()].into(), BTreeSet::new()));
                        mu.get(m).cloned().unwrap_or(Value::Bottom)
                    }
                };
                if value.is_bottom() {
                    return None;
                }
                let r = ready.get(&port.process)?;
                let part = match (head(&r.unfolded), &value) {
                    (Behaviour::Recv { port: p, var, .. }, v) if *p == port && !matches!(v, Value::Label(_)) => {
                        Part::Received(var.clone(), value.clone())
                    }
                    (Behaviour::Branch { port: p, branches }, Value::Label(l))
                        if *p == port && branches.contains_key(l) =>
                    {
                        Part::Branched(l.clone())
                    }
                    _ => return None,
                };
                parts.insert(port.process.clone(), part);
            }
            (Endpoint::Mem(m1), Endpoint::Mem(m2)) => {
                let v = mu.get(m1).cloned().unwrap_or(Value::Bottom);
                if v.is_bottom() {
                    return None;
                }
                new_mem.insert(m2.clone(), v);
                atoms.push(([m1.as_str()].into(), [m2.as_str()].into()));
            }
            _ => {}
        }
    }
    if !reads_before_writes(&atoms) {
        return None;
    }
    Some((parts, new_mem))
}

/// Behaviour after a process performed its part.
fn advance(unfolded: &Behaviour, part: &Part) -> Behaviour {
    let next = match (head(unfolded), part) {
        (Behaviour::Send { cont, .. } | Behaviour::SelSend { cont, .. }, Part::Sent(_)) => cont.as_ref().clone(),
        (Behaviour::Recv { cont, .. }, Part::Received(..)) => cont.as_ref().clone(),
        (Behaviour::Branch { branches, .. }, Part::Branched(l)) => branches[l].clone(),
        (h, p) => unreachable!("part {p:?} does not fit {h:?}"),
    };
    replace_head(unfolded, next)
}

/// All one-step reductions: conditionals in process order, then every
/// connector (in name order) with its transitions in declaration order.
pub fn reductions(cfg: &CpConfig, g: &ConnectorMapping) -> Vec<(CpStep, CpConfig)> {
    let mut out = Vec::new();
    let mut ready: BTreeMap<&str, Ready<'_>> = BTreeMap::new();
    for (name, p) in &cfg.network.processes {
        if let Some(unfolded) = expose_head(&p.behaviour) {
            ready.insert(name, Ready {
                store: &p.store,
                unfolded,
            });
        }
    }

    for (name, r) in &ready {
        if let Behaviour::Cond { guard, then_, else_ } = head(&r.unfolded) {
            let Ok(v) = eval_in_store(guard, r.store, name) else {
                continue;
            };
            let taken = v == Value::Bool(true);
            let branch = if taken { then_ } else { else_ };
            let mut next = cfg.clone();
            next.network.processes.get_mut(*name).expect("ready process exists").behaviour =
                replace_head(&r.unfolded, branch.as_ref().clone());
            out.push((
                CpStep::Cond {
                    process: (*name).to_owned(),
                    taken,
                },
                next,
            ));
        }
    }

    for (gamma, automaton) in g {
        let Some(before) = cfg.autos.get(gamma) else { continue };
        let on_gamma: BTreeMap<Name, Ready<'_>> = ready
            .iter()
            .filter(|(_, r)| match head(&r.unfolded) {
                Behaviour::Send { port, .. }
                | Behaviour::SelSend { port, .. }
                | Behaviour::Recv { port, .. }
                | Behaviour::Branch { port, .. } => port.connector == *gamma,
                _ => false,
            })
            .map(|(n, r)| {
                (
                    (*n).to_owned(),
                    Ready {
                        store: r.store,
                        unfolded: r.unfolded.clone(),
                    },
                )
            })
            .collect();
        for (index, t) in automaton.outgoing(&before.state) {
            // Transitions only on cells still need someone waiting here.
            if on_gamma.is_empty() {
                break;
            }
            let Some((parts, mem)) = cp_match(&on_gamma, &t.label, &before.mem) else {
                continue;
            };
            let mut next = cfg.clone();
            for (p, part) in &parts {
                let proc_ = next.network.processes.get_mut(p).expect("acting process exists");
                proc_.behaviour = advance(&on_gamma[p].unfolded, part);
                if let Part::Received(x, v) = part {
                    proc_.store.insert(x.clone(), v.clone());
                }
            }
            let after = AutState {
                state: t.to.clone(),
                mem,
            };
            next.autos.insert(gamma.clone(), after.clone());
            out.push((
                CpStep::Com {
                    connector: gamma.clone(),
                    transition: index,
                    label: t.label.clone(),
                    before: before.clone(),
                    after,
                },
                next,
            ));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CpOutcome {
    Terminated,
    Stuck,
    StepLimit,
}

#[derive(Clone, Debug)]
pub struct CpRun {
    pub trace: Vec<CpStep>,
    pub outcome: CpOutcome,
    pub last: CpConfig,
}

/// Runs with the first-reduction scheduler or a seeded random one.
pub fn run(cfg: &CpConfig, g: &ConnectorMapping, seed: Option<u64>, max_steps: usize) -> CpRun {
    use rand::{Rng, SeedableRng};
    let mut rng = seed.map(rand_chacha::ChaCha8Rng::seed_from_u64);
    let mut current = cfg.clone();
    let mut trace = Vec::new();
    loop {
        if current.is_terminated() {
            return CpRun {
                trace,
                outcome: CpOutcome::Terminated,
                last: current,
            };
        }
        if trace.len() >= max_steps {
            return CpRun {
                trace,
                outcome: CpOutcome::StepLimit,
                last: current,
            };
        }
        let mut options = reductions(&current, g);
        if options.is_empty() {
            return CpRun {
                trace,
                outcome: CpOutcome::Stuck,
                last: current,
            };
        }
        let pick = rng.as_mut().map_or(0, |r| r.random_range(0..options.len()));
        let (step, next) = options.swap_remove(pick);
        trace.push(step);
        current = next;
    }
}

// ---------------------------------------------------------------------------
// Pruning

const PRUNE_FUEL: usize = 64;

/// `n1` is a pruning of `n2`: same stores, and every behaviour of `n1`
/// matches the one in `n2` except that branchings in `n2` may offer extra
/// labels. Calls are unfolded as needed, a definition whose scope has
/// finished counts as `0`, and a missing process counts as an empty store
/// running `0`.
pub fn pruning_leq(n1: &Network, n2: &Network) -> bool {
    let names: BTreeSet<&Name> = n1.processes.keys().chain(n2.processes.keys()).collect();
    let empty = Process {
        store: BTreeMap::new(),
        behaviour: Behaviour::End,
    };
    names.into_iter().all(|p| {
        let a = n1.processes.get(p).unwrap_or(&empty);
        let b = n2.processes.get(p).unwrap_or(&empty);
        a.store == b.store && behaviour_leq(&a.behaviour, &b.behaviour)
    })
}

pub fn behaviour_leq(b1: &Behaviour, b2: &Behaviour) -> bool {
    leq(b1, &mut Vec::new(), b2, &mut Vec::new(), PRUNE_FUEL)
}

type Env = Vec<(Name, Behaviour)>;

fn strip_defs<'a>(b: &'a Behaviour, env: &mut Env) -> &'a Behaviour {
    match b {
        Behaviour::Def { name, body, cont } => {
            env.push((name.clone(), body.as_ref().clone()));
            strip_defs(cont, env)
        }
        other => other,
    }
}

fn leq(b1: &Behaviour, env1: &mut Env, b2: &Behaviour, env2: &mut Env, fuel: usize) -> bool {
    if fuel == 0 {
        return false;
    }
    let (n1, n2) = (env1.len(), env2.len());
    let x = strip_defs(b1, env1).clone();
    let y = strip_defs(b2, env2).clone();
    let result = leq_stripped(&x, env1, &y, env2, fuel);
    env1.truncate(n1);
    env2.truncate(n2);
    result
}

fn leq_stripped(b1: &Behaviour, env1: &mut Env, b2: &Behaviour, env2: &mut Env, fuel: usize) -> bool {
    use Behaviour::*;
    let lookup = |env: &Env, x: &str| env.iter().rev().find(|(n, _)| n == x).map(|(_, b)| b.clone());
    match (b1, b2) {
        (Call(x), Call(y)) if x == y => true,
        (Call(x), _) => match lookup(env1, x) {
            Some(body) => leq(&body, env1, b2, env2, fuel - 1),
            None => false,
        },
        (_, Call(y)) => match lookup(env2, y) {
            Some(body) => leq(b1, env1, &body, env2, fuel - 1),
            None => false,
        },
        (End, End) => true,
        (
            Send { port, expr, cont },
            Send {
                port: p2,
                expr: e2,
                cont: k2,
            },
        ) => port == p2 && expr == e2 && leq(cont, env1, k2, env2, fuel),
        (Recv { port, var, cont }, Recv { port: p2, var: v2, cont: k2 }) => {
            port == p2 && var == v2 && leq(cont, env1, k2, env2, fuel)
        }
        (
            SelSend { port, label, cont },
            SelSend {
                port: p2,
                label: l2,
                cont: k2,
            },
        ) => port == p2 && label == l2 && leq(cont, env1, k2, env2, fuel),
        (Branch { port, branches }, Branch { port: p2, branches: bs2 }) => {
            port == p2
                && branches.iter().all(|(l, k)| match bs2.get(l) {
                    Some(k2) => leq(k, env1, k2, env2, fuel),
                    None => false,
                })
        }
        (Cond { guard, then_, else_ }, Cond { guard: g2, then_: t2, else_: e2 }) => {
            guard == g2 && leq(then_, env1, t2, env2, fuel) && leq(else_, env1, e2, env2, fuel)
        }
        _ => false,
    }
}
