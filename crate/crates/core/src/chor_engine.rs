//! Small-step execution of choreographies.
//!
//! A configuration is a choreography, a store and the current state of every
//! connector automaton. Structural rearrangements are not performed on the
//! tree. Instead a scan collects everything that could be brought to the
//! head (the *exposed* items, each with the places it occurs at), and a
//! reduction rewrites those places directly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matching::match_label;
pub use crate::matching::{MatchEffect, MatchFailure};
use crate::model::{
    initial_states, AutState, AutomatonStateMap, BinOp, ChorState, Choreography, ConnectorMapping,
    Constraint, EtaSet, Expr, Interaction, MemorySnapshot, Name, UnOp, Value,
};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("{process}.{var} is unbound")]
    Unbound { process: Name, var: Name },
    #[error("`{op}` cannot be applied to {value}")]
    Type { op: &'static str, value: Value },
    #[error("integer overflow")]
    Overflow,
}

/// Evaluates `e` at process `p`.
pub fn eval_expr(e: &Expr, sigma: &ChorState, p: &str) -> Result<Value, EvalError> {
    eval_with(e, p, &|x| sigma.get(p, x).cloned())
}

/// Evaluates `e` against the local store of process `p`.
pub fn eval_in_store(e: &Expr, store: &BTreeMap<Name, Value>, p: &str) -> Result<Value, EvalError> {
    eval_with(e, p, &|x| store.get(x).cloned())
}

fn eval_with(e: &Expr, p: &str, lookup: &dyn Fn(&str) -> Option<Value>) -> Result<Value, EvalError> {
    match e {
        Expr::Const(v) => Ok(v.clone()),
        Expr::Var(x) => lookup(x).ok_or_else(|| EvalError::Unbound {
            process: p.to_owned(),
            var: x.clone(),
        }),
        Expr::Unary(UnOp::Not, inner) => match eval_with(inner, p, lookup)? {
            Value::Bool(b) => Ok(Value::Bool(!b)),
            value => Err(EvalError::Type { op: "not", value }),
        },
        Expr::Binary(op, l, r) => {
            let l = eval_with(l, p, lookup)?;
            let r = eval_with(r, p, lookup)?;
            let ints = |l: Value, r: Value| match (l, r) {
                (Value::Int(a), Value::Int(b)) => Ok((a, b)),
                (Value::Int(_), value) | (value, _) => Err(EvalError::Type { op: op.symbol(), value }),
            };
            let bools = |l: Value, r: Value| match (l, r) {
                (Value::Bool(a), Value::Bool(b)) => Ok((a, b)),
                (Value::Bool(_), value) | (value, _) => Err(EvalError::Type { op: op.symbol(), value }),
            };
            match op {
                BinOp::Add => {
                    let (a, b) = ints(l, r)?;
                    a.checked_add(b).map(Value::Int).ok_or(EvalError::Overflow)
                }
                BinOp::Sub => {
                    let (a, b) = ints(l, r)?;
                    a.checked_sub(b).map(Value::Int).ok_or(EvalError::Overflow)
                }
                BinOp::Lt => {
                    let (a, b) = ints(l, r)?;
                    Ok(Value::Bool(a < b))
                }
                BinOp::Eq => Ok(Value::Bool(l == r)),
                BinOp::Ne => Ok(Value::Bool(l != r)),
                BinOp::And => {
                    let (a, b) = bools(l, r)?;
                    Ok(Value::Bool(a && b))
                }
                BinOp::Or => {
                    let (a, b) = bools(l, r)?;
                    Ok(Value::Bool(a || b))
                }
            }
        }
    }
}

/// Matches `etas` against label `phi`. Sent expressions are evaluated once,
/// in the store as it was before the step.
pub fn match_transition(
    etas: &EtaSet,
    phi: &Constraint,
    sigma: &ChorState,
    mu: &MemorySnapshot,
) -> Result<(EtaSet, ChorState, MemorySnapshot), MatchFailure> {
    let eff = match_concrete(etas, phi, sigma, mu)?;
    let mut sigma2 = sigma.clone();
    for (q, x, v) in eff.writes {
        sigma2.set(&q, &x, v);
    }
    Ok((eff.residual, sigma2, eff.mem))
}

fn match_concrete(
    etas: &EtaSet,
    phi: &Constraint,
    sigma: &ChorState,
    mu: &MemorySnapshot,
) -> Result<MatchEffect, MatchFailure> {
    match_label(etas, phi, mu, &mut |p, e| {
        eval_expr(e, sigma, p).map_err(|err| err.to_string())
    })
}

// ---------------------------------------------------------------------------
// Exposure

/// One step of a path from the root of a choreography to a sub-term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    /// Continuation of a prefix.
    Cont,
    Then,
    Else,
    /// Continuation of a definition.
    DefCont,
    /// Into the body of the procedure called at this point.
    Unfold,
}

pub type Location = Vec<Step>;

/// Something that can be brought to the head of a choreography.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Exposed {
    /// A process-connected part of a prefix.
    Block {
        etas: EtaSet,
        connector: Name,
        locations: Vec<Location>,
    },
    Cond {
        process: Name,
        guard: Expr,
        locations: Vec<Location>,
    },
}

impl Exposed {
    pub fn locations(&self) -> &[Location] {
        match self {
            Exposed::Block { locations, .. } | Exposed::Cond { locations, .. } => locations,
        }
    }

    fn same_item(&self, other: &Exposed) -> bool {
        match (self, other) {
            (
                Exposed::Block { etas, connector, .. },
                Exposed::Block {
                    etas: e2,
                    connector: c2,
                    ..
                },
            ) => etas == e2 && connector == c2,
            (
                Exposed::Cond { process, guard, .. },
                Exposed::Cond {
                    process: p2,
                    guard: g2,
                    ..
                },
            ) => process == p2 && guard == g2,
            _ => false,
        }
    }

    fn locations_mut(&mut self) -> &mut Vec<Location> {
        match self {
            Exposed::Block { locations, .. } | Exposed::Cond { locations, .. } => locations,
        }
    }
}

/// Splits an interaction set into its process-connected components.
pub fn blocks(etas: &EtaSet) -> Vec<EtaSet> {
    let mut groups: Vec<(BTreeSet<&str>, EtaSet)> = Vec::new();
    for eta in etas {
        let procs: BTreeSet<&str> = eta.processes().collect();
        let mut merged = (procs, EtaSet::from([eta.clone()]));
        let mut rest = Vec::new();
        for g in groups {
            if g.0.is_disjoint(&merged.0) {
                rest.push(g);
            } else {
                merged.0.extend(g.0);
                merged.1.extend(g.1);
            }
        }
        rest.push(merged);
        groups = rest;
    }
    let mut out: Vec<EtaSet> = groups.into_iter().map(|g| g.1).collect();
    out.sort();
    out
}

#[derive(Clone, Default)]
struct Ctx {
    /// Processes of everything that precedes, plus enclosing deciders.
    blocked: BTreeSet<Name>,
    in_cond: bool,
    /// Processes of bodies of definitions that could not be lifted.
    forbidden: BTreeSet<Name>,
    conds_ok: bool,
}

struct Scanner<'a> {
    env: Vec<(&'a str, &'a Choreography)>,
    unfolding: Vec<&'a str>,
    unfold: bool,
}

impl<'a> Scanner<'a> {
    fn lookup(&self, x: &str) -> Option<&'a Choreography> {
        self.env.iter().rev().find(|(n, _)| *n == x).map(|(_, b)| *b)
    }

    /// Processes of a procedure body, following calls to other procedures.
    fn body_processes(&self, body: &'a Choreography) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut todo = vec![body];
        while let Some(c) = todo.pop() {
            out.extend(c.processes());
            let mut calls = BTreeSet::new();
            collect_calls(c, &mut calls);
            for x in calls {
                if let Some(b) = self.lookup(&x) {
                    if let Some((name, _)) = self.env.iter().rev().find(|(n, _)| *n == x) {
                        if seen.insert(name) {
                            todo.push(b);
                        }
                    }
                }
            }
        }
        out
    }

    fn scan(&mut self, c: &'a Choreography, ctx: &Ctx, path: &mut Location, out: &mut Vec<Exposed>) {
        match c {
            Choreography::Prefix {
                etas,
                connector,
                cont,
            } => {
                for block in blocks(etas) {
                    let pn: BTreeSet<Name> = block.iter().flat_map(|e| e.processes().map(str::to_owned)).collect();
                    if pn.is_disjoint(&ctx.blocked) && pn.is_disjoint(&ctx.forbidden) {
                        out.push(Exposed::Block {
                            etas: block,
                            connector: connector.clone(),
                            locations: vec![path.clone()],
                        });
                    }
                }
                let mut next = ctx.clone();
                next.blocked.extend(etas.iter().flat_map(|e| e.processes().map(str::to_owned)));
                path.push(Step::Cont);
                self.scan(cont, &next, path, out);
                path.pop();
            }
            Choreography::Cond {
                process,
                guard,
                then_,
                else_,
            } => {
                if ctx.conds_ok && !ctx.blocked.contains(process) && !ctx.forbidden.contains(process) {
                    out.push(Exposed::Cond {
                        process: process.clone(),
                        guard: guard.clone(),
                        locations: vec![path.clone()],
                    });
                }
                let mut inner = ctx.clone();
                inner.blocked.insert(process.clone());
                inner.in_cond = true;
                let mut left = Vec::new();
                path.push(Step::Then);
                self.scan(then_, &inner, path, &mut left);
                path.pop();
                let mut right = Vec::new();
                path.push(Step::Else);
                self.scan(else_, &inner, path, &mut right);
                path.pop();
                for mut item in left {
                    if let Some(pos) = right.iter().position(|r| r.same_item(&item)) {
                        let other = right.remove(pos);
                        item.locations_mut().extend(other.locations().iter().cloned());
                        out.push(item);
                    }
                }
            }
            Choreography::Def { name, body, cont } => {
                self.env.push((name, body));
                let pn = self.body_processes(body);
                let liftable = !ctx.in_cond && ctx.forbidden.is_empty() && ctx.blocked.is_disjoint(&pn);
                path.push(Step::DefCont);
                if liftable {
                    self.scan(cont, ctx, path, out);
                } else {
                    let mut inner = ctx.clone();
                    inner.forbidden.extend(pn);
                    inner.conds_ok = false;
                    self.scan(cont, &inner, path, out);
                }
                path.pop();
                self.env.pop();
            }
            Choreography::Call(x) => {
                if !self.unfold || self.unfolding.contains(&x.as_str()) {
                    return;
                }
                if let Some(body) = self.lookup(x) {
                    self.unfolding.push(x);
                    path.push(Step::Unfold);
                    self.scan(body, ctx, path, out);
                    path.pop();
                    self.unfolding.pop();
                }
            }
            Choreography::End => {}
        }
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

/// Everything that can be brought to the head of `c`. With `unfold`, calls
/// met by the scan are unfolded (each procedure at most once per scan).
pub fn exposures(c: &Choreography, unfold: bool) -> Vec<Exposed> {
    let mut scanner = Scanner {
        env: Vec::new(),
        unfolding: Vec::new(),
        unfold,
    };
    let ctx = Ctx {
        conds_ok: true,
        ..Ctx::default()
    };
    let mut out = Vec::new();
    scanner.scan(c, &ctx, &mut Vec::new(), &mut out);
    out
}

// ---------------------------------------------------------------------------
// Rewriting

/// What to do at one location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Edit {
    /// Replace part of the prefix's interaction set.
    Etas { remove: EtaSet, add: EtaSet },
    /// Replace the conditional by one of its branches.
    Branch(bool),
}

/// Applies edits (all locations refer to `c`), then normalises.
pub fn rewrite(c: &Choreography, edits: &[(Location, Edit)]) -> Choreography {
    let mut out = c.clone();
    let refs: Vec<(&[Step], &Edit)> = edits.iter().map(|(l, e)| (l.as_slice(), e)).collect();
    apply(&mut out, &refs, &mut Vec::new());
    normalize(&out)
}

fn apply(c: &mut Choreography, edits: &[(&[Step], &Edit)], env: &mut Vec<(Name, Choreography)>) {
    if edits.is_empty() {
        return;
    }
    // Several blocks of one prefix may be edited at once, and the
    // continuation may hold further blocks of the same step.
    let mut added = EtaSet::new();
    for (_, edit) in edits.iter().filter(|(p, _)| p.is_empty()) {
        match (edit, &mut *c) {
            (Edit::Etas { remove, add }, Choreography::Prefix { etas, .. }) => {
                for eta in remove {
                    etas.remove(eta);
                }
                added.extend(add.iter().cloned());
            }
            (Edit::Branch(b), Choreography::Cond { then_, else_, .. }) => {
                let chosen = if *b { then_.as_ref().clone() } else { else_.as_ref().clone() };
                *c = chosen;
                return;
            }
            (edit, node) => panic!("edit {edit:?} does not fit {node:?}"),
        }
    }
    if let Choreography::Prefix { etas, .. } = c {
        etas.extend(added);
    }
    let edits: Vec<(&[Step], &Edit)> = edits.iter().filter(|(p, _)| !p.is_empty()).copied().collect();
    if edits.is_empty() {
        return;
    }
    let by = |step: Step| -> Vec<(&[Step], &Edit)> {
        edits
            .iter()
            .filter(|(p, _)| p[0] == step)
            .map(|(p, e)| (&p[1..], *e))
            .collect()
    };
    let unfold = by(Step::Unfold);
    if !unfold.is_empty() {
        let Choreography::Call(x) = &*c else {
            panic!("unfold step at a non-call");
        };
        let body = env
            .iter()
            .rev()
            .find(|(n, _)| n == x)
            .map(|(_, b)| b.clone())
            .expect("unfolded call has a definition in scope");
        *c = body;
        apply(c, &unfold, env);
        return;
    }
    match c {
        Choreography::Prefix { cont, .. } => apply(cont, &by(Step::Cont), env),
        Choreography::Cond { then_, else_, .. } => {
            apply(then_, &by(Step::Then), env);
            apply(else_, &by(Step::Else), env);
        }
        Choreography::Def { name, body, cont } => {
            env.push((name.clone(), body.as_ref().clone()));
            apply(cont, &by(Step::DefCont), env);
            env.pop();
        }
        Choreography::Call(_) | Choreography::End => panic!("location leads past a leaf"),
    }
}

/// Drops completed prefixes and definitions whose scope has finished.
pub fn normalize(c: &Choreography) -> Choreography {
    match c {
        Choreography::Prefix {
            etas,
            connector,
            cont,
        } => {
            let cont = normalize(cont);
            if etas.is_empty() {
                cont
            } else {
                Choreography::Prefix {
                    etas: etas.clone(),
                    connector: connector.clone(),
                    cont: Box::new(cont),
                }
            }
        }
        Choreography::Cond {
            process,
            guard,
            then_,
            else_,
        } => Choreography::Cond {
            process: process.clone(),
            guard: guard.clone(),
            then_: Box::new(normalize(then_)),
            else_: Box::new(normalize(else_)),
        },
        Choreography::Def { name, body, cont } => {
            let cont = normalize(cont);
            if cont == Choreography::End {
                Choreography::End
            } else {
                Choreography::Def {
                    name: name.clone(),
                    body: body.clone(),
                    cont: Box::new(cont),
                }
            }
        }
        other => other.clone(),
    }
}

// ---------------------------------------------------------------------------
// Configurations and reductions

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub chor: Choreography,
    pub sigma: ChorState,
    pub autos: AutomatonStateMap,
}

impl Configuration {
    pub fn initial(c: &Choreography, sigma: &ChorState, g: &ConnectorMapping) -> Self {
        Configuration {
            chor: normalize(c),
            sigma: sigma.clone(),
            autos: initial_states(g),
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.chor == Choreography::End
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReductionKind {
    Com {
        connector: Name,
        transition: usize,
        label: Constraint,
        before: AutState,
        after: AutState,
        /// Interactions consumed by the step.
        fired: Vec<Interaction>,
    },
    Cond {
        process: Name,
        taken: bool,
    },
}

impl fmt::Display for ReductionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReductionKind::Com {
                connector,
                label,
                before,
                after,
                ..
            } => write!(f, "com  {connector}  {label}  {} -> {}", before.state, after.state),
            ReductionKind::Cond { process, taken } => {
                write!(f, "cond  {process}  {}  - -> -", if *taken { "then" } else { "else" })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reduction {
    pub kind: ReductionKind,
    pub next: Configuration,
}

/// Exposed blocks grouped by connector, in scan order of first appearance.
fn blocks_by_connector(items: &[Exposed]) -> Vec<(Name, Vec<(&EtaSet, &[Location])>)> {
    let mut out: Vec<(Name, Vec<(&EtaSet, &[Location])>)> = Vec::new();
    for item in items {
        if let Exposed::Block {
            etas,
            connector,
            locations,
        } = item
        {
            match out.iter_mut().find(|(c, _)| c == connector) {
                Some((_, v)) => v.push((etas, locations)),
                None => out.push((connector.clone(), vec![(etas, locations)])),
            }
        }
    }
    out
}

/// Edits writing a match result back into the blocks it came from.
pub(crate) fn block_edits(group: &[(&EtaSet, &[Location])], residual: &EtaSet) -> Vec<(Location, Edit)> {
    let mut edits = Vec::new();
    for (etas, locations) in group {
        let procs: BTreeSet<&str> = etas.iter().flat_map(|e| e.processes()).collect();
        let add: EtaSet = residual
            .iter()
            .filter(|eta| procs.contains(eta.receiver()))
            .cloned()
            .collect();
        if add == **etas {
            continue;
        }
        for loc in locations.iter() {
            edits.push((
                loc.clone(),
                Edit::Etas {
                    remove: (*etas).clone(),
                    add: add.clone(),
                },
            ));
        }
    }
    edits
}

/// Union of the interaction sets of a connector's exposed blocks.
pub(crate) fn union_of(group: &[(&EtaSet, &[Location])]) -> EtaSet {
    group.iter().flat_map(|(e, _)| e.iter().cloned()).collect()
}

/// All one-step reductions of `cfg`, in a fixed order: items in scan order,
/// then transitions in declaration order.
pub fn reductions(cfg: &Configuration, g: &ConnectorMapping) -> Vec<Reduction> {
    let items = exposures(&cfg.chor, true);
    let mut out = Vec::new();
    let by_conn = blocks_by_connector(&items);
    let mut conn_done = BTreeSet::new();
    for item in &items {
        match item {
            Exposed::Cond {
                process,
                guard,
                locations,
            } => {
                let Ok(v) = eval_expr(guard, &cfg.sigma, process) else {
                    continue;
                };
                let taken = v == Value::Bool(true);
                let edits: Vec<(Location, Edit)> =
                    locations.iter().map(|l| (l.clone(), Edit::Branch(taken))).collect();
                out.push(Reduction {
                    kind: ReductionKind::Cond {
                        process: process.clone(),
                        taken,
                    },
                    next: Configuration {
                        chor: rewrite(&cfg.chor, &edits),
                        sigma: cfg.sigma.clone(),
                        autos: cfg.autos.clone(),
                    },
                });
            }
            Exposed::Block { connector, .. } => {
                if !conn_done.insert(connector.clone()) {
                    continue;
                }
                let group = &by_conn.iter().find(|(c, _)| c == connector).expect("grouped").1;
                let Some(automaton) = g.get(connector) else {
                    continue;
                };
                let Some(before) = cfg.autos.get(connector) else {
                    continue;
                };
                let etas = union_of(group);
                for (index, t) in automaton.outgoing(&before.state) {
                    let Ok(eff) = match_concrete(&etas, &t.label, &cfg.sigma, &before.mem) else {
                        continue;
                    };
                    let mut sigma = cfg.sigma.clone();
                    for (q, x, v) in &eff.writes {
                        sigma.set(q, x, v.clone());
                    }
                    let after = AutState {
                        state: t.to.clone(),
                        mem: eff.mem.clone(),
                    };
                    let mut autos = cfg.autos.clone();
                    autos.insert(connector.clone(), after.clone());
                    let edits = block_edits(group, &eff.residual);
                    out.push(Reduction {
                        kind: ReductionKind::Com {
                            connector: connector.clone(),
                            transition: index,
                            label: t.label.clone(),
                            before: before.clone(),
                            after,
                            fired: eff.fired,
                        },
                        next: Configuration {
                            chor: rewrite(&cfg.chor, &edits),
                            sigma,
                            autos,
                        },
                    });
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Stuck diagnosis

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StuckClass {
    NoMatchingPorts,
    ValueMismatch,
    EvalFailed,
}

impl fmt::Display for StuckClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StuckClass::NoMatchingPorts => "no transition with matching ports",
            StuckClass::ValueMismatch => "value mismatch at asynchronous receive",
            StuckClass::EvalFailed => "expression evaluation failed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StuckEntry {
    pub connector: Option<Name>,
    /// Transition index, if the failure is about one transition.
    pub transition: Option<usize>,
    pub failure: MatchFailure,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StuckReport {
    pub entries: Vec<StuckEntry>,
}

impl StuckReport {
    /// The most specific failure class seen.
    pub fn class(&self) -> StuckClass {
        let mut class = StuckClass::NoMatchingPorts;
        for e in &self.entries {
            let c = match e.failure {
                MatchFailure::Eval(_) => StuckClass::EvalFailed,
                MatchFailure::Value(_) => StuckClass::ValueMismatch,
                _ => StuckClass::NoMatchingPorts,
            };
            class = class.max(c);
        }
        class
    }
}

impl fmt::Display for StuckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stuck: {}", self.class())?;
        for e in &self.entries {
            write!(f, "\n  ")?;
            if let Some(c) = &e.connector {
                write!(f, "{c}")?;
                if let Some(t) = e.transition {
                    write!(f, " #{t}")?;
                }
                write!(f, ": ")?;
            }
            write!(f, "{}", e.failure)?;
        }
        Ok(())
    }
}

/// Why no reduction applies (meaningful when `reductions` is empty).
pub fn diagnose(cfg: &Configuration, g: &ConnectorMapping) -> StuckReport {
    let items = exposures(&cfg.chor, true);
    let mut entries = Vec::new();
    for item in &items {
        if let Exposed::Cond { process, guard, .. } = item {
            if let Err(e) = eval_expr(guard, &cfg.sigma, process) {
                entries.push(StuckEntry {
                    connector: None,
                    transition: None,
                    failure: MatchFailure::Eval(e.to_string()),
                });
            }
        }
    }
    for (connector, group) in blocks_by_connector(&items) {
        let (Some(automaton), Some(state)) = (g.get(&connector), cfg.autos.get(&connector)) else {
            entries.push(StuckEntry {
                connector: Some(connector.clone()),
                transition: None,
                failure: MatchFailure::Ports("connector is not defined".into()),
            });
            continue;
        };
        let etas = union_of(&group);
        let mut any = false;
        for (index, t) in automaton.outgoing(&state.state) {
            any = true;
            if let Err(failure) = match_concrete(&etas, &t.label, &cfg.sigma, &state.mem) {
                entries.push(StuckEntry {
                    connector: Some(connector.clone()),
                    transition: Some(index),
                    failure,
                });
            }
        }
        if !any {
            entries.push(StuckEntry {
                connector: Some(connector.clone()),
                transition: None,
                failure: MatchFailure::Ports(format!("no transition leaves state {}", state.state)),
            });
        }
    }
    StuckReport { entries }
}

// ---------------------------------------------------------------------------
// Running

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheduler {
    /// Always the first reduction in the fixed order.
    First,
    /// Uniformly random choice from a seeded generator.
    Seeded(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Terminated,
    Stuck(StuckReport),
    StepLimit,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: Vec<ReductionKind>,
    pub outcome: Outcome,
    pub last: Configuration,
}

pub fn run(cfg: &Configuration, g: &ConnectorMapping, scheduler: Scheduler, max_steps: usize) -> RunResult {
    let mut rng = match scheduler {
        Scheduler::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Scheduler::First => None,
    };
    let mut current = cfg.clone();
    let mut trace = Vec::new();
    loop {
        if current.is_terminated() {
            return RunResult {
                trace,
                outcome: Outcome::Terminated,
                last: current,
            };
        }
        if trace.len() >= max_steps {
            return RunResult {
                trace,
                outcome: Outcome::StepLimit,
                last: current,
            };
        }
        let mut options = reductions(&current, g);
        if options.is_empty() {
            let report = diagnose(&current, g);
            return RunResult {
                trace,
                outcome: Outcome::Stuck(report),
                last: current,
            };
        }
        let pick = match rng.as_mut() {
            Some(rng) => rng.random_range(0..options.len()),
            None => 0,
        };
        let chosen = options.swap_remove(pick);
        trace.push(chosen.kind);
        current = chosen.next;
    }
}

/// Sequence of `(connector, state)` pairs visited by Com steps, for tests
/// and reports.
pub fn connector_states(trace: &[ReductionKind]) -> BTreeMap<Name, Vec<Name>> {
    let mut out: BTreeMap<Name, Vec<Name>> = BTreeMap::new();
    for step in trace {
        if let ReductionKind::Com {
            connector,
            before,
            after,
            ..
        } = step
        {
            let v = out.entry(connector.clone()).or_default();
            if v.is_empty() {
                v.push(before.state.clone());
            }
            v.push(after.state.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textio::{parse_choreography, parse_program, ParseOptions};

    fn chor(src: &str) -> Choreography {
        parse_choreography(src, ParseOptions { runtime: true }).unwrap()
    }

    fn exposed_blocks(c: &Choreography) -> Vec<(String, EtaSet)> {
        exposures(c, true)
            .into_iter()
            .filter_map(|i| match i {
                Exposed::Block { etas, connector, .. } => Some((connector, etas)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn eval_basics() {
        let s = ChorState::new().with("p", "x", Value::Int(2));
        let e = crate::textio::parse_expr("x + 1 < 4 and not false").unwrap();
        assert_eq!(eval_expr(&e, &s, "p"), Ok(Value::Bool(true)));
        assert!(matches!(eval_expr(&Expr::var("y"), &s, "p"), Err(EvalError::Unbound { .. })));
        let overflow = Expr::binary(BinOp::Add, Expr::int(i64::MAX), Expr::int(1));
        assert_eq!(eval_expr(&overflow, &s, "p"), Err(EvalError::Overflow));
    }

    #[test]
    fn split_and_swap_exposes_later_interaction() {
        // The second prefix's t -> v is independent of everything before it.
        let c = chor("{ p.x -> q, r.x -> s } thru g; { p.x -> q, t.x -> v } thru h; 0");
        let exposed = exposed_blocks(&c);
        let tv = EtaSet::from([Interaction::com("t", Expr::var("x"), "v", "x")]);
        assert!(exposed.contains(&("h".to_string(), tv)));
        let pq_h = EtaSet::from([Interaction::com("p", Expr::var("x"), "q", "x")]);
        assert!(!exposed.contains(&("h".to_string(), pq_h)));
    }

    #[test]
    fn interaction_common_to_both_branches_is_exposed() {
        let c = chor("if p.b then { q.x -> r thru g; 0 } else { q.x -> r thru g; s.y -> r thru g; 0 }");
        let items = exposures(&c, true);
        let block = items
            .iter()
            .find(|i| matches!(i, Exposed::Block { .. }))
            .expect("common block exposed");
        assert_eq!(block.locations().len(), 2);
        // but not when the decider takes part
        let c = chor("if q.b then { q.x -> r thru g; 0 } else { q.x -> r thru g; 0 }");
        assert_eq!(exposed_blocks(&c), vec![]);
    }

    #[test]
    fn unfolding_exposes_body() {
        let c = chor("def X = { p.x -> q thru g; X } in { X }");
        let exposed = exposed_blocks(&c);
        assert_eq!(exposed.len(), 1);
    }

    #[test]
    fn definitions_block_interactions_on_their_processes() {
        let c = chor("a.x -> b thru g; def X = { a.x -> c thru h; X } in { c.y -> d thru k; a.z -> d thru k; X }");
        let exposed = exposed_blocks(&c);
        let conns: Vec<&str> = exposed.iter().map(|(c, _)| c.as_str()).collect();
        assert_eq!(conns, vec!["g"]);
    }

    #[test]
    fn normalization() {
        let c = Choreography::prefix(EtaSet::new(), "g", Choreography::def("X", Choreography::Call("X".into()), Choreography::End));
        assert_eq!(normalize(&c), Choreography::End);
    }

    const SYNC: &str = "automaton Sync { ports p1, p2; states 1; init 1; 1 -> 1 : p1 > p2; }\n";
    const ASYNC1: &str =
        "automaton Async1 { ports p1, p2; mems m; states 1, 2; init 1; 1 -> 2 : p1 > m; 2 -> 1 : m > p2; }\n";

    #[test]
    fn async_takes_two_steps() {
        let src = format!(
            "{ASYNC1} connectors {{ ch = Async1[a/p1, b/p2]; }} init {{ a.x = 5; }} main {{ a.x -> b thru ch; 0 }}"
        );
        let p = parse_program(&src).unwrap();
        let g = p.connectors();
        let cfg = Configuration::initial(&p.main, &p.init, &g);
        let r = run(&cfg, &g, Scheduler::First, 10);
        assert_eq!(r.outcome, Outcome::Terminated);
        assert_eq!(r.trace.len(), 2);
        assert_eq!(r.last.sigma.get("b", "x"), Some(&Value::Int(5)));
        assert_eq!(r.last.autos["ch"].state, "1");
    }

    #[test]
    fn recursion_runs_to_step_limit() {
        let src = format!(
            "{SYNC} connectors {{ ch = Sync[a/p1, b/p2]; }} init {{ a.x = 1; }} main {{ def X = {{ a.x -> b thru ch; X }} in {{ X }} }}"
        );
        let p = parse_program(&src).unwrap();
        let g = p.connectors();
        let cfg = Configuration::initial(&p.main, &p.init, &g);
        let r = run(&cfg, &g, Scheduler::First, 7);
        assert_eq!(r.outcome, Outcome::StepLimit);
        assert_eq!(r.trace.len(), 7);
    }

    #[test]
    fn wrong_direction_is_stuck() {
        let src = format!(
            "{SYNC} connectors {{ ch = Sync[a/p1, b/p2]; }} init {{ b.x = 1; }} main {{ b.x -> a thru ch; 0 }}"
        );
        let p = parse_program(&src).unwrap();
        let g = p.connectors();
        let cfg = Configuration::initial(&p.main, &p.init, &g);
        let r = run(&cfg, &g, Scheduler::First, 7);
        match r.outcome {
            Outcome::Stuck(report) => assert_eq!(report.class(), StuckClass::NoMatchingPorts),
            other => panic!("expected stuck, got {other:?}"),
        }
    }

    #[test]
    fn unbound_guard_is_reported() {
        let src = format!("{SYNC} connectors {{ ch = Sync[a/p1, b/p2]; }} main {{ if a.flag then {{ 0 }} else {{ 0 }} }}");
        let p = parse_program(&src).unwrap();
        let g = p.connectors();
        let cfg = Configuration::initial(&p.main, &p.init, &g);
        match run(&cfg, &g, Scheduler::First, 7).outcome {
            Outcome::Stuck(report) => assert_eq!(report.class(), StuckClass::EvalFailed),
            other => panic!("expected stuck, got {other:?}"),
        }
    }
}
