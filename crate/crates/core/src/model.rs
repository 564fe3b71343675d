//! Domain types shared by the whole stack, plus the structural well-formedness
//! checks on automata and interaction sets.
//!
//! Everything here is plain immutable data. Processes, variables, labels,
//! connector names, ports and memory cells are all identified by strings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Identifier of a process, variable, label, connector, port, cell or state.
pub type Name = String;

/// A runtime value.
///
/// `Bottom` marks an empty memory cell; it never ends up in a process store.
/// `Token` values are minted by the compatibility checker, which abstracts
/// every sent value into a fresh opaque symbol.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Str(String),
    Bool(bool),
    Label(Name),
    Token(u64),
    Bottom,
}

impl Value {
    pub fn is_bottom(&self) -> bool {
        matches!(self, Value::Bottom)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Value::Bool(b) => write!(f, "{b}"),
            Value::Label(l) => write!(f, "'{l}"),
            Value::Token(t) => write!(f, "#{t}"),
            Value::Bottom => f.write_str("bot"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnOp {
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Eq,
    Ne,
    Lt,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    /// Binding strength used by the parser and printer (higher binds tighter).
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt => 3,
            BinOp::Add | BinOp::Sub => 4,
        }
    }
}

/// Side-effect free expression evaluated locally at one process.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Const(Value),
    Var(Name),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<Name>) -> Self {
        Expr::Var(name.into())
    }

    pub fn int(n: i64) -> Self {
        Expr::Const(Value::Int(n))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Name>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(x) => {
                out.insert(x.clone());
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }
}

/// One element of an interaction set.
///
/// `RecvVal` and `RecvSel` are runtime terms: the sender already handed its
/// value (or label) to the connector and only the receive is outstanding.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Interaction {
    Com { sender: Name, expr: Expr, receiver: Name, var: Name },
    Sel { sender: Name, receiver: Name, label: Name },
    RecvVal { receiver: Name, var: Name, value: Value },
    RecvSel { receiver: Name, label: Name },
}

impl Interaction {
    pub fn com(sender: &str, expr: Expr, receiver: &str, var: &str) -> Self {
        Interaction::Com {
            sender: sender.into(),
            expr,
            receiver: receiver.into(),
            var: var.into(),
        }
    }

    pub fn sel(sender: &str, receiver: &str, label: &str) -> Self {
        Interaction::Sel {
            sender: sender.into(),
            receiver: receiver.into(),
            label: label.into(),
        }
    }

    pub fn receiver(&self) -> &str {
        match self {
            Interaction::Com { receiver, .. }
            | Interaction::Sel { receiver, .. }
            | Interaction::RecvVal { receiver, .. }
            | Interaction::RecvSel { receiver, .. } => receiver,
        }
    }

    /// The sender, if the send half is still pending.
    pub fn sender(&self) -> Option<&str> {
        match self {
            Interaction::Com { sender, .. } | Interaction::Sel { sender, .. } => Some(sender),
            _ => None,
        }
    }

    pub fn is_runtime(&self) -> bool {
        matches!(self, Interaction::RecvVal { .. } | Interaction::RecvSel { .. })
    }

    pub fn processes(&self) -> impl Iterator<Item = &str> {
        self.sender().into_iter().chain(std::iter::once(self.receiver()))
    }
}

pub type EtaSet = BTreeSet<Interaction>;

/// Process names occurring in a set of interactions.
pub fn eta_processes(etas: &EtaSet) -> BTreeSet<Name> {
    etas.iter()
        .flat_map(|eta| eta.processes().map(str::to_owned))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Choreography {
    /// `etas thru connector; cont`
    Prefix {
        etas: EtaSet,
        connector: Name,
        cont: Box<Choreography>,
    },
    /// `if process.guard then then_ else else_`
    Cond {
        process: Name,
        guard: Expr,
        then_: Box<Choreography>,
        else_: Box<Choreography>,
    },
    /// `def name = body in cont`
    Def {
        name: Name,
        body: Box<Choreography>,
        cont: Box<Choreography>,
    },
    Call(Name),
    End,
}

impl Choreography {
    pub fn prefix(etas: EtaSet, connector: &str, cont: Choreography) -> Self {
        Choreography::Prefix {
            etas,
            connector: connector.into(),
            cont: Box::new(cont),
        }
    }

    pub fn cond(process: &str, guard: Expr, then_: Choreography, else_: Choreography) -> Self {
        Choreography::Cond {
            process: process.into(),
            guard,
            then_: Box::new(then_),
            else_: Box::new(else_),
        }
    }

    pub fn def(name: &str, body: Choreography, cont: Choreography) -> Self {
        Choreography::Def {
            name: name.into(),
            body: Box::new(body),
            cont: Box::new(cont),
        }
    }

    /// All process names, including those inside procedure bodies.
    pub fn processes(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_processes(&mut out);
        out
    }

    fn collect_processes(&self, out: &mut BTreeSet<Name>) {
        match self {
            Choreography::Prefix { etas, cont, .. } => {
                out.extend(eta_processes(etas));
                cont.collect_processes(out);
            }
            Choreography::Cond {
                process,
                then_,
                else_,
                ..
            } => {
                out.insert(process.clone());
                then_.collect_processes(out);
                else_.collect_processes(out);
            }
            Choreography::Def { body, cont, .. } => {
                body.collect_processes(out);
                cont.collect_processes(out);
            }
            Choreography::Call(_) | Choreography::End => {}
        }
    }

    pub fn connectors(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.visit_prefixes(&mut |_, c| {
            out.insert(c.to_owned());
        });
        out
    }

    /// Calls every prefix (eta-set, connector) in the tree, bodies included.
    pub fn visit_prefixes(&self, f: &mut impl FnMut(&EtaSet, &str)) {
        match self {
            Choreography::Prefix {
                etas,
                connector,
                cont,
            } => {
                f(etas, connector);
                cont.visit_prefixes(f);
            }
            Choreography::Cond { then_, else_, .. } => {
                then_.visit_prefixes(f);
                else_.visit_prefixes(f);
            }
            Choreography::Def { body, cont, .. } => {
                body.visit_prefixes(f);
                cont.visit_prefixes(f);
            }
            Choreography::Call(_) | Choreography::End => {}
        }
    }

    /// Size used as the termination measure of the compatibility worklist:
    /// AST nodes, where pending communications and selections weigh 2 and
    /// runtime receives weigh 1.
    pub fn size(&self) -> usize {
        match self {
            Choreography::Prefix { etas, cont, .. } => {
                let etas: usize = etas
                    .iter()
                    .map(|eta| if eta.is_runtime() { 1 } else { 2 })
                    .sum();
                1 + etas + cont.size()
            }
            Choreography::Cond { then_, else_, .. } => 1 + then_.size() + else_.size(),
            Choreography::Def { body, cont, .. } => 1 + body.size() + cont.size(),
            Choreography::Call(_) | Choreography::End => 1,
        }
    }

    pub fn contains_runtime_terms(&self) -> bool {
        let mut found = false;
        self.visit_prefixes(&mut |etas, _| {
            found |= etas.iter().any(Interaction::is_runtime);
        });
        found
    }

    /// Procedure calls that are not in scope of a matching definition.
    pub fn unbound_calls(&self) -> BTreeSet<Name> {
        fn go(c: &Choreography, scope: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
            match c {
                Choreography::Prefix { cont, .. } => go(cont, scope, out),
                Choreography::Cond { then_, else_, .. } => {
                    go(then_, scope, out);
                    go(else_, scope, out);
                }
                Choreography::Def { name, body, cont } => {
                    scope.push(name.clone());
                    go(body, scope, out);
                    go(cont, scope, out);
                    scope.pop();
                }
                Choreography::Call(x) => {
                    if !scope.contains(x) {
                        out.insert(x.clone());
                    }
                }
                Choreography::End => {}
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }
}

/// Either side of a flow formula.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Port(Name),
    Mem(Name),
}

impl Endpoint {
    pub fn name(&self) -> &str {
        match self {
            Endpoint::Port(n) | Endpoint::Mem(n) => n,
        }
    }

    pub fn as_port(&self) -> Option<&str> {
        match self {
            Endpoint::Port(p) => Some(p),
            Endpoint::Mem(_) => None,
        }
    }

    pub fn as_mem(&self) -> Option<&str> {
        match self {
            Endpoint::Mem(m) => Some(m),
            Endpoint::Port(_) => None,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `source > target`: the source passes one message to the target.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Flow {
    pub source: Endpoint,
    pub target: Endpoint,
}

impl Flow {
    pub fn new(source: Endpoint, target: Endpoint) -> Self {
        Flow { source, target }
    }

    pub fn ports(p: &str, q: &str) -> Self {
        Flow::new(Endpoint::Port(p.into()), Endpoint::Port(q.into()))
    }

    pub fn to_mem(p: &str, m: &str) -> Self {
        Flow::new(Endpoint::Port(p.into()), Endpoint::Mem(m.into()))
    }

    pub fn from_mem(m: &str, q: &str) -> Self {
        Flow::new(Endpoint::Mem(m.into()), Endpoint::Port(q.into()))
    }

    pub fn mem_to_mem(m1: &str, m2: &str) -> Self {
        Flow::new(Endpoint::Mem(m1.into()), Endpoint::Mem(m2.into()))
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} > {}", self.source, self.target)
    }
}

/// A transition label: a set of flows with pairwise distinct targets.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Constraint {
    flows: BTreeSet<Flow>,
}

impl Constraint {
    pub fn new(flows: impl IntoIterator<Item = Flow>) -> Result<Self, ModelError> {
        let flows: BTreeSet<Flow> = flows.into_iter().collect();
        let mut targets = BTreeSet::new();
        for flow in &flows {
            if !targets.insert(&flow.target) {
                return Err(ModelError::DuplicateTarget(flow.target.clone()));
            }
        }
        Ok(Constraint { flows })
    }

    pub fn flows(&self) -> &BTreeSet<Flow> {
        &self.flows
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    /// Ports used by this label (sources and targets).
    pub fn ports(&self) -> BTreeSet<&str> {
        self.flows
            .iter()
            .flat_map(|f| [&f.source, &f.target])
            .filter_map(Endpoint::as_port)
            .collect()
    }

    pub fn mems(&self) -> BTreeSet<&str> {
        self.flows
            .iter()
            .flat_map(|f| [&f.source, &f.target])
            .filter_map(Endpoint::as_mem)
            .collect()
    }

    /// Same label with ports renamed; unmapped ports are kept.
    pub fn rename_ports(&self, rename: &BTreeMap<Name, Name>) -> Constraint {
        let sub = |e: &Endpoint| match e {
            Endpoint::Port(p) => Endpoint::Port(rename.get(p).cloned().unwrap_or_else(|| p.clone())),
            m => m.clone(),
        };
        Constraint {
            flows: self
                .flows
                .iter()
                .map(|f| Flow::new(sub(&f.source), sub(&f.target)))
                .collect(),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.flows.is_empty() {
            return f.write_str("{}");
        }
        for (i, flow) in self.flows.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{flow}")?;
        }
        Ok(())
    }
}

pub type MemorySnapshot = BTreeMap<Name, Value>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transition {
    pub from: Name,
    pub label: Constraint,
    pub to: Name,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintAutomaton {
    pub states: BTreeSet<Name>,
    pub ports: BTreeSet<Name>,
    pub mems: BTreeSet<Name>,
    pub transitions: Vec<Transition>,
    pub init_state: Name,
    pub init_mem: MemorySnapshot,
}

/// Whether a port only ever sends or only ever receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PortRole {
    Source,
    Target,
}

impl ConstraintAutomaton {
    /// Outgoing transitions of `state`, with their index in `transitions`.
    pub fn outgoing<'a>(&'a self, state: &'a str) -> impl Iterator<Item = (usize, &'a Transition)> + 'a {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.from == state)
    }

    /// Role of each port that occurs in some transition, or `None` for a
    /// port used in both directions (which `validate_automaton` rejects).
    pub fn port_roles(&self) -> BTreeMap<Name, Option<PortRole>> {
        let mut roles: BTreeMap<Name, Option<PortRole>> = BTreeMap::new();
        let mut note = |port: &str, role: PortRole| {
            roles
                .entry(port.to_owned())
                .and_modify(|r| {
                    if *r != Some(role) {
                        *r = None;
                    }
                })
                .or_insert(Some(role));
        };
        for t in &self.transitions {
            for flow in t.label.flows() {
                if let Endpoint::Port(p) = &flow.source {
                    note(p, PortRole::Source);
                }
                if let Endpoint::Port(p) = &flow.target {
                    note(p, PortRole::Target);
                }
            }
        }
        roles
    }

    /// Substitutes port names, e.g. `Async1[a/p1, c/p2]`.
    pub fn rename_ports(&self, rename: &BTreeMap<Name, Name>) -> ConstraintAutomaton {
        ConstraintAutomaton {
            states: self.states.clone(),
            ports: self
                .ports
                .iter()
                .map(|p| rename.get(p).cloned().unwrap_or_else(|| p.clone()))
                .collect(),
            mems: self.mems.clone(),
            transitions: self
                .transitions
                .iter()
                .map(|t| Transition {
                    from: t.from.clone(),
                    label: t.label.rename_ports(rename),
                    to: t.to.clone(),
                })
                .collect(),
            init_state: self.init_state.clone(),
            init_mem: self.init_mem.clone(),
        }
    }

    pub fn initial(&self) -> AutState {
        AutState {
            state: self.init_state.clone(),
            mem: self.init_mem.clone(),
        }
    }
}

/// Connector names mapped to automata whose ports are process names.
pub type ConnectorMapping = BTreeMap<Name, ConstraintAutomaton>;

/// Current state and memory snapshot of one automaton.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AutState {
    pub state: Name,
    pub mem: MemorySnapshot,
}

impl fmt::Display for AutState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {{", self.state)?;
        for (i, (m, v)) in self.mem.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{m} = {v}")?;
        }
        f.write_str("}>")
    }
}

pub type AutomatonStateMap = BTreeMap<Name, AutState>;

/// Every automaton of `g` in its initial state.
pub fn initial_states(g: &ConnectorMapping) -> AutomatonStateMap {
    g.iter().map(|(name, a)| (name.clone(), a.initial())).collect()
}

/// Variable store of all processes, keyed by `(process, variable)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChorState(BTreeMap<(Name, Name), Value>);

impl ChorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, process: &str, var: &str) -> Option<&Value> {
        self.0.get(&(process.to_owned(), var.to_owned()))
    }

    pub fn set(&mut self, process: &str, var: &str, value: Value) {
        self.0.insert((process.to_owned(), var.to_owned()), value);
    }

    pub fn with(mut self, process: &str, var: &str, value: Value) -> Self {
        self.set(process, var, value);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &Value)> {
        self.0.iter().map(|((p, x), v)| (p.as_str(), x.as_str(), v))
    }

    /// Store of a single process.
    pub fn store_of(&self, process: &str) -> BTreeMap<Name, Value> {
        self.iter()
            .filter(|(p, _, _)| *p == process)
            .map(|(_, x, v)| (x.to_owned(), v.clone()))
            .collect()
    }

    pub fn processes(&self) -> BTreeSet<Name> {
        self.0.keys().map(|(p, _)| p.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("flow target {0} occurs twice in one constraint")]
    DuplicateTarget(Endpoint),
    #[error("invalid multicast: {0}")]
    InvalidMulticast(String),
}

/// A violated restriction on a constraint automaton.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum AutomatonViolation {
    /// A port occurs both as a source and as a target.
    MixedRole { port: Name },
    /// Two transitions leaving the same state use the same set of ports.
    Nondeterministic {
        state: Name,
        first: usize,
        second: usize,
    },
    UnknownState { transition: usize, state: Name },
    UnknownPort { transition: usize, port: Name },
    UnknownMem { transition: usize, mem: Name },
    UnknownInitState { state: Name },
    /// The initial snapshot does not cover exactly the declared cells.
    InitMemDomain { mem: Name },
}

impl fmt::Display for AutomatonViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutomatonViolation::MixedRole { port } => {
                write!(f, "port {port} is used both as sender and as receiver")
            }
            AutomatonViolation::Nondeterministic {
                state,
                first,
                second,
            } => write!(
                f,
                "transitions #{first} and #{second} leave state {state} with the same port set"
            ),
            AutomatonViolation::UnknownState { transition, state } => {
                write!(f, "transition #{transition} mentions undeclared state {state}")
            }
            AutomatonViolation::UnknownPort { transition, port } => {
                write!(f, "transition #{transition} mentions undeclared port {port}")
            }
            AutomatonViolation::UnknownMem { transition, mem } => {
                write!(f, "transition #{transition} mentions undeclared memory cell {mem}")
            }
            AutomatonViolation::UnknownInitState { state } => {
                write!(f, "initial state {state} is not declared")
            }
            AutomatonViolation::InitMemDomain { mem } => {
                write!(f, "initial memory snapshot does not match declared cell {mem}")
            }
        }
    }
}

/// Checks the role and determinism restrictions together with referential
/// closure. Target distinctness is enforced by `Constraint::new`.
pub fn validate_automaton(a: &ConstraintAutomaton) -> Vec<AutomatonViolation> {
    let mut out = Vec::new();

    for (port, role) in a.port_roles() {
        if role.is_none() {
            out.push(AutomatonViolation::MixedRole { port });
        }
    }

    for (i, t) in a.transitions.iter().enumerate() {
        for s in [&t.from, &t.to] {
            if !a.states.contains(s) {
                out.push(AutomatonViolation::UnknownState {
                    transition: i,
                    state: s.clone(),
                });
            }
        }
        for p in t.label.ports() {
            if !a.ports.contains(p) {
                out.push(AutomatonViolation::UnknownPort {
                    transition: i,
                    port: p.to_owned(),
                });
            }
        }
        for m in t.label.mems() {
            if !a.mems.contains(m) {
                out.push(AutomatonViolation::UnknownMem {
                    transition: i,
                    mem: m.to_owned(),
                });
            }
        }
        for (j, u) in a.transitions.iter().enumerate().skip(i + 1) {
            if t.from == u.from && t.label.ports() == u.label.ports() {
                out.push(AutomatonViolation::Nondeterministic {
                    state: t.from.clone(),
                    first: i,
                    second: j,
                });
            }
        }
    }

    if !a.states.contains(&a.init_state) {
        out.push(AutomatonViolation::UnknownInitState {
            state: a.init_state.clone(),
        });
    }
    let init_domain: BTreeSet<&Name> = a.init_mem.keys().collect();
    for m in a.mems.iter().filter(|m| !init_domain.contains(m)) {
        out.push(AutomatonViolation::InitMemDomain { mem: m.clone() });
    }
    for m in init_domain.into_iter().filter(|m| !a.mems.contains(*m)) {
        out.push(AutomatonViolation::InitMemDomain { mem: m.clone() });
    }

    out.sort();
    out.dedup();
    out
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum InteractionViolation {
    DuplicateReceiver { receiver: Name },
    InconsistentSends { sender: Name },
    SelfInteraction { process: Name },
}

impl fmt::Display for InteractionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InteractionViolation::DuplicateReceiver { receiver } => {
                write!(f, "{receiver} receives more than once in one interaction set")
            }
            InteractionViolation::InconsistentSends { sender } => {
                write!(f, "{sender} sends different payloads in one interaction set")
            }
            InteractionViolation::SelfInteraction { process } => {
                write!(f, "{process} communicates with itself")
            }
        }
    }
}

/// Distinct receivers and consistent sends.
pub fn validate_interaction_set(etas: &EtaSet) -> Vec<InteractionViolation> {
    #[derive(PartialEq)]
    enum Payload<'a> {
        Value(&'a Expr),
        Label(&'a str),
    }

    let mut out = Vec::new();
    let mut receivers = BTreeSet::new();
    let mut payloads: BTreeMap<&str, Payload> = BTreeMap::new();
    for eta in etas {
        if !receivers.insert(eta.receiver()) {
            out.push(InteractionViolation::DuplicateReceiver {
                receiver: eta.receiver().to_owned(),
            });
        }
        let (sender, payload) = match eta {
            Interaction::Com { sender, expr, .. } => (sender, Payload::Value(expr)),
            Interaction::Sel { sender, label, .. } => (sender, Payload::Label(label)),
            _ => continue,
        };
        if sender == eta.receiver() {
            out.push(InteractionViolation::SelfInteraction {
                process: sender.clone(),
            });
        }
        match payloads.get(sender.as_str()) {
            Some(seen) if *seen != payload => out.push(InteractionViolation::InconsistentSends {
                sender: sender.clone(),
            }),
            Some(_) => {}
            None => {
                payloads.insert(sender, payload);
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// What a multicast sends.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Value(Expr),
    Label(Name),
}

/// One receiver of a multicast; `var` defaults to the sent variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receiver {
    pub process: Name,
    pub var: Option<Name>,
}

impl Receiver {
    pub fn new(process: &str) -> Self {
        Receiver {
            process: process.into(),
            var: None,
        }
    }

    pub fn into_var(process: &str, var: &str) -> Self {
        Receiver {
            process: process.into(),
            var: Some(var.into()),
        }
    }
}

/// Expands `p.e -> {q1.x1, ..}` or `p -> {q1, ..}[l]` into one interaction
/// per receiver.
pub fn desugar_multicast(
    sender: &str,
    payload: &Payload,
    receivers: &[Receiver],
) -> Result<EtaSet, ModelError> {
    if receivers.is_empty() {
        return Err(ModelError::InvalidMulticast("no receivers".into()));
    }
    let mut seen = BTreeSet::new();
    let mut out = EtaSet::new();
    for r in receivers {
        if r.process == sender {
            return Err(ModelError::InvalidMulticast(format!(
                "{sender} is among its own receivers"
            )));
        }
        if !seen.insert(r.process.as_str()) {
            return Err(ModelError::InvalidMulticast(format!(
                "duplicate receiver {}",
                r.process
            )));
        }
        let eta = match payload {
            Payload::Label(l) => {
                if r.var.is_some() {
                    return Err(ModelError::InvalidMulticast(format!(
                        "selection receiver {} cannot name a variable",
                        r.process
                    )));
                }
                Interaction::sel(sender, &r.process, l)
            }
            Payload::Value(e) => {
                let var = match (&r.var, e) {
                    (Some(x), _) => x.clone(),
                    (None, Expr::Var(x)) => x.clone(),
                    (None, _) => {
                        return Err(ModelError::InvalidMulticast(format!(
                            "receiver {} needs a variable for a compound expression",
                            r.process
                        )))
                    }
                };
                Interaction::com(sender, e.clone(), &r.process, &var)
            }
        };
        out.insert(eta);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn automaton(
        ports: &[&str],
        mems: &[&str],
        states: &[&str],
        transitions: Vec<(&str, Vec<Flow>, &str)>,
    ) -> ConstraintAutomaton {
        ConstraintAutomaton {
            states: states.iter().map(|s| s.to_string()).collect(),
            ports: ports.iter().map(|s| s.to_string()).collect(),
            mems: mems.iter().map(|s| s.to_string()).collect(),
            transitions: transitions
                .into_iter()
                .map(|(from, flows, to)| Transition {
                    from: from.into(),
                    label: Constraint::new(flows).unwrap(),
                    to: to.into(),
                })
                .collect(),
            init_state: states[0].into(),
            init_mem: mems.iter().map(|m| (m.to_string(), Value::Bottom)).collect(),
        }
    }

    #[test]
    fn barrier_is_well_formed() {
        let barrier = automaton(
            &["p1", "p2", "p3", "p4"],
            &[],
            &["1"],
            vec![("1", vec![Flow::ports("p1", "p2"), Flow::ports("p3", "p4")], "1")],
        );
        assert_eq!(validate_automaton(&barrier), vec![]);
    }

    #[test]
    fn port_used_in_both_directions() {
        let a = automaton(
            &["p1", "p2", "p3"],
            &[],
            &["1"],
            vec![
                ("1", vec![Flow::ports("p1", "p2")], "1"),
                ("1", vec![Flow::ports("p2", "p3")], "1"),
            ],
        );
        assert_eq!(
            validate_automaton(&a),
            vec![AutomatonViolation::MixedRole { port: "p2".into() }]
        );
    }

    #[test]
    fn same_port_set_from_one_state() {
        let a = automaton(
            &["p1"],
            &["m", "n"],
            &["1", "2", "3"],
            vec![
                ("1", vec![Flow::to_mem("p1", "m")], "2"),
                ("1", vec![Flow::to_mem("p1", "n")], "3"),
            ],
        );
        assert_eq!(
            validate_automaton(&a),
            vec![AutomatonViolation::Nondeterministic {
                state: "1".into(),
                first: 0,
                second: 1
            }]
        );
    }

    #[test]
    fn overlapping_port_sets_are_fine() {
        // Async2 style: {p2} and {p1, p2} leave the same state.
        let a = automaton(
            &["p1", "p2"],
            &["m1"],
            &["1", "2"],
            vec![
                ("2", vec![Flow::from_mem("m1", "p2")], "1"),
                ("2", vec![Flow::from_mem("m1", "p2"), Flow::to_mem("p1", "m1")], "2"),
                ("1", vec![Flow::to_mem("p1", "m1")], "2"),
            ],
        );
        assert!(validate_automaton(&a).is_empty());
    }

    #[test]
    fn referential_closure() {
        let mut a = automaton(&["p1"], &["m"], &["1"], vec![("1", vec![Flow::to_mem("p1", "m")], "9")]);
        a.ports.clear();
        a.init_mem.clear();
        let v = validate_automaton(&a);
        assert!(v.contains(&AutomatonViolation::UnknownState {
            transition: 0,
            state: "9".into()
        }));
        assert!(v.contains(&AutomatonViolation::UnknownPort {
            transition: 0,
            port: "p1".into()
        }));
        assert!(v.contains(&AutomatonViolation::InitMemDomain { mem: "m".into() }));
    }

    #[test]
    fn zero_transitions_are_vacuously_fine() {
        let a = automaton(&["p1"], &[], &["1"], vec![]);
        assert!(validate_automaton(&a).is_empty());
    }

    #[test]
    fn duplicate_targets_rejected_sources_may_repeat() {
        assert_eq!(
            Constraint::new([Flow::to_mem("p1", "m"), Flow::to_mem("p2", "m")]),
            Err(ModelError::DuplicateTarget(Endpoint::Mem("m".into())))
        );
        assert!(Constraint::new([Flow::to_mem("p", "m1"), Flow::to_mem("p", "m2")]).is_ok());
    }

    fn com(p: &str, x: &str, q: &str) -> Interaction {
        Interaction::com(p, Expr::var(x), q, x)
    }

    #[test]
    fn interaction_set_conditions() {
        let ok: EtaSet = [com("a", "money", "b"), com("c", "book", "s")].into();
        assert!(validate_interaction_set(&ok).is_empty());

        let twice: EtaSet = [com("a", "money", "b"), com("c", "money", "b")].into();
        assert_eq!(
            validate_interaction_set(&twice),
            vec![InteractionViolation::DuplicateReceiver { receiver: "b".into() }]
        );

        let inconsistent: EtaSet = [com("c", "price", "a"), com("c", "book", "s")].into();
        assert_eq!(
            validate_interaction_set(&inconsistent),
            vec![InteractionViolation::InconsistentSends { sender: "c".into() }]
        );

        let multicast: EtaSet = [
            Interaction::sel("a", "b", "ok"),
            Interaction::sel("a", "c", "ok"),
            Interaction::sel("a", "s", "ok"),
        ]
        .into();
        assert!(validate_interaction_set(&multicast).is_empty());
    }

    #[test]
    fn multicast_expansion() {
        let etas = desugar_multicast(
            "a",
            &Payload::Label("ok".into()),
            &[Receiver::new("c"), Receiver::new("b"), Receiver::new("s")],
        )
        .unwrap();
        let expected: EtaSet = [
            Interaction::sel("a", "c", "ok"),
            Interaction::sel("a", "b", "ok"),
            Interaction::sel("a", "s", "ok"),
        ]
        .into();
        assert_eq!(etas, expected);

        let single = desugar_multicast("a", &Payload::Value(Expr::var("x")), &[Receiver::new("b")]).unwrap();
        assert_eq!(single, [com("a", "x", "b")].into());

        let named = desugar_multicast(
            "a",
            &Payload::Value(Expr::var("x")),
            &[Receiver::into_var("b", "y"), Receiver::into_var("c", "z")],
        )
        .unwrap();
        assert_eq!(
            named,
            [
                Interaction::com("a", Expr::var("x"), "b", "y"),
                Interaction::com("a", Expr::var("x"), "c", "z")
            ]
            .into()
        );
        assert!(validate_interaction_set(&named).is_empty());

        assert!(matches!(
            desugar_multicast("a", &Payload::Label("ok".into()), &[Receiver::new("b"), Receiver::new("b")]),
            Err(ModelError::InvalidMulticast(_))
        ));
    }

    #[test]
    fn size_weights() {
        let c = Choreography::prefix(
            [
                com("a", "x", "b"),
                Interaction::RecvVal {
                    receiver: "c".into(),
                    var: "x".into(),
                    value: Value::Int(1),
                },
            ]
            .into(),
            "g",
            Choreography::End,
        );
        assert_eq!(c.size(), 1 + 2 + 1 + 1);
    }
}
