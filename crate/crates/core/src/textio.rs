//! Concrete syntax for programs (`.cr`), standalone automata (`.ca`) and
//! Connected Processes networks (`.cp`).
//!
//! ```text
//! program    := automaton* ["connectors" "{" binding* "}"] ["init" "{" assign* "}"] "main" "{" chor "}"
//! automaton  := "automaton" ID "{" item* "}"
//! item       := "ports" port ("," port)* ";" | "mems" ID ("," ID)* ";"
//!             | "states" state ("," state)* ";" | "init" state ["{" ID "=" value ("," ...)* "}"] ";"
//!             | state "->" state ":" flow ("&" flow)* ";"
//! flow       := endpoint ">" endpoint
//! binding    := ID "=" ID "[" ID "/" ID ("," ID "/" ID)* "]" ";"
//! assign     := ID "." ID "=" value ";"
//! chor       := etaset "thru" ID ";" chor
//!             | "if" ID "." expr "then" "{" chor "}" "else" "{" chor "}"
//!             | "def" ID "=" "{" chor "}" "in" "{" chor "}" | ID | "0"
//! etaset     := eta | "{" eta ("," eta)* "}"
//! eta        := ID "." expr "->" rcvlist | ID "->" rcvlist "[" ID "]"
//!             | ID "." ID "?" value | ID "?" ID          (runtime terms)
//! rcvlist    := rcv | "{" rcv ("," rcv)* "}"          rcv := ID ["." ID]
//! ```
//!
//! A trailing `; 0` may be left out before a closing brace. Lines starting
//! with `#` are comments. Ports of projected connectors are written
//! `o^p@conn` / `i^p@conn`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::cp_engine::{Network, Process};
use crate::epp::{Behaviour, PortName};
use crate::model::{
    desugar_multicast, validate_automaton, validate_interaction_set, AutomatonViolation, BinOp,
    ChorState, Choreography, ConnectorMapping, Constraint, ConstraintAutomaton, Endpoint, EtaSet,
    Expr, Flow, Interaction, InteractionViolation, Name, Payload, Receiver, Transition, UnOp, Value,
};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("{line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("undefined connector `{0}`")]
    UndefinedConnector(Name),
    #[error("undefined automaton `{0}`")]
    UndefinedAutomaton(Name),
    #[error("connector `{connector}`: {message}")]
    Substitution { connector: Name, message: String },
    #[error("automaton `{name}` is not well-formed: {}", join(violations))]
    IllFormed {
        name: Name,
        violations: Vec<AutomatonViolation>,
    },
    #[error("{line}:{col}: invalid interaction set: {}", join(violations))]
    InteractionSet {
        line: usize,
        col: usize,
        violations: Vec<InteractionViolation>,
    },
    #[error("duplicate definition of `{0}`")]
    Duplicate(Name),
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// A named automaton instantiated with processes: `a2c = Async1[a/p1, c/p2]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Binding {
    pub connector: Name,
    pub automaton: Name,
    /// `(process, port)` pairs in source order.
    pub substitution: Vec<(Name, Name)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub automata: Vec<(Name, ConstraintAutomaton)>,
    pub bindings: Vec<Binding>,
    pub init: ChorState,
    pub main: Choreography,
}

impl Program {
    pub fn automaton(&self, name: &str) -> Option<&ConstraintAutomaton> {
        self.automata.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    /// Instantiates every binding. Bindings are checked at parse time, so
    /// this only fails for programs assembled by hand.
    pub fn try_connectors(&self) -> Result<ConnectorMapping, TextError> {
        let mut g = ConnectorMapping::new();
        for b in &self.bindings {
            let a = self
                .automaton(&b.automaton)
                .ok_or_else(|| TextError::UndefinedAutomaton(b.automaton.clone()))?;
            let rename = check_substitution(b, a)?;
            g.insert(b.connector.clone(), a.rename_ports(&rename));
        }
        Ok(g)
    }

    pub fn connectors(&self) -> ConnectorMapping {
        self.try_connectors()
            .expect("bindings were validated when the program was parsed")
    }

    /// Same program with one binding replaced (or added).
    pub fn with_binding(mut self, binding: Binding) -> Program {
        match self
            .bindings
            .iter_mut()
            .find(|b| b.connector == binding.connector)
        {
            Some(slot) => *slot = binding,
            None => self.bindings.push(binding),
        }
        self
    }
}

/// Port map of a binding, checked to be a bijection onto the automaton's ports.
fn check_substitution(b: &Binding, a: &ConstraintAutomaton) -> Result<BTreeMap<Name, Name>, TextError> {
    let err = |message: String| TextError::Substitution {
        connector: b.connector.clone(),
        message,
    };
    let mut rename = BTreeMap::new();
    let mut processes = BTreeSet::new();
    for (process, port) in &b.substitution {
        if !a.ports.contains(port) {
            return Err(err(format!("`{}` has no port `{port}`", b.automaton)));
        }
        if rename.insert(port.clone(), process.clone()).is_some() {
            return Err(err(format!("port `{port}` substituted twice")));
        }
        if !processes.insert(process.clone()) {
            return Err(err(format!("process `{process}` bound to two ports")));
        }
    }
    if rename.len() != a.ports.len() {
        let missing: Vec<_> = a.ports.iter().filter(|p| !rename.contains_key(*p)).cloned().collect();
        return Err(err(format!(
            "arity mismatch: `{}` has {} ports, missing {}",
            b.automaton,
            a.ports.len(),
            missing.join(", ")
        )));
    }
    Ok(rename)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Accept runtime terms `q.x ? v` and `q ? l`.
    pub runtime: bool,
}

pub fn parse_program(text: &str) -> Result<Program, TextError> {
    parse_program_with(text, ParseOptions::default())
}

pub fn parse_program_with(text: &str, opts: ParseOptions) -> Result<Program, TextError> {
    let mut p = Parser::new(text, opts)?;
    let program = p.program()?;
    p.expect_eof()?;
    Ok(program)
}

/// Parses a single choreography term (no `main { }` wrapper).
pub fn parse_choreography(text: &str, opts: ParseOptions) -> Result<Choreography, TextError> {
    let mut p = Parser::new(text, opts)?;
    let c = p.chor()?;
    p.expect_eof()?;
    Ok(c)
}

/// Parses exactly one automaton block.
pub fn parse_automaton(text: &str) -> Result<ConstraintAutomaton, TextError> {
    let mut all = parse_automata(text)?;
    if all.len() != 1 {
        return Err(TextError::Syntax {
            line: 1,
            col: 1,
            message: format!("expected exactly one automaton, found {}", all.len()),
        });
    }
    Ok(all.remove(0).1)
}

/// Parses a `.ca` file: any number of automaton blocks.
pub fn parse_automata(text: &str) -> Result<Vec<(Name, ConstraintAutomaton)>, TextError> {
    let mut p = Parser::new(text, ParseOptions::default())?;
    let mut out: Vec<(Name, ConstraintAutomaton)> = Vec::new();
    while !p.at_eof() {
        let (name, a) = p.automaton()?;
        if out.iter().any(|(n, _)| *n == name) {
            return Err(TextError::Duplicate(name));
        }
        out.push((name, a));
    }
    Ok(out)
}

pub fn parse_expr(text: &str) -> Result<Expr, TextError> {
    let mut p = Parser::new(text, ParseOptions::default())?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses a `.cp` network.
pub fn parse_network(text: &str) -> Result<Network, TextError> {
    let mut p = Parser::new(text, ParseOptions::default())?;
    let n = p.network()?;
    p.expect_eof()?;
    Ok(n)
}

pub fn parse_behaviour(text: &str) -> Result<Behaviour, TextError> {
    let mut p = Parser::new(text, ParseOptions::default())?;
    let b = p.behaviour()?;
    p.expect_eof()?;
    Ok(b)
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Label(String),
    Token(u64),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Copy, Debug)]
struct Pos {
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 22] = [
    "->", "!=", "{", "}", "[", "]", "(", ")", ",", ";", ".", ":", ">", "!", "?", "=", "<", "+", "-",
    "&", "/", "^",
];

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, TextError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let syntax = |line, col, message: String| TextError::Syntax { line, col, message };

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            advance(1, &mut i, &mut col);
        } else if c == '#' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let digits: String = chars[start..j].iter().collect();
            let n = digits
                .parse()
                .map_err(|_| syntax(line, col, format!("token #{digits} out of range")))?;
            out.push((Tok::Token(n), pos));
            advance(j - i, &mut i, &mut col);
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let digits: String = chars[i..j].iter().collect();
            let n = digits
                .parse()
                .map_err(|_| syntax(line, col, format!("integer {digits} out of range")))?;
            out.push((Tok::Int(n), pos));
            advance(j - i, &mut i, &mut col);
        } else if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            out.push((Tok::Ident(chars[i..j].iter().collect()), pos));
            advance(j - i, &mut i, &mut col);
        } else if c == '\'' {
            let mut j = i + 1;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            if j == i + 1 {
                return Err(syntax(line, col, "empty label literal".into()));
            }
            out.push((Tok::Label(chars[i + 1..j].iter().collect()), pos));
            advance(j - i, &mut i, &mut col);
        } else if c == '"' {
            let mut s = String::new();
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None | Some('\n') => return Err(syntax(line, col, "unterminated string".into())),
                    Some('"') => break,
                    Some('\\') => {
                        let esc = match chars.get(j + 1) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => return Err(syntax(line, col, "bad escape in string".into())),
                        };
                        s.push(esc);
                        j += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        j += 1;
                    }
                }
            }
            out.push((Tok::Str(s), pos));
            advance(j + 1 - i, &mut i, &mut col);
        } else if c == '@' {
            out.push((Tok::Sym("@"), pos));
            advance(1, &mut i, &mut col);
        } else {
            let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    out.push((Tok::Sym(s), pos));
                    advance(s.len(), &mut i, &mut col);
                }
                None => return Err(syntax(line, col, format!("unexpected character `{c}`"))),
            }
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

const KEYWORDS: [&str; 17] = [
    "thru", "if", "then", "else", "def", "in", "main", "connectors", "init", "automaton", "ports",
    "mems", "states", "true", "false", "bot", "network",
];

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    opts: ParseOptions,
}

impl Parser {
    fn new(text: &str, opts: ParseOptions) -> Result<Self, TextError> {
        Ok(Parser {
            toks: lex(text)?,
            i: 0,
            opts,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i < self.toks.len() - 1 {
            self.i += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, TextError> {
        let pos = self.pos();
        Err(TextError::Syntax {
            line: pos.line,
            col: pos.col,
            message: message.into(),
        })
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Label(l) => format!("`'{l}`"),
            Tok::Token(n) => format!("`#{n}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn expect_eof(&self) -> Result<(), TextError> {
        if self.at_eof() {
            Ok(())
        } else {
            self.error(format!("unexpected {}", Self::describe(self.peek())))
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn sym(&mut self, s: &str) -> Result<(), TextError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", Self::describe(self.peek())))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn kw(&mut self, kw: &str) -> Result<(), TextError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", Self::describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<Name, TextError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            t => self.error(format!("expected identifier, found {}", Self::describe(&t))),
        }
    }

    fn is_ident(&self) -> bool {
        matches!(self.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()))
    }

    /// A port name: plain identifier or `o^p@conn` / `i^p@conn`.
    fn port(&mut self) -> Result<Name, TextError> {
        let head = self.ident()?;
        if !self.is_sym("^") {
            return Ok(head);
        }
        self.bump();
        let process = self.ident()?;
        self.sym("@")?;
        let connector = self.ident()?;
        let rendered = format!("{head}^{process}@{connector}");
        if PortName::parse(&rendered).is_none() {
            return self.error(format!("port `{rendered}` must start with `o^` or `i^`"));
        }
        Ok(rendered)
    }

    fn state_name(&mut self) -> Result<Name, TextError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(n.to_string())
            }
            _ => self.ident(),
        }
    }

    fn value(&mut self) -> Result<Value, TextError> {
        let v = match self.peek().clone() {
            Tok::Int(n) => Value::Int(n),
            Tok::Sym("-") => {
                self.bump();
                match self.peek().clone() {
                    Tok::Int(n) => Value::Int(-n),
                    t => return self.error(format!("expected integer after `-`, found {}", Self::describe(&t))),
                }
            }
            Tok::Str(s) => Value::Str(s),
            Tok::Label(l) => Value::Label(l),
            Tok::Token(n) => Value::Token(n),
            Tok::Ident(s) if s == "true" => Value::Bool(true),
            Tok::Ident(s) if s == "false" => Value::Bool(false),
            Tok::Ident(s) if s == "bot" => Value::Bottom,
            t => return self.error(format!("expected a value, found {}", Self::describe(&t))),
        };
        self.bump();
        Ok(v)
    }

    // -- expressions

    fn expr(&mut self) -> Result<Expr, TextError> {
        self.expr_prec(1)
    }

    fn binop(&self) -> Option<BinOp> {
        match self.peek() {
            Tok::Sym("+") => Some(BinOp::Add),
            Tok::Sym("-") => Some(BinOp::Sub),
            Tok::Sym("=") => Some(BinOp::Eq),
            Tok::Sym("!=") => Some(BinOp::Ne),
            Tok::Sym("<") => Some(BinOp::Lt),
            Tok::Ident(s) if s == "and" => Some(BinOp::And),
            Tok::Ident(s) if s == "or" => Some(BinOp::Or),
            _ => None,
        }
    }

    fn expr_prec(&mut self, min: u8) -> Result<Expr, TextError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            if op.precedence() < min {
                break;
            }
            self.bump();
            let rhs = self.expr_prec(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, TextError> {
        if self.eat_kw("not") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        if self.eat_sym("(") {
            let e = self.expr()?;
            self.sym(")")?;
            return Ok(e);
        }
        if self.is_ident() && !matches!(self.peek(), Tok::Ident(s) if s == "and" || s == "or") {
            return Ok(Expr::Var(self.ident()?));
        }
        Ok(Expr::Const(self.value()?))
    }

    // -- automata

    fn automaton(&mut self) -> Result<(Name, ConstraintAutomaton), TextError> {
        self.kw("automaton")?;
        let name = self.ident()?;
        self.sym("{")?;
        let mut ports: Vec<Name> = Vec::new();
        let mut mems: Vec<Name> = Vec::new();
        let mut states: Vec<Name> = Vec::new();
        let mut init: Option<(Name, Vec<(Name, Value)>)> = None;
        let mut raw: Vec<(Name, Vec<(Name, Name, Pos)>, Name)> = Vec::new();

        while !self.eat_sym("}") {
            if self.eat_kw("ports") {
                ports.extend(self.comma_list(Self::port)?);
            } else if self.eat_kw("mems") {
                mems.extend(self.comma_list(Self::ident)?);
            } else if self.eat_kw("states") {
                states.extend(self.comma_list(Self::state_name)?);
            } else if self.eat_kw("init") {
                if init.is_some() {
                    return self.error("duplicate `init`");
                }
                let s = self.state_name()?;
                let mut values = Vec::new();
                if self.eat_sym("{") {
                    if !self.is_sym("}") {
                        loop {
                            let m = self.ident()?;
                            self.sym("=")?;
                            values.push((m, self.value()?));
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    self.sym("}")?;
                }
                init = Some((s, values));
            } else {
                let from = self.state_name()?;
                self.sym("->")?;
                let to = self.state_name()?;
                self.sym(":")?;
                let mut flows = Vec::new();
                loop {
                    let pos = self.pos();
                    let src = self.port()?;
                    self.sym(">")?;
                    let dst = self.port()?;
                    flows.push((src, dst, pos));
                    if !self.eat_sym("&") {
                        break;
                    }
                }
                raw.push((from, flows, to));
            }
            self.sym(";")?;
        }

        let Some((init_state, init_values)) = init else {
            return self.error(format!("automaton `{name}` has no `init` declaration"));
        };
        let port_set: BTreeSet<Name> = ports.iter().cloned().collect();
        let mem_set: BTreeSet<Name> = mems.iter().cloned().collect();
        if port_set.len() != ports.len() || mem_set.len() != mems.len() || port_set.iter().any(|p| mem_set.contains(p)) {
            return Err(TextError::Duplicate(format!("port or cell name in `{name}`")));
        }
        let endpoint = |n: &str, pos: Pos| -> Result<Endpoint, TextError> {
            if port_set.contains(n) {
                Ok(Endpoint::Port(n.to_owned()))
            } else if mem_set.contains(n) {
                Ok(Endpoint::Mem(n.to_owned()))
            } else {
                Err(TextError::Syntax {
                    line: pos.line,
                    col: pos.col,
                    message: format!("`{n}` is neither a declared port nor a declared cell"),
                })
            }
        };
        let mut transitions = Vec::new();
        for (from, flows, to) in raw {
            let mut fs = Vec::new();
            let first = flows[0].2;
            for (s, d, pos) in flows {
                fs.push(Flow::new(endpoint(&s, pos)?, endpoint(&d, pos)?));
            }
            let label = Constraint::new(fs).map_err(|e| TextError::Syntax {
                line: first.line,
                col: first.col,
                message: e.to_string(),
            })?;
            transitions.push(Transition { from, label, to });
        }
        let mut init_mem: BTreeMap<Name, Value> = mems.iter().map(|m| (m.clone(), Value::Bottom)).collect();
        for (m, v) in init_values {
            if !mem_set.contains(&m) {
                return self.error(format!("initial value for undeclared cell `{m}`"));
            }
            init_mem.insert(m, v);
        }
        let a = ConstraintAutomaton {
            states: states.into_iter().collect(),
            ports: port_set,
            mems: mem_set,
            transitions,
            init_state,
            init_mem,
        };
        let violations = validate_automaton(&a);
        if !violations.is_empty() {
            return Err(TextError::IllFormed { name, violations });
        }
        Ok((name, a))
    }

    fn comma_list<T>(&mut self, item: fn(&mut Self) -> Result<T, TextError>) -> Result<Vec<T>, TextError> {
        let mut out = vec![item(self)?];
        while self.eat_sym(",") {
            out.push(item(self)?);
        }
        Ok(out)
    }

    // -- programs

    fn program(&mut self) -> Result<Program, TextError> {
        let mut automata: Vec<(Name, ConstraintAutomaton)> = Vec::new();
        while self.is_kw("automaton") {
            let (name, a) = self.automaton()?;
            if automata.iter().any(|(n, _)| *n == name) {
                return Err(TextError::Duplicate(name));
            }
            automata.push((name, a));
        }
        let mut bindings: Vec<Binding> = Vec::new();
        if self.eat_kw("connectors") {
            self.sym("{")?;
            while !self.eat_sym("}") {
                let connector = self.ident()?;
                self.sym("=")?;
                let automaton = self.ident()?;
                self.sym("[")?;
                let mut substitution = Vec::new();
                loop {
                    let process = self.ident()?;
                    self.sym("/")?;
                    let port = self.port()?;
                    substitution.push((process, port));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.sym("]")?;
                self.sym(";")?;
                if bindings.iter().any(|b| b.connector == connector) {
                    return Err(TextError::Duplicate(connector));
                }
                bindings.push(Binding {
                    connector,
                    automaton,
                    substitution,
                });
            }
        }
        let mut init = ChorState::new();
        if self.eat_kw("init") {
            self.sym("{")?;
            while !self.eat_sym("}") {
                let p = self.ident()?;
                self.sym(".")?;
                let x = self.ident()?;
                self.sym("=")?;
                let pos = self.pos();
                let v = self.value()?;
                if v.is_bottom() {
                    return Err(TextError::Syntax {
                        line: pos.line,
                        col: pos.col,
                        message: "`bot` cannot be stored in a process variable".into(),
                    });
                }
                self.sym(";")?;
                init.set(&p, &x, v);
            }
        }
        self.kw("main")?;
        self.sym("{")?;
        let main = self.chor()?;
        self.sym("}")?;

        let program = Program {
            automata,
            bindings,
            init,
            main,
        };
        let g = program.try_connectors()?;
        for gamma in program.main.connectors() {
            if !g.contains_key(&gamma) {
                return Err(TextError::UndefinedConnector(gamma));
            }
        }
        Ok(program)
    }

    // -- choreographies

    fn chor(&mut self) -> Result<Choreography, TextError> {
        if let Tok::Int(0) = self.peek() {
            self.bump();
            return Ok(Choreography::End);
        }
        if self.eat_kw("if") {
            let process = self.ident()?;
            self.sym(".")?;
            let guard = self.expr()?;
            self.kw("then")?;
            let then_ = self.braced_chor()?;
            self.kw("else")?;
            let else_ = self.braced_chor()?;
            return Ok(Choreography::cond(&process, guard, then_, else_));
        }
        if self.eat_kw("def") {
            let name = self.ident()?;
            self.sym("=")?;
            let body = self.braced_chor()?;
            self.kw("in")?;
            let cont = self.braced_chor()?;
            return Ok(Choreography::def(&name, body, cont));
        }
        let starts_eta = self.is_sym("{")
            || (self.is_ident() && matches!(self.peek_at(1), Tok::Sym(".") | Tok::Sym("->") | Tok::Sym("?")));
        if !starts_eta {
            if self.is_ident() {
                return Ok(Choreography::Call(self.ident()?));
            }
            return self.error(format!("expected a choreography, found {}", Self::describe(self.peek())));
        }
        let pos = self.pos();
        let etas = self.etaset()?;
        let violations = validate_interaction_set(&etas.0);
        if !violations.is_empty() || !etas.1.is_empty() {
            let mut violations = violations;
            violations.extend(etas.1);
            violations.sort();
            violations.dedup();
            return Err(TextError::InteractionSet {
                line: pos.line,
                col: pos.col,
                violations,
            });
        }
        self.kw("thru")?;
        let connector = self.ident()?;
        let cont = if self.eat_sym(";") {
            if self.is_sym("}") || self.at_eof() {
                Choreography::End
            } else {
                self.chor()?
            }
        } else {
            Choreography::End
        };
        Ok(Choreography::prefix(etas.0, &connector, cont))
    }

    fn braced_chor(&mut self) -> Result<Choreography, TextError> {
        self.sym("{")?;
        let c = self.chor()?;
        self.sym("}")?;
        Ok(c)
    }

    /// Parsed interactions plus duplicate-receiver violations that a set
    /// representation would otherwise hide.
    fn etaset(&mut self) -> Result<(EtaSet, Vec<InteractionViolation>), TextError> {
        let mut out = EtaSet::new();
        let mut dups = Vec::new();
        let mut add = |etas: EtaSet, out: &mut EtaSet| {
            for eta in etas {
                if out.contains(&eta) {
                    dups.push(InteractionViolation::DuplicateReceiver {
                        receiver: eta.receiver().to_owned(),
                    });
                }
                out.insert(eta);
            }
        };
        if self.eat_sym("{") {
            loop {
                let etas = self.eta()?;
                add(etas, &mut out);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.sym("}")?;
        } else {
            let etas = self.eta()?;
            add(etas, &mut out);
        }
        Ok((out, dups))
    }

    fn eta(&mut self) -> Result<EtaSet, TextError> {
        let pos = self.pos();
        let sender = self.ident()?;
        // q ? l
        if self.is_sym("?") {
            if !self.opts.runtime {
                return self.error("runtime term `q ? l` is only accepted with runtime parsing enabled");
            }
            self.bump();
            let label = self.ident()?;
            return Ok([Interaction::RecvSel {
                receiver: sender,
                label,
            }]
            .into());
        }
        // p -> rcvlist[l]
        if self.eat_sym("->") {
            let receivers = self.rcvlist()?;
            self.sym("[")?;
            let label = self.ident()?;
            self.sym("]")?;
            return desugar_multicast(&sender, &Payload::Label(label), &receivers).map_err(|e| TextError::Syntax {
                line: pos.line,
                col: pos.col,
                message: e.to_string(),
            });
        }
        self.sym(".")?;
        // q.x ? v
        if self.is_ident() && matches!(self.peek_at(1), Tok::Sym("?")) {
            if !self.opts.runtime {
                return self.error("runtime term `q.x ? v` is only accepted with runtime parsing enabled");
            }
            let var = self.ident()?;
            self.sym("?")?;
            let vpos = self.pos();
            let value = self.value()?;
            if value.is_bottom() {
                return Err(TextError::Syntax {
                    line: vpos.line,
                    col: vpos.col,
                    message: "a pending receive cannot carry `bot`".into(),
                });
            }
            return Ok([Interaction::RecvVal {
                receiver: sender,
                var,
                value,
            }]
            .into());
        }
        let expr = self.expr()?;
        self.sym("->")?;
        let receivers = self.rcvlist()?;
        desugar_multicast(&sender, &Payload::Value(expr), &receivers).map_err(|e| TextError::Syntax {
            line: pos.line,
            col: pos.col,
            message: e.to_string(),
        })
    }

    fn rcvlist(&mut self) -> Result<Vec<Receiver>, TextError> {
        let one = |p: &mut Self| -> Result<Receiver, TextError> {
            let process = p.ident()?;
            let var = if p.eat_sym(".") { Some(p.ident()?) } else { None };
            Ok(Receiver { process, var })
        };
        if self.eat_sym("{") {
            let mut out = vec![one(self)?];
            while self.eat_sym(",") {
                out.push(one(self)?);
            }
            self.sym("}")?;
            Ok(out)
        } else {
            Ok(vec![one(self)?])
        }
    }

    // -- networks

    fn network(&mut self) -> Result<Network, TextError> {
        self.kw("network")?;
        self.sym("{")?;
        let mut processes = BTreeMap::new();
        while !self.eat_sym("}") {
            let name = self.ident()?;
            let mut store = BTreeMap::new();
            if self.eat_sym("[") {
                if !self.is_sym("]") {
                    loop {
                        let x = self.ident()?;
                        self.sym("=")?;
                        store.insert(x, self.value()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.sym("]")?;
            }
            self.sym("{")?;
            let behaviour = self.behaviour()?;
            self.sym("}")?;
            if processes.insert(name.clone(), Process { store, behaviour }).is_some() {
                return Err(TextError::Duplicate(name));
            }
        }
        Ok(Network { processes })
    }

    fn behaviour(&mut self) -> Result<Behaviour, TextError> {
        if let Tok::Int(0) = self.peek() {
            self.bump();
            return Ok(Behaviour::End);
        }
        if self.eat_kw("if") {
            let guard = self.expr()?;
            self.kw("then")?;
            let then_ = self.braced_behaviour()?;
            self.kw("else")?;
            let else_ = self.braced_behaviour()?;
            return Ok(Behaviour::Cond {
                guard,
                then_: Box::new(then_),
                else_: Box::new(else_),
            });
        }
        if self.eat_kw("def") {
            let name = self.ident()?;
            self.sym("=")?;
            let body = self.braced_behaviour()?;
            self.kw("in")?;
            let cont = self.braced_behaviour()?;
            return Ok(Behaviour::Def {
                name,
                body: Box::new(body),
                cont: Box::new(cont),
            });
        }
        if self.is_ident() && !matches!(self.peek_at(1), Tok::Sym("^")) {
            return Ok(Behaviour::Call(self.ident()?));
        }
        let pos = self.pos();
        let raw = self.port()?;
        let Some(port) = PortName::parse(&raw) else {
            return Err(TextError::Syntax {
                line: pos.line,
                col: pos.col,
                message: format!("`{raw}` is not a process port"),
            });
        };
        if self.eat_sym("!") {
            if self.eat_sym("[") {
                let label = self.ident()?;
                self.sym("]")?;
                let cont = self.seq_cont()?;
                return Ok(Behaviour::SelSend {
                    port,
                    label,
                    cont: Box::new(cont),
                });
            }
            let expr = self.expr()?;
            let cont = self.seq_cont()?;
            return Ok(Behaviour::Send {
                port,
                expr,
                cont: Box::new(cont),
            });
        }
        self.sym("?")?;
        if self.eat_sym("{") {
            let mut branches = BTreeMap::new();
            loop {
                let label = self.ident()?;
                self.sym(":")?;
                let b = self.braced_behaviour()?;
                if branches.insert(label.clone(), b).is_some() {
                    return Err(TextError::Duplicate(format!("branch label `{label}`")));
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.sym("}")?;
            return Ok(Behaviour::Branch { port, branches });
        }
        let var = self.ident()?;
        let cont = self.seq_cont()?;
        Ok(Behaviour::Recv {
            port,
            var,
            cont: Box::new(cont),
        })
    }

    fn seq_cont(&mut self) -> Result<Behaviour, TextError> {
        if self.eat_sym(";") && !(self.is_sym("}") || self.at_eof()) {
            self.behaviour()
        } else {
            Ok(Behaviour::End)
        }
    }

    fn braced_behaviour(&mut self) -> Result<Behaviour, TextError> {
        self.sym("{")?;
        let b = self.behaviour()?;
        self.sym("}")?;
        Ok(b)
    }
}

// ---------------------------------------------------------------------------
// Printer

pub fn print_value(v: &Value) -> String {
    v.to_string()
}

pub fn print_expr(e: &Expr) -> String {
    fn go(e: &Expr, out: &mut String) {
        match e {
            Expr::Const(v) => out.push_str(&print_value(v)),
            Expr::Var(x) => out.push_str(x),
            Expr::Unary(UnOp::Not, inner) => {
                out.push_str("not ");
                atom(inner, out);
            }
            Expr::Binary(op, l, r) => {
                side(l, op.precedence(), false, out);
                let _ = write!(out, " {} ", op.symbol());
                side(r, op.precedence(), true, out);
            }
        }
    }
    fn atom(e: &Expr, out: &mut String) {
        if let Expr::Binary(..) = e {
            out.push('(');
            go(e, out);
            out.push(')');
        } else {
            go(e, out);
        }
    }
    fn side(e: &Expr, parent: u8, right: bool, out: &mut String) {
        let needs = match e {
            Expr::Binary(op, ..) => op.precedence() < parent || (right && op.precedence() == parent),
            _ => false,
        };
        if needs {
            out.push('(');
            go(e, out);
            out.push(')');
        } else {
            go(e, out);
        }
    }
    let mut out = String::new();
    go(e, &mut out);
    out
}

pub fn print_interaction(eta: &Interaction) -> String {
    match eta {
        Interaction::Com {
            sender,
            expr,
            receiver,
            var,
        } => format!("{sender}.{} -> {receiver}.{var}", print_expr(expr)),
        Interaction::Sel {
            sender,
            receiver,
            label,
        } => format!("{sender} -> {receiver}[{label}]"),
        Interaction::RecvVal { receiver, var, value } => {
            format!("{receiver}.{var} ? {}", print_value(value))
        }
        Interaction::RecvSel { receiver, label } => format!("{receiver} ? {label}"),
    }
}

pub fn print_etaset(etas: &EtaSet) -> String {
    let items: Vec<String> = etas.iter().map(print_interaction).collect();
    if items.len() == 1 {
        items.into_iter().next().unwrap()
    } else {
        format!("{{ {} }}", items.join(", "))
    }
}

pub fn print_choreography(c: &Choreography) -> String {
    let mut out = String::new();
    write_chor(c, 0, &mut out);
    out
}

/// Single-line rendering for diagnostics and traces.
pub fn print_choreography_inline(c: &Choreography) -> String {
    print_choreography(c)
        .lines()
        .map(str::trim)
        .collect::<Vec<_>>()
        .join(" ")
}

fn indent(n: usize, out: &mut String) {
    for _ in 0..n {
        out.push_str("  ");
    }
}

fn write_chor(c: &Choreography, depth: usize, out: &mut String) {
    indent(depth, out);
    match c {
        Choreography::Prefix {
            etas,
            connector,
            cont,
        } => {
            let _ = writeln!(out, "{} thru {connector};", print_etaset(etas));
            write_chor(cont, depth, out);
        }
        Choreography::Cond {
            process,
            guard,
            then_,
            else_,
        } => {
            let _ = writeln!(out, "if {process}.{} then {{", print_expr(guard));
            write_chor(then_, depth + 1, out);
            out.push('\n');
            indent(depth, out);
            out.push_str("} else {\n");
            write_chor(else_, depth + 1, out);
            out.push('\n');
            indent(depth, out);
            out.push('}');
        }
        Choreography::Def { name, body, cont } => {
            let _ = writeln!(out, "def {name} = {{");
            write_chor(body, depth + 1, out);
            out.push('\n');
            indent(depth, out);
            out.push_str("} in {\n");
            write_chor(cont, depth + 1, out);
            out.push('\n');
            indent(depth, out);
            out.push('}');
        }
        Choreography::Call(x) => out.push_str(x),
        Choreography::End => out.push('0'),
    }
}

pub fn print_flow(f: &Flow) -> String {
    format!("{} > {}", f.source.name(), f.target.name())
}

pub fn print_automaton(name: &str, a: &ConstraintAutomaton) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "automaton {name} {{");
    let list = |items: &mut dyn Iterator<Item = &Name>| items.cloned().collect::<Vec<_>>().join(", ");
    if !a.ports.is_empty() {
        let _ = writeln!(out, "  ports {};", list(&mut a.ports.iter()));
    }
    if !a.mems.is_empty() {
        let _ = writeln!(out, "  mems {};", list(&mut a.mems.iter()));
    }
    if !a.states.is_empty() {
        let _ = writeln!(out, "  states {};", list(&mut a.states.iter()));
    }
    if a.init_mem.is_empty() {
        let _ = writeln!(out, "  init {};", a.init_state);
    } else {
        let cells: Vec<String> = a
            .init_mem
            .iter()
            .map(|(m, v)| format!("{m} = {}", print_value(v)))
            .collect();
        let _ = writeln!(out, "  init {} {{ {} }};", a.init_state, cells.join(", "));
    }
    for t in &a.transitions {
        let flows: Vec<String> = t.label.flows().iter().map(print_flow).collect();
        let _ = writeln!(out, "  {} -> {} : {};", t.from, t.to, flows.join(" & "));
    }
    out.push('}');
    out
}

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (name, a) in &p.automata {
        out.push_str(&print_automaton(name, a));
        out.push_str("\n\n");
    }
    out.push_str("connectors {\n");
    for b in &p.bindings {
        let subst: Vec<String> = b
            .substitution
            .iter()
            .map(|(proc_, port)| format!("{proc_}/{port}"))
            .collect();
        let _ = writeln!(out, "  {} = {}[{}];", b.connector, b.automaton, subst.join(", "));
    }
    out.push_str("}\n\ninit {\n");
    for (proc_, var, v) in p.init.iter() {
        let _ = writeln!(out, "  {proc_}.{var} = {};", print_value(v));
    }
    out.push_str("}\n\nmain {\n");
    write_chor(&p.main, 1, &mut out);
    out.push_str("\n}\n");
    out
}

pub fn print_behaviour(b: &Behaviour) -> String {
    let mut out = String::new();
    write_beh(b, 0, &mut out);
    out
}

fn write_beh(b: &Behaviour, depth: usize, out: &mut String) {
    indent(depth, out);
    match b {
        Behaviour::Send { port, expr, cont } => {
            let _ = writeln!(out, "{port} ! {};", print_expr(expr));
            write_beh(cont, depth, out);
        }
        Behaviour::Recv { port, var, cont } => {
            let _ = writeln!(out, "{port} ? {var};");
            write_beh(cont, depth, out);
        }
        Behaviour::SelSend { port, label, cont } => {
            let _ = writeln!(out, "{port} ! [{label}];");
            write_beh(cont, depth, out);
        }
        Behaviour::Branch { port, branches } => {
            let _ = writeln!(out, "{port} ? {{");
            let n = branches.len();
            for (k, (label, body)) in branches.iter().enumerate() {
                indent(depth + 1, out);
                let _ = writeln!(out, "{label}: {{");
                write_beh(body, depth + 2, out);
                out.push('\n');
                indent(depth + 1, out);
                out.push('}');
                if k + 1 < n {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(depth, out);
            out.push('}');
        }
        Behaviour::Cond { guard, then_, else_ } => {
            let _ = writeln!(out, "if {} then {{", print_expr(guard));
            write_beh(then_, depth + 1, out);
            out.push('\n');
            indent(depth, out);
            out.push_str("} else {\n");
            write_beh(else_, depth + 1, out);
            out.push('\n');
            indent(depth, out);
            out.push('}');
        }
        Behaviour::Def { name, body, cont } => {
            let _ = writeln!(out, "def {name} = {{");
            write_beh(body, depth + 1, out);
            out.push('\n');
            indent(depth, out);
            out.push_str("} in {\n");
            write_beh(cont, depth + 1, out);
            out.push('\n');
            indent(depth, out);
            out.push('}');
        }
        Behaviour::Call(x) => out.push_str(x),
        Behaviour::End => out.push('0'),
    }
}

pub fn print_network(n: &Network) -> String {
    let mut out = String::from("network {\n");
    for (name, p) in &n.processes {
        let store: Vec<String> = p
            .store
            .iter()
            .map(|(x, v)| format!("{x} = {}", print_value(v)))
            .collect();
        let _ = writeln!(out, "  {name} [{}] {{", store.join(", "));
        write_beh(&p.behaviour, 2, &mut out);
        out.push_str("\n  }\n");
    }
    out.push_str("}\n");
    out
}
