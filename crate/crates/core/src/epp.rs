//! Endpoint projection: from a choreography to one behaviour per process,
//! and from a connector mapping to automata over process ports.
//!
//! Every process gets one port per connector it uses: `o^p@g` when it sends
//! through `g`, `i^p@g` when it receives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::cp_engine::{Network, Process};
use crate::model::{ChorState, Choreography, ConnectorMapping, Expr, Interaction, Name, PortRole};
use crate::textio::print_expr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Out,
    In,
}

/// A process port `o^p@g` or `i^p@g`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortName {
    pub direction: Direction,
    pub process: Name,
    pub connector: Name,
}

impl PortName {
    pub fn out(process: &str, connector: &str) -> Self {
        PortName {
            direction: Direction::Out,
            process: process.into(),
            connector: connector.into(),
        }
    }

    pub fn inp(process: &str, connector: &str) -> Self {
        PortName {
            direction: Direction::In,
            process: process.into(),
            connector: connector.into(),
        }
    }

    /// Parses the rendered form `o^p@g`.
    pub fn parse(s: &str) -> Option<Self> {
        let (dir, rest) = s.split_once('^')?;
        let (process, connector) = rest.split_once('@')?;
        let direction = match dir {
            "o" => Direction::Out,
            "i" => Direction::In,
            _ => return None,
        };
        if process.is_empty() || connector.is_empty() {
            return None;
        }
        Some(PortName {
            direction,
            process: process.into(),
            connector: connector.into(),
        })
    }
}

impl fmt::Display for PortName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.direction {
            Direction::Out => "o",
            Direction::In => "i",
        };
        write!(f, "{d}^{}@{}", self.process, self.connector)
    }
}

/// Process behaviour in the Connected Processes calculus.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Behaviour {
    Send {
        port: PortName,
        expr: Expr,
        cont: Box<Behaviour>,
    },
    Recv {
        port: PortName,
        var: Name,
        cont: Box<Behaviour>,
    },
    SelSend {
        port: PortName,
        label: Name,
        cont: Box<Behaviour>,
    },
    Branch {
        port: PortName,
        branches: BTreeMap<Name, Behaviour>,
    },
    Cond {
        guard: Expr,
        then_: Box<Behaviour>,
        else_: Box<Behaviour>,
    },
    Def {
        name: Name,
        body: Box<Behaviour>,
        cont: Box<Behaviour>,
    },
    Call(Name),
    End,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EppError {
    #[error("{process} both sends and receives in one interaction set through {connector}")]
    MixedRole { process: Name, connector: Name },
    #[error("branches cannot be merged for {process}: {reason}")]
    MergeUndefined { process: Name, reason: String },
}

/// Why two behaviours have no merge.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct MergeError(pub String);

/// Merges the behaviours of a process that does not decide a conditional.
/// Defined when both sides agree up to branchings, whose label sets are
/// united.
pub fn merge(a: &Behaviour, b: &Behaviour) -> Result<Behaviour, MergeError> {
    use Behaviour::*;
    let boxed = |x, y| merge(x, y).map(Box::new);
    match (a, b) {
        (End, End) => Ok(End),
        (Call(x), Call(y)) if x == y => Ok(Call(x.clone())),
        (
            Send { port, expr, cont },
            Send {
                port: p2,
                expr: e2,
                cont: k2,
            },
        ) if port == p2 && expr == e2 => Ok(Send {
            port: port.clone(),
            expr: expr.clone(),
            cont: boxed(cont, k2)?,
        }),
        (
            Recv { port, var, cont },
            Recv {
                port: p2,
                var: v2,
                cont: k2,
            },
        ) if port == p2 && var == v2 => Ok(Recv {
            port: port.clone(),
            var: var.clone(),
            cont: boxed(cont, k2)?,
        }),
        (
            SelSend { port, label, cont },
            SelSend {
                port: p2,
                label: l2,
                cont: k2,
            },
        ) if port == p2 && label == l2 => Ok(SelSend {
            port: port.clone(),
            label: label.clone(),
            cont: boxed(cont, k2)?,
        }),
        (Branch { port, branches }, Branch { port: p2, branches: b2 }) if port == p2 => {
            let mut out = branches.clone();
            for (label, body) in b2 {
                let merged = match branches.get(label) {
                    Some(mine) => merge(mine, body)?,
                    None => body.clone(),
                };
                out.insert(label.clone(), merged);
            }
            Ok(Branch {
                port: port.clone(),
                branches: out,
            })
        }
        (Cond { guard, then_, else_ }, Cond { guard: g2, then_: t2, else_: e2 }) if guard == g2 => Ok(Cond {
            guard: guard.clone(),
            then_: boxed(then_, t2)?,
            else_: boxed(else_, e2)?,
        }),
        (Def { name, body, cont }, Def { name: n2, body: b2, cont: k2 }) if name == n2 => Ok(Def {
            name: name.clone(),
            body: boxed(body, b2)?,
            cont: boxed(cont, k2)?,
        }),
        _ => Err(MergeError(format!("{} vs {}", head_summary(a), head_summary(b)))),
    }
}

fn head_summary(b: &Behaviour) -> String {
    match b {
        Behaviour::Send { port, expr, .. } => format!("{port} ! {}", print_expr(expr)),
        Behaviour::Recv { port, var, .. } => format!("{port} ? {var}"),
        Behaviour::SelSend { port, label, .. } => format!("{port} ! [{label}]"),
        Behaviour::Branch { port, branches } => {
            format!("{port} ? {{{}}}", branches.keys().cloned().collect::<Vec<_>>().join(", "))
        }
        Behaviour::Cond { guard, .. } => format!("if {}", print_expr(guard)),
        Behaviour::Def { name, .. } => format!("def {name}"),
        Behaviour::Call(x) => x.clone(),
        Behaviour::End => "0".into(),
    }
}

/// Projects `c` onto process `p`. A runtime receive projects to the receive
/// still to be done.
pub fn project(c: &Choreography, p: &str) -> Result<Behaviour, EppError> {
    match c {
        Choreography::Prefix {
            etas,
            connector,
            cont,
        } => {
            let k = project(cont, p)?;
            let sends: Vec<&Interaction> = etas.iter().filter(|e| e.sender() == Some(p)).collect();
            let recv = etas.iter().find(|e| e.receiver() == p);
            match (sends.first(), recv) {
                (Some(_), Some(_)) => Err(EppError::MixedRole {
                    process: p.into(),
                    connector: connector.clone(),
                }),
                (Some(Interaction::Com { expr, .. }), None) => Ok(Behaviour::Send {
                    port: PortName::out(p, connector),
                    expr: expr.clone(),
                    cont: Box::new(k),
                }),
                (Some(Interaction::Sel { label, .. }), None) => Ok(Behaviour::SelSend {
                    port: PortName::out(p, connector),
                    label: label.clone(),
                    cont: Box::new(k),
                }),
                (None, Some(Interaction::Com { var, .. } | Interaction::RecvVal { var, .. })) => Ok(Behaviour::Recv {
                    port: PortName::inp(p, connector),
                    var: var.clone(),
                    cont: Box::new(k),
                }),
                (None, Some(Interaction::Sel { label, .. } | Interaction::RecvSel { label, .. })) => Ok(Behaviour::Branch {
                    port: PortName::inp(p, connector),
                    branches: [(label.clone(), k)].into(),
                }),
                (None, None) => Ok(k),
                (Some(_), None) => unreachable!("senders only have pending sends"),
            }
        }
        Choreography::Cond {
            process,
            guard,
            then_,
            else_,
        } => {
            let t = project(then_, p)?;
            let e = project(else_, p)?;
            if process == p {
                Ok(Behaviour::Cond {
                    guard: guard.clone(),
                    then_: Box::new(t),
                    else_: Box::new(e),
                })
            } else {
                merge(&t, &e).map_err(|err| EppError::MergeUndefined {
                    process: p.into(),
                    reason: format!("conditional at {process}: {err}"),
                })
            }
        }
        Choreography::Def { name, body, cont } => Ok(Behaviour::Def {
            name: name.clone(),
            body: Box::new(project(body, p)?),
            cont: Box::new(project(cont, p)?),
        }),
        Choreography::Call(x) => Ok(Behaviour::Call(x.clone())),
        Choreography::End => Ok(Behaviour::End),
    }
}

/// Projects every process of `c` (and every process with a store entry).
pub fn project_network(c: &Choreography, sigma: &ChorState) -> Result<Network, EppError> {
    let mut names: BTreeSet<Name> = c.processes();
    names.extend(sigma.processes());
    let mut processes = BTreeMap::new();
    for p in names {
        let behaviour = project(c, &p)?;
        processes.insert(
            p.clone(),
            Process {
                store: sigma.store_of(&p),
                behaviour,
            },
        );
    }
    Ok(Network { processes })
}

/// Renames every process port of every automaton to `o^p@g` or `i^p@g`.
pub fn project_connectors(g: &ConnectorMapping) -> ConnectorMapping {
    g.iter()
        .map(|(gamma, a)| {
            let roles = a.port_roles();
            let rename: BTreeMap<Name, Name> = a
                .ports
                .iter()
                .map(|p| {
                    let port = match roles.get(p).copied().flatten() {
                        Some(PortRole::Source) => PortName::out(p, gamma),
                        _ => PortName::inp(p, gamma),
                    };
                    (p.clone(), port.to_string())
                })
                .collect();
            (gamma.clone(), a.rename_ports(&rename))
        })
        .collect()
}
