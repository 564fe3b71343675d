//! Random programs for the correspondence check.
//!
//! Programs use processes `a`, `b`, `c` with one integer variable `v0`, at
//! most two connectors and at most six interactions, no recursion. A
//! connector is either a pair (`Sync` or `Async1`) or a multicast from one
//! process to the other two (`SyncMulti2`); every interaction through a
//! connector uses it whole.
//!
//! A pair connector stays asynchronous only if its sender can never run
//! ahead of what the choreography allows: whenever the receiver of one of
//! its interactions is held back by earlier actions (or by a conditional it
//! decides), the sender must be held back as well. Otherwise it is bound to
//! `Sync` instead.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::library_automaton;
use crate::epp::project_network;
use crate::model::{eta_processes, BinOp, ChorState, Choreography, EtaSet, Expr, Interaction, Name, Value};
use crate::textio::{Binding, Program};

const PROCESSES: [&str; 3] = ["a", "b", "c"];
const MAX_INTERACTIONS: usize = 6;

#[derive(Clone, Debug)]
struct Conn {
    name: Name,
    from: Name,
    to: Vec<Name>,
    asynchronous: bool,
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [&'a str]) -> &'a str {
    items[rng.random_range(0..items.len())]
}

fn others(p: &str) -> Vec<&'static str> {
    PROCESSES.iter().copied().filter(|q| *q != p).collect()
}

fn interaction_set<R: Rng>(rng: &mut R, conn: &Conn) -> EtaSet {
    let expr = Expr::binary(BinOp::Add, Expr::var("v0"), Expr::int(rng.random_range(0..3)));
    conn.to
        .iter()
        .map(|q| Interaction::com(&conn.from, expr.clone(), q, "v0"))
        .collect()
}

fn selection(conn: &Conn, label: &str) -> EtaSet {
    conn.to.iter().map(|q| Interaction::sel(&conn.from, q, label)).collect()
}

fn body<R: Rng>(rng: &mut R, conns: &[Conn], budget: usize, depth: usize) -> Choreography {
    if budget == 0 || rng.random_bool(0.1) {
        return Choreography::End;
    }
    let conn = &conns[rng.random_range(0..conns.len())];
    if depth < 2 && budget >= 3 && rng.random_bool(0.3) {
        let rest = budget - 2;
        let then_budget = rng.random_range(0..=rest);
        let guard = Expr::binary(BinOp::Lt, Expr::var("v0"), Expr::int(rng.random_range(0..4)));
        let then_ = Choreography::prefix(selection(conn, "ok"), &conn.name, body(rng, conns, then_budget, depth + 1));
        let else_ = Choreography::prefix(
            selection(conn, "ko"),
            &conn.name,
            body(rng, conns, rest - then_budget, depth + 1),
        );
        return Choreography::cond(&conn.from, guard, then_, else_);
    }
    let etas = interaction_set(rng, conn);
    Choreography::prefix(etas, &conn.name, body(rng, conns, budget - 1, depth))
}

/// Connectors whose senders could run ahead of the choreography: an
/// asynchronous send is unsafe once an earlier prefix or conditional holds
/// one of its receivers without involving its sender, since the sender may be
/// done with everything before while the receiver is still waiting. An
/// earlier asynchronous prefix only holds its receivers; one on the same
/// connector is ordered by the automaton.
fn run_ahead_unsafe(c: &Choreography, conns: &[Conn]) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    walk(c, &[], conns, &mut out);
    out
}

fn walk(c: &Choreography, earlier: &[(Name, BTreeSet<Name>)], conns: &[Conn], out: &mut BTreeSet<Name>) {
    let mut earlier = earlier.to_vec();
    match c {
        Choreography::Prefix { etas, connector, cont } => {
            if let Some(conn) = conns.iter().find(|k| k.name == *connector && k.asynchronous) {
                let late_receiver = earlier
                    .iter()
                    .filter(|(k, _)| *k != conn.name)
                    .any(|(_, ps)| !ps.contains(&conn.from) && conn.to.iter().any(|q| ps.contains(q)));
                if late_receiver {
                    out.insert(conn.name.clone());
                }
            }
            let held = match conns.iter().find(|k| k.name == *connector) {
                Some(k) if k.asynchronous => k.to.iter().cloned().collect(),
                _ => eta_processes(etas),
            };
            earlier.push((connector.clone(), held));
            walk(cont, &earlier, conns, out);
        }
        Choreography::Cond { process, then_, else_, .. } => {
            earlier.push((Name::new(), [process.clone()].into()));
            walk(then_, &earlier, conns, out);
            walk(else_, &earlier, conns, out);
        }
        Choreography::Def { body, cont, .. } => {
            walk(body, &earlier, conns, out);
            walk(cont, &earlier, conns, out);
        }
        Choreography::Call(_) | Choreography::End => {}
    }
}

/// One random program, projectable or not.
pub fn generate_any(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=2);
    let mut conns: Vec<Conn> = Vec::new();
    for i in 1..=n {
        let from = pick(&mut rng, &PROCESSES).to_owned();
        let rest = others(&from);
        let (to, asynchronous) = if rng.random_bool(0.25) {
            (rest.iter().map(|q| q.to_string()).collect(), false)
        } else {
            (vec![pick(&mut rng, &rest).to_owned()], rng.random_bool(0.5))
        };
        conns.push(Conn {
            name: format!("g{i}"),
            from,
            to,
            asynchronous,
        });
    }
    let main = body(&mut rng, &conns, MAX_INTERACTIONS, 0);
    let unsafe_conns = run_ahead_unsafe(&main, &conns);
    for k in conns.iter_mut() {
        if unsafe_conns.contains(&k.name) {
            k.asynchronous = false;
        }
    }

    let mut init = ChorState::new();
    for p in PROCESSES {
        init.set(p, "v0", Value::Int(rng.random_range(0..4)));
    }

    let mut automata: Vec<(Name, _)> = Vec::new();
    let mut bindings = Vec::new();
    for k in &conns {
        let automaton = match (k.to.len(), k.asynchronous) {
            (2, _) => "SyncMulti2",
            (_, true) => "Async1",
            _ => "Sync",
        };
        if !automata.iter().any(|(n, _)| n == automaton) {
            automata.push((automaton.to_owned(), library_automaton(automaton)));
        }
        let mut substitution = vec![(k.from.clone(), "p1".to_owned())];
        for (i, q) in k.to.iter().enumerate() {
            substitution.push((q.clone(), format!("p{}", i + 2)));
        }
        bindings.push(Binding {
            connector: k.name.clone(),
            automaton: automaton.to_owned(),
            substitution,
        });
    }
    Program {
        automata,
        bindings,
        init,
        main,
    }
}

/// The first projectable program drawn from `seed` and its successors.
pub fn generate(seed: u64) -> Program {
    let mut s = seed.wrapping_mul(1 << 20);
    loop {
        let p = generate_any(s);
        if project_network(&p.main, &p.init).is_ok() {
            return p;
        }
        s = s.wrapping_add(1);
    }
}
