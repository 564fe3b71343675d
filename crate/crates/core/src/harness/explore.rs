//! Breadth-first exploration of the reachable configurations of a program.

use std::collections::{BTreeMap, VecDeque};

use crate::chor_engine::{diagnose, reductions, Configuration, ReductionKind, StuckReport};
use crate::model::ConnectorMapping;

/// Reachability graph up to a depth bound. Node 0 is the start.
#[derive(Clone, Debug)]
pub struct Graph {
    pub nodes: Vec<Configuration>,
    pub depth: Vec<usize>,
    pub edges: Vec<(usize, ReductionKind, usize)>,
    /// Some node at the depth bound still had reductions.
    pub truncated: bool,
}

impl Graph {
    pub fn successors(&self, node: usize) -> impl Iterator<Item = &(usize, ReductionKind, usize)> {
        self.edges.iter().filter(move |(from, _, _)| *from == node)
    }

    /// Every path of exactly `len` steps from the start, as step lists.
    pub fn paths(&self, len: usize) -> Vec<Vec<&ReductionKind>> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Vec<&ReductionKind>)> = vec![(0, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            if path.len() == len {
                out.push(path);
                continue;
            }
            for (_, step, to) in self.successors(node) {
                let mut p = path.clone();
                p.push(step);
                stack.push((*to, p));
            }
        }
        out
    }
}

pub fn reachability_graph(start: &Configuration, g: &ConnectorMapping, max_depth: usize) -> Graph {
    let mut index: BTreeMap<Configuration, usize> = BTreeMap::new();
    let mut graph = Graph {
        nodes: vec![start.clone()],
        depth: vec![0],
        edges: Vec::new(),
        truncated: false,
    };
    index.insert(start.clone(), 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(n) = queue.pop_front() {
        let cfg = graph.nodes[n].clone();
        let d = graph.depth[n];
        let steps = reductions(&cfg, g);
        if d >= max_depth {
            graph.truncated |= !steps.is_empty();
            continue;
        }
        for r in steps {
            let to = match index.get(&r.next) {
                Some(&i) => i,
                None => {
                    let i = graph.nodes.len();
                    index.insert(r.next.clone(), i);
                    graph.nodes.push(r.next);
                    graph.depth.push(d + 1);
                    queue.push_back(i);
                    i
                }
            };
            graph.edges.push((n, r.kind, to));
        }
    }
    graph
}

#[derive(Clone, Debug)]
pub struct ExploreReport {
    pub states: usize,
    pub terminated: usize,
    /// Reachable configurations that are neither finished nor able to move.
    pub stuck: Vec<(Configuration, StuckReport)>,
    pub truncated: bool,
}

pub fn explore(start: &Configuration, g: &ConnectorMapping, max_depth: usize) -> ExploreReport {
    let graph = reachability_graph(start, g, max_depth);
    let mut report = ExploreReport {
        states: graph.nodes.len(),
        terminated: 0,
        stuck: Vec::new(),
        truncated: graph.truncated,
    };
    for (i, cfg) in graph.nodes.iter().enumerate() {
        if cfg.is_terminated() {
            report.terminated += 1;
        } else if graph.depth[i] < max_depth && graph.successors(i).next().is_none() {
            report.stuck.push((cfg.clone(), diagnose(cfg, g)));
        }
    }
    report
}
