//! Dependency structure used for critical-path latency.
//!
//! A bound graph is split into rounds (one per layer). Inside a round, IP `p`
//! precedes IP `q` when a state of `q` needs a token produced by a state of `p`
//! in the same round. An unbound graph is a single round over its physical
//! edges. Physical cycles (NoC meshes) are fine; dependency cycles are not.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use super::AccelGraph;
use crate::error::{Error, Result};

/// Upper bound on the number of paths `critical_paths` will enumerate.
pub const MAX_ENUMERATED_PATHS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundDag {
    pub round: u32,
    /// Participating node indices, ascending.
    pub nodes: Vec<usize>,
    /// Dependency edges `(producer, consumer)`, sorted and unique.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyDag {
    pub rounds: Vec<RoundDag>,
}

/// Per-round dependency DAGs. Errors if any round contains a cycle.
pub fn dependency_dag(graph: &AccelGraph) -> Result<DependencyDag> {
    let rounds = if graph.is_bound() {
        let n_rounds = graph
            .nodes
            .iter()
            .flat_map(|n| n.states.iter().map(|s| s.round as usize + 1))
            .max()
            .unwrap_or(0);
        // Token -> (producer node, producer round); first producer wins.
        let mut producer = vec![(u32::MAX, 0u32); graph.tokens.len()];
        for (ni, node) in graph.nodes.iter().enumerate() {
            for st in &node.states {
                for t in &st.produces {
                    let slot = &mut producer[t.0 as usize];
                    if slot.0 == u32::MAX {
                        *slot = (ni as u32, st.round);
                    }
                }
            }
        }
        let mut nodes = vec![Vec::new(); n_rounds];
        let mut edges = vec![Vec::new(); n_rounds];
        // seen[p] == (consumer, round) once the edge p -> consumer is recorded.
        let mut seen = vec![(usize::MAX, u32::MAX); graph.nodes.len()];
        for (ci, node) in graph.nodes.iter().enumerate() {
            for st in &node.states {
                let r = st.round as usize;
                if nodes[r].last() != Some(&ci) {
                    nodes[r].push(ci);
                }
                for t in &st.needs {
                    let Some(&(pi, pr)) = producer.get(t.0 as usize) else {
                        continue;
                    };
                    let pi = pi as usize;
                    if pi != u32::MAX as usize && pi != ci && pr == st.round && seen[pi] != (ci, st.round) {
                        seen[pi] = (ci, st.round);
                        edges[r].push((pi, ci));
                    }
                }
            }
        }
        nodes
            .into_iter()
            .zip(edges)
            .enumerate()
            .filter(|(_, (n, _))| !n.is_empty())
            .map(|(r, (n, mut e))| {
                e.sort_unstable();
                e.dedup();
                RoundDag { round: r as u32, nodes: n, edges: e }
            })
            .collect()
    } else {
        let edges: BTreeSet<(usize, usize)> = graph.edges.iter().map(|e| (e.start, e.end)).collect();
        vec![RoundDag {
            round: 0,
            nodes: (0..graph.nodes.len()).collect(),
            edges: edges.into_iter().collect(),
        }]
    };
    let dag = DependencyDag { rounds };
    for r in &dag.rounds {
        topo_order(graph.nodes.len(), &r.nodes, &r.edges)
            .map_err(|v| Error::DependencyCycle(graph.nodes[v].id.clone()))?;
    }
    Ok(dag)
}

/// Kahn's algorithm with smallest-index-first tie-breaking. On a cycle returns
/// the smallest node left unordered.
pub(crate) fn topo_order(
    n_total: usize,
    nodes: &[usize],
    edges: &[(usize, usize)],
) -> std::result::Result<Vec<usize>, usize> {
    let mut indeg = vec![0usize; n_total];
    let mut succ = vec![Vec::new(); n_total];
    for &(a, b) in edges {
        indeg[b] += 1;
        succ[a].push(b);
    }
    let mut heap: BinaryHeap<Reverse<usize>> = nodes.iter().filter(|&&v| indeg[v] == 0).map(|&v| Reverse(v)).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &s in &succ[v] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                heap.push(Reverse(s));
            }
        }
    }
    if order.len() == nodes.len() {
        Ok(order)
    } else {
        let done: BTreeSet<usize> = order.iter().copied().collect();
        Err(nodes.iter().copied().find(|v| !done.contains(v)).unwrap_or(0))
    }
}

/// Heaviest path through one round, by node weight. Ties keep the earliest
/// node in topological order.
pub fn longest_path(
    graph: &AccelGraph,
    dag: &RoundDag,
    weight: impl Fn(usize) -> u64,
) -> Result<(u64, Vec<usize>)> {
    let n = graph.nodes.len();
    let order = topo_order(n, &dag.nodes, &dag.edges)
        .map_err(|v| Error::DependencyCycle(graph.nodes[v].id.clone()))?;
    let mut preds = vec![Vec::new(); n];
    for &(a, b) in &dag.edges {
        preds[b].push(a);
    }
    let mut best = vec![0u64; n];
    let mut from: Vec<Option<usize>> = vec![None; n];
    for &v in &order {
        let mut acc = 0u64;
        for &p in &preds[v] {
            if from[v].is_none() || best[p] > acc {
                acc = best[p];
                from[v] = Some(p);
            }
        }
        best[v] = acc + weight(v);
    }
    let Some(&end) = order.iter().reduce(|a, b| if best[*b] > best[*a] { b } else { a }) else {
        return Ok((0, Vec::new()));
    };
    let mut path = vec![end];
    let mut cur = end;
    while let Some(p) = from[cur] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    Ok((best[end], path))
}

/// All maximal source-to-sink paths of every round, as node-id lists.
pub fn critical_paths(graph: &AccelGraph) -> Result<Vec<Vec<String>>> {
    let dag = dependency_dag(graph)?;
    let n = graph.nodes.len();
    let mut out = Vec::new();
    for r in &dag.rounds {
        let mut succ = vec![Vec::new(); n];
        let mut has_pred = vec![false; n];
        for &(a, b) in &r.edges {
            succ[a].push(b);
            has_pred[b] = true;
        }
        for &src in r.nodes.iter().filter(|&&v| !has_pred[v]) {
            let mut stack = vec![(src, 0usize)];
            let mut path = vec![src];
            while let Some((v, next)) = stack.pop() {
                if succ[v].is_empty() {
                    if out.len() == MAX_ENUMERATED_PATHS {
                        return Err(Error::TooManyPaths(MAX_ENUMERATED_PATHS));
                    }
                    out.push(path.iter().map(|&i| graph.nodes[i].id.clone()).collect());
                }
                if next < succ[v].len() {
                    stack.push((v, next + 1));
                    let w = succ[v][next];
                    stack.push((w, 0));
                    path.push(w);
                } else {
                    path.pop();
                }
            }
        }
    }
    Ok(out)
}
