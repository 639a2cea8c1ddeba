//! Structural and state-machine checks on an [`AccelGraph`].

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use super::{paths::topo_order, AccelGraph, IpKind, NodeAttrs, TokenId};

/// Rule violated by a diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    DanglingEndpoint,
    SelfLoop,
    DuplicateNode,
    DuplicateEdge,
    InvalidAttribute,
    Disconnected,
    UnconnectedComputation,
    UnknownToken,
    OrphanToken,
    DuplicateProducer,
    UnproducedFinalOutput,
    UnreachableFinalOutput,
    NonAdjacentConsumer,
    StateOrder,
    RoundOrder,
    DependencyCycle,
    EmptyOutput,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::DanglingEndpoint => "dangling endpoint",
            Rule::SelfLoop => "self loop",
            Rule::DuplicateNode => "duplicate node",
            Rule::DuplicateEdge => "duplicate edge",
            Rule::InvalidAttribute => "invalid attribute",
            Rule::Disconnected => "disconnected graph",
            Rule::UnconnectedComputation => "unconnected computation",
            Rule::UnknownToken => "unknown token",
            Rule::OrphanToken => "orphan token",
            Rule::DuplicateProducer => "duplicate producer",
            Rule::UnproducedFinalOutput => "unproduced final output",
            Rule::UnreachableFinalOutput => "unreachable final output",
            Rule::NonAdjacentConsumer => "non-adjacent consumer",
            Rule::StateOrder => "state order violation",
            Rule::RoundOrder => "round order violation",
            Rule::DependencyCycle => "dependency cycle",
            Rule::EmptyOutput => "empty output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub rule: Rule,
    /// Node, edge or token the rule is about.
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: `{}`: {}", self.rule.name(), self.subject, self.detail)
    }
}

/// Returns every violated invariant; empty means the graph is valid.
pub fn validate_graph(graph: &AccelGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |rule, subject: &str, detail: String| {
        out.push(Diagnostic {
            rule,
            subject: subject.to_string(),
            detail,
        })
    };
    let n = graph.nodes.len();
    let mut ids = HashSet::new();
    for node in &graph.nodes {
        if !ids.insert(node.id.as_str()) {
            diag(Rule::DuplicateNode, &node.id, "node id declared twice".into());
        }
        if !(node.freq_mhz.is_finite() && node.freq_mhz > 0.0) {
            diag(Rule::InvalidAttribute, &node.id, format!("freq_mhz {} must be > 0", node.freq_mhz));
        }
        if node.precision == 0 {
            diag(Rule::InvalidAttribute, &node.id, "precision must be >= 1".into());
        }
        match &node.attrs {
            NodeAttrs::Memory(m) => {
                if m.volume_bits == 0 {
                    diag(Rule::InvalidAttribute, &node.id, "volume_bits must be > 0".into());
                }
                if m.port_width_bits == 0 {
                    diag(Rule::InvalidAttribute, &node.id, "port_width_bits must be >= 1".into());
                }
            }
            NodeAttrs::Computation(c) if c.unroll == 0 => {
                diag(Rule::InvalidAttribute, &node.id, "unroll must be >= 1".into());
            }
            NodeAttrs::DataPath(d) if d.port_width_bits == 0 => {
                diag(Rule::InvalidAttribute, &node.id, "port_width_bits must be >= 1".into());
            }
            _ => {}
        }
    }
    if !(graph.clock_mhz.is_finite() && graph.clock_mhz > 0.0) {
        diag(Rule::InvalidAttribute, &graph.name, "clock_mhz must be > 0".into());
    }

    let mut edge_set = HashSet::new();
    let mut good_edges = Vec::new();
    for e in &graph.edges {
        let name = |i: usize| graph.nodes.get(i).map_or_else(|| format!("#{i}"), |x| x.id.clone());
        let label = format!("{} -> {}", name(e.start), name(e.end));
        if e.start >= n || e.end >= n {
            diag(Rule::DanglingEndpoint, &label, "edge endpoint does not exist".into());
            continue;
        }
        if e.start == e.end {
            diag(Rule::SelfLoop, &label, "edge starts and ends at the same node".into());
            continue;
        }
        if !edge_set.insert((e.start, e.end)) {
            diag(Rule::DuplicateEdge, &label, "edge declared twice".into());
            continue;
        }
        good_edges.push((e.start, e.end));
    }
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    for &(a, b) in &good_edges {
        succs[a].push(b);
        preds[b].push(a);
    }

    if n > 1 {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in preds[v].iter().chain(&succs[v]) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            diag(Rule::Disconnected, &graph.nodes[v].id, "not reachable from the rest of the graph".into());
        }
    }
    for (i, node) in graph.nodes.iter().enumerate() {
        if node.kind() == IpKind::Computation && (preds[i].is_empty() || succs[i].is_empty()) {
            diag(
                Rule::UnconnectedComputation,
                &node.id,
                "computation node needs at least one incoming and one outgoing edge".into(),
            );
        }
    }

    // State machines.
    let n_tokens = graph.tokens.len();
    let tname = |t: TokenId| {
        if (t.0 as usize) < n_tokens {
            graph.tokens.name(t).to_string()
        } else {
            format!("#{}", t.0)
        }
    };
    for &t in graph.primary_inputs.iter().chain(&graph.final_outputs) {
        if t.0 as usize >= n_tokens {
            diag(Rule::UnknownToken, &tname(t), "listed as primary input or final output".into());
        }
    }
    let mut producer: Vec<Option<(usize, usize)>> = vec![None; n_tokens];
    for (ni, node) in graph.nodes.iter().enumerate() {
        for (si, st) in node.states.iter().enumerate() {
            for &t in st.needs.iter().chain(&st.produces) {
                if t.0 as usize >= n_tokens {
                    diag(Rule::UnknownToken, &tname(t), format!("referenced by `{}` state {si}", node.id));
                }
            }
            for &t in &st.produces {
                let Some(slot) = producer.get_mut(t.0 as usize) else { continue };
                match slot {
                    Some((pn, ps)) => diag(
                        Rule::DuplicateProducer,
                        &tname(t),
                        format!(
                            "produced by `{}` state {} and `{}` state {si}",
                            graph.nodes[*pn].id, ps, node.id
                        ),
                    ),
                    None => *slot = Some((ni, si)),
                }
                if graph.primary_inputs.contains(&t) {
                    diag(Rule::DuplicateProducer, &tname(t), "primary input is also produced by a state".into());
                }
            }
            if st.produces.is_empty() && !succs[ni].is_empty() {
                diag(
                    Rule::EmptyOutput,
                    &node.id,
                    format!("state {si} produces nothing but the node has successors"),
                );
            }
            if si > 0 && node.states[si - 1].round > st.round {
                diag(Rule::RoundOrder, &node.id, format!("state {si} runs in an earlier round than state {}", si - 1));
            }
        }
    }
    if !graph.is_bound() {
        for &t in &graph.final_outputs {
            if !graph.primary_inputs.contains(&t) {
                diag(Rule::UnproducedFinalOutput, &tname(t), "no state produces it".into());
            }
        }
        return out;
    }
    for (ci, node) in graph.nodes.iter().enumerate() {
        for (si, st) in node.states.iter().enumerate() {
            for &t in &st.needs {
                if graph.primary_inputs.contains(&t) {
                    continue;
                }
                match producer.get(t.0 as usize).copied().flatten() {
                    None => diag(
                        Rule::OrphanToken,
                        &tname(t),
                        format!("needed by `{}` state {si} but never produced", node.id),
                    ),
                    Some((pi, ps)) if pi == ci => {
                        if ps >= si {
                            diag(
                                Rule::StateOrder,
                                &tname(t),
                                format!("`{}` state {si} needs a token from its own state {ps}", node.id),
                            );
                        }
                    }
                    Some((pi, ps)) => {
                        let pr = graph.nodes[pi].states[ps].round;
                        if pr > st.round {
                            diag(
                                Rule::RoundOrder,
                                &tname(t),
                                format!(
                                    "produced in round {pr} by `{}` but needed in round {} by `{}`",
                                    graph.nodes[pi].id, st.round, node.id
                                ),
                            );
                        } else if pr == st.round && !edge_set.contains(&(pi, ci)) {
                            diag(
                                Rule::NonAdjacentConsumer,
                                &tname(t),
                                format!("`{}` needs it from `{}` without an edge", node.id, graph.nodes[pi].id),
                            );
                        }
                    }
                }
            }
        }
    }
    for &t in &graph.final_outputs {
        if !graph.primary_inputs.contains(&t) && producer.get(t.0 as usize).copied().flatten().is_none() {
            diag(Rule::UnproducedFinalOutput, &tname(t), "no state produces it".into());
        }
    }

    // Reachability of final outputs from the primary inputs.
    if !graph.primary_inputs.is_empty() {
        let mut ready: Vec<bool> = vec![false; n_tokens];
        for t in &graph.primary_inputs {
            if let Some(r) = ready.get_mut(t.0 as usize) {
                *r = true;
            }
        }
        let mut done: Vec<usize> = vec![0; n];
        loop {
            let mut progressed = false;
            for (ni, node) in graph.nodes.iter().enumerate() {
                while let Some(st) = node.states.get(done[ni]) {
                    let ok = (done[ni] > 0 || !st.needs.is_empty())
                        && st.needs.iter().all(|t| ready.get(t.0 as usize).copied().unwrap_or(false));
                    if !ok {
                        break;
                    }
                    for t in &st.produces {
                        if let Some(r) = ready.get_mut(t.0 as usize) {
                            *r = true;
                        }
                    }
                    done[ni] += 1;
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        for &t in &graph.final_outputs {
            if producer.get(t.0 as usize).copied().flatten().is_some() && !ready[t.0 as usize] {
                diag(
                    Rule::UnreachableFinalOutput,
                    &tname(t),
                    "cannot be derived from the primary inputs".into(),
                );
            }
        }
    }

    // Per-round dependency cycles.
    let max_round = graph.nodes.iter().flat_map(|n| n.states.iter().map(|s| s.round)).max().unwrap_or(0);
    let mut round_nodes = vec![BTreeSet::new(); max_round as usize + 1];
    let mut round_edges = vec![BTreeSet::new(); max_round as usize + 1];
    for (ci, node) in graph.nodes.iter().enumerate() {
        for st in &node.states {
            round_nodes[st.round as usize].insert(ci);
            for t in &st.needs {
                if let Some(Some((pi, ps))) = producer.get(t.0 as usize) {
                    if *pi != ci && graph.nodes[*pi].states[*ps].round == st.round {
                        round_edges[st.round as usize].insert((*pi, ci));
                    }
                }
            }
        }
    }
    for (r, (nodes, edges)) in round_nodes.into_iter().zip(round_edges).enumerate() {
        let nodes: Vec<usize> = nodes.into_iter().collect();
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        if let Err(v) = topo_order(n, &nodes, &edges) {
            diag(Rule::DependencyCycle, &graph.nodes[v].id, format!("cyclic token dependencies in round {r}"));
        }
    }
    out
}
