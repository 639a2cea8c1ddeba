//! Graph rewrites used by the IP-pipeline optimisation loop.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::space::AppSpec;
use crate::cost::UnitCostLibrary;
use crate::error::{Error, Result};
use crate::graph::{AccelGraph, IpState, NodeAttrs, TokenId};
use crate::predict::resource_usage;

/// Port-width cap used when the application spec sets none.
pub const DEFAULT_MAX_PORT_WIDTH_BITS: u32 = 1024;

/// What a rewrite did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteNote {
    pub node: String,
    /// Successor involved in a pipeline insertion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub successor: Option<String>,
    pub changed: bool,
    pub detail: String,
}

/// Successor of `ip` that consumes the most tokens produced by `ip`.
pub fn pipeline_successor(graph: &AccelGraph, ip: usize) -> Option<usize> {
    let produced: BTreeSet<TokenId> = graph.nodes[ip]
        .states
        .iter()
        .flat_map(|s| s.produces.iter().copied())
        .collect();
    let mut best: Option<(usize, usize)> = None;
    for &s in &graph.adjacency().succs[ip] {
        let count = graph.nodes[s]
            .states
            .iter()
            .flat_map(|st| st.needs.iter())
            .filter(|t| produced.contains(t))
            .count();
        if count > 0 && best.is_none_or(|(_, c)| count > c) {
            best = Some((s, count));
        }
    }
    best.map(|(s, _)| s)
}

/// Splits the states through which `ip` feeds its main successor into
/// `factor` finer states each, so the successor can start on partial data.
pub fn insert_pipeline(graph: &AccelGraph, ip: &str, factor: u32) -> Result<(AccelGraph, RewriteNote)> {
    let p = graph
        .node_index(ip)
        .ok_or_else(|| Error::Binding(format!("unknown node `{ip}`")))?;
    let next = pipeline_successor(graph, p)
        .ok_or_else(|| Error::Binding(format!("`{ip}` has no successor consuming its tokens")))?;
    insert_pipeline_between(graph, p, next, factor)
}

/// Work of one part when `work` is cut into `k` parts; the last takes the remainder.
fn part_work(work: u64, k: u64, j: u64) -> u64 {
    let base = work / k;
    if j + 1 == k {
        work - base * (k - 1)
    } else {
        base
    }
}

/// As [`insert_pipeline`], with the successor given explicitly.
pub fn insert_pipeline_between(
    graph: &AccelGraph,
    ip: usize,
    next: usize,
    factor: u32,
) -> Result<(AccelGraph, RewriteNote)> {
    let mut g = graph.clone();
    let mut note = RewriteNote {
        node: g.nodes[ip].id.clone(),
        successor: Some(g.nodes[next].id.clone()),
        changed: false,
        detail: String::new(),
    };
    if factor <= 1 {
        note.detail = "split factor 1 leaves the graph unchanged".into();
        return Ok((g, note));
    }
    let k = factor as u64;
    g.split_generation += 1;
    let generation = g.split_generation;

    let needed_by_next: BTreeSet<TokenId> = g.nodes[next]
        .states
        .iter()
        .flat_map(|s| s.needs.iter().copied())
        .collect();

    // Split producer states; remember the part tokens of each original token.
    let mut parts_of: HashMap<TokenId, Vec<TokenId>> = HashMap::new();
    let mut split_p = 0usize;
    let mut unsplittable = 0usize;
    let ip_id = g.nodes[ip].id.clone();
    let old = std::mem::take(&mut g.nodes[ip].states);
    let mut new_states = Vec::with_capacity(old.len());
    for (si, st) in old.into_iter().enumerate() {
        if !st.produces.iter().any(|t| needed_by_next.contains(t)) {
            new_states.push(st);
            continue;
        }
        let kp = k.min(st.work);
        if kp < 2 {
            unsplittable += 1;
            new_states.push(st);
            continue;
        }
        split_p += 1;
        let mut parts = Vec::with_capacity(kp as usize - 1);
        for j in 0..kp {
            let last = j + 1 == kp;
            let produces = if last {
                st.produces.clone()
            } else {
                let t = g.tokens.intern(&format!("~{generation}:{ip_id}:{si}:{j}"));
                parts.push(t);
                vec![t]
            };
            new_states.push(IpState {
                needs: if j == 0 { st.needs.clone() } else { Vec::new() },
                produces,
                work: part_work(st.work, kp, j),
                round: st.round,
            });
        }
        for t in &st.produces {
            parts_of.insert(*t, parts.clone());
        }
    }
    g.nodes[ip].states = new_states;

    // Split consumer states that read any split token.
    let next_id = g.nodes[next].id.clone();
    let produced_by_ip: BTreeSet<TokenId> = g.nodes[ip]
        .states
        .iter()
        .flat_map(|s| s.produces.iter().copied())
        .collect();
    let old = std::mem::take(&mut g.nodes[next].states);
    let mut new_states = Vec::with_capacity(old.len());
    let mut split_c = 0usize;
    for (si, st) in old.into_iter().enumerate() {
        let from_ip: Vec<TokenId> = st.needs.iter().copied().filter(|t| produced_by_ip.contains(t)).collect();
        let kc = k.min(st.work);
        if from_ip.is_empty() || kc < 2 {
            if !from_ip.is_empty() {
                unsplittable += 1;
            }
            new_states.push(st);
            continue;
        }
        split_c += 1;
        let others: Vec<TokenId> = st.needs.iter().copied().filter(|t| !produced_by_ip.contains(t)).collect();
        for j in 0..kc {
            let last = j + 1 == kc;
            let mut needs = if j == 0 { others.clone() } else { Vec::new() };
            for t in &from_ip {
                let parts = parts_of.get(t).map(Vec::as_slice).unwrap_or(&[]);
                match parts.get(j as usize) {
                    Some(p) if !last => needs.push(*p),
                    _ => needs.push(*t),
                }
            }
            needs.sort();
            needs.dedup();
            let produces = if last {
                st.produces.clone()
            } else {
                vec![g.tokens.intern(&format!("~{generation}:{next_id}:{si}:{j}"))]
            };
            new_states.push(IpState {
                needs,
                produces,
                work: part_work(st.work, kc, j),
                round: st.round,
            });
        }
    }
    g.nodes[next].states = new_states;

    note.changed = split_p + split_c > 0;
    note.detail = if note.changed {
        format!("split {split_p} producer and {split_c} consumer states by {factor}")
    } else {
        "no splittable states".into()
    };
    if unsplittable > 0 {
        note.detail.push_str(&format!("; {unsplittable} states too small to split"));
    }
    Ok((g, note))
}

/// Doubles the parallelism of a computation node or the port of a data path,
/// within the multiplier budget and port-width cap.
pub fn reallocate_resource(
    graph: &AccelGraph,
    ip: &str,
    spec: &AppSpec,
    costs: &UnitCostLibrary,
) -> Result<(AccelGraph, RewriteNote)> {
    let idx = graph
        .node_index(ip)
        .ok_or_else(|| Error::Binding(format!("unknown node `{ip}`")))?;
    let mut g = graph.clone();
    let used = resource_usage(graph, costs).mul_count;
    let slack = spec.resource_budget.mul_count.saturating_sub(used);
    let max_port = spec.max_port_width_bits.unwrap_or(DEFAULT_MAX_PORT_WIDTH_BITS);
    let (before, after, what) = match &mut g.nodes[idx].attrs {
        NodeAttrs::Computation(c) => {
            let before = c.unroll;
            let after = (before as u64 * 2).min(before as u64 + slack) as u32;
            c.unroll = after;
            (before, after, "unroll")
        }
        NodeAttrs::DataPath(d) => {
            let before = d.port_width_bits;
            let after = (before.saturating_mul(2)).min(max_port.max(before));
            d.port_width_bits = after;
            (before, after, "port_width_bits")
        }
        NodeAttrs::Memory(_) => {
            return Err(Error::Template(format!("cannot reallocate memory node `{ip}`")));
        }
    };
    let changed = after > before;
    let detail = if changed {
        format!("{what} {before} -> {after}")
    } else {
        format!("{what} {before} already at budget")
    };
    Ok((
        g,
        RewriteNote {
            node: ip.to_string(),
            successor: None,
            changed,
            detail,
        },
    ))
}
