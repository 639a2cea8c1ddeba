//! Analytical energy, latency and resource prediction.
//!
//! Per IP, a computation node costs
//! `E = e1 + Σ_s (e2 + e_mac·U·⌈W_s/U⌉)` and `L = l1 + Σ_s ⌈W_s/U⌉·l_mac`,
//! a data path or memory costs `E = e3 + Σ_s (e4 + V_s·e_bit)` and
//! `L = l2 + Σ_s (l3 + ⌈V_s/P_w⌉·l_bit)`. The system energy is the sum over
//! IPs; the system latency is the heaviest dependency path of each round,
//! summed over rounds. Host overheads are added once.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cost_model::{graph_timing, host_cycles, NodeTiming};
use crate::cost::UnitCostLibrary;
use crate::error::Result;
use crate::graph::{dependency_dag, longest_path, AccelGraph, IpNode, NodeAttrs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpEstimate {
    pub energy: f64,
    /// In cycles of the IP's own clock.
    pub latency_cycles: u64,
    pub latency_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResourceReport {
    /// Memory implementation to total bits.
    pub mem_bits_by_impl: BTreeMap<String, u64>,
    pub mul_count: u64,
    /// Multipliers charged for memory address decoding (part of `mul_count`).
    pub mul_decode_count: u64,
}

impl ResourceReport {
    pub fn mem_bits_total(&self) -> u64 {
        self.mem_bits_by_impl.values().sum()
    }
}

/// Heaviest dependency path of one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPath {
    pub round: u32,
    pub label: String,
    pub path: Vec<String>,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub energy_total: f64,
    /// Global-clock cycles, host overhead included.
    pub latency_cycles: u64,
    pub latency_seconds: f64,
    pub clock_mhz: f64,
    pub host_cycles: u64,
    pub host_energy: f64,
    /// Concatenation of the per-round heaviest paths.
    pub critical_path: Vec<String>,
    pub rounds: Vec<RoundPath>,
    pub resources: ResourceReport,
    pub per_ip: BTreeMap<String, IpEstimate>,
}

fn estimate_from(node: &IpNode, t: &NodeTiming) -> IpEstimate {
    let cycles = t.warmup_ip + t.ip_cycles.iter().sum::<u64>();
    IpEstimate {
        energy: t.energy(t.energies.len()),
        latency_cycles: cycles,
        latency_seconds: cycles as f64 / node.freq_hz(),
    }
}

/// Energy and latency of a single IP with its current state machine.
pub fn ip_estimate(ip: &IpNode, technology: &str, costs: &UnitCostLibrary) -> Result<IpEstimate> {
    let entry = costs.lookup(&ip.implementation, technology)?;
    let t = NodeTiming::new(ip, &entry.params, ip.freq_mhz);
    Ok(estimate_from(ip, &t))
}

/// `R_mem = Σ Vol` per implementation and `R_mul = Σ U + mul_per_decode · #memories`.
pub fn resource_usage(graph: &AccelGraph, costs: &UnitCostLibrary) -> ResourceReport {
    let mut r = ResourceReport::default();
    for n in &graph.nodes {
        match &n.attrs {
            NodeAttrs::Memory(m) => {
                *r.mem_bits_by_impl.entry(n.implementation.clone()).or_default() += m.volume_bits;
                r.mul_decode_count += costs.mul_per_decode;
            }
            NodeAttrs::Computation(c) => r.mul_count += c.unroll as u64,
            NodeAttrs::DataPath(_) => {}
        }
    }
    r.mul_count += r.mul_decode_count;
    r
}

/// Coarse prediction of a bound (or unbound) graph.
pub fn predict_coarse(graph: &AccelGraph, costs: &UnitCostLibrary) -> Result<PredictionReport> {
    let timing = graph_timing(graph, costs)?;
    predict_with_timing(graph, costs, &timing)
}

pub(crate) fn predict_with_timing(
    graph: &AccelGraph,
    costs: &UnitCostLibrary,
    timing: &[NodeTiming],
) -> Result<PredictionReport> {
    let dag = dependency_dag(graph)?;
    let bound = graph.is_bound();
    let n = graph.nodes.len();
    let n_rounds = dag.rounds.last().map_or(0, |r| r.round as usize + 1);
    let mut weights = vec![0u64; if bound { n * n_rounds } else { 0 }];
    if bound {
        for (i, node) in graph.nodes.iter().enumerate() {
            for (st, d) in node.states.iter().zip(&timing[i].durations) {
                weights[st.round as usize * n + i] += d;
            }
        }
    }
    let mut rounds = Vec::with_capacity(dag.rounds.len());
    let mut critical_path = Vec::new();
    let mut cycles = 0u64;
    for r in &dag.rounds {
        let (w, path) = longest_path(graph, r, |v| {
            if bound {
                weights[r.round as usize * n + v]
            } else {
                timing[v].warmup_global
            }
        })?;
        let ids: Vec<String> = path.iter().map(|&v| graph.nodes[v].id.clone()).collect();
        critical_path.extend(ids.iter().cloned());
        cycles += w;
        rounds.push(RoundPath {
            round: r.round,
            label: graph
                .round_labels
                .get(r.round as usize)
                .cloned()
                .unwrap_or_else(|| format!("round{}", r.round)),
            path: ids,
            cycles: w,
        });
    }
    let host = host_cycles(graph, costs);
    let latency_cycles = cycles + host;
    let mut energy = 0.0;
    let mut per_ip = BTreeMap::new();
    for (n, t) in graph.nodes.iter().zip(timing) {
        let est = estimate_from(n, t);
        energy += est.energy;
        per_ip.insert(n.id.clone(), est);
    }
    Ok(PredictionReport {
        energy_total: energy + costs.host.energy,
        latency_cycles,
        latency_seconds: latency_cycles as f64 / graph.clock_hz(),
        clock_mhz: graph.clock_mhz,
        host_cycles: host,
        host_energy: costs.host.energy,
        critical_path,
        rounds,
        resources: resource_usage(graph, costs),
        per_ip,
    })
}
