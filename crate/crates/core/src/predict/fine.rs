//! Cycle-level run-time simulation of a bound graph.
//!
//! Every cycle each IP is idle or busy. An idle IP whose next state has all its
//! needed tokens (produced in a strictly earlier cycle) becomes busy for the
//! state's duration; otherwise it counts an idle cycle. A busy IP releases all
//! outputs of its state at once when the duration elapses, and may start its
//! next state in the following cycle. The run ends once every final output
//! token exists (or, with no final outputs, once every state has run).
//!
//! Cycles in which nothing can change are skipped in one step; the idle
//! counters are advanced by the number of skipped cycles.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cost_model::{graph_timing, host_cycles, NodeTiming};
use crate::cost::UnitCostLibrary;
use crate::error::{Error, Result};
use crate::graph::AccelGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimLimits {
    pub max_cycles: u64,
    pub trace_enabled: bool,
}

impl Default for SimLimits {
    fn default() -> Self {
        SimLimits {
            max_cycles: 1_000_000_000,
            trace_enabled: false,
        }
    }
}

impl SimLimits {
    pub fn with_trace() -> Self {
        SimLimits {
            trace_enabled: true,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IpActivity {
    pub idle_cycles: u64,
    pub busy_cycles: u64,
    pub states_total: usize,
    pub states_completed: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub node: String,
    pub from_state: String,
    pub to_state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Simulated cycles plus host overhead, on the global clock.
    pub total_cycles: u64,
    pub host_cycles: u64,
    pub latency_seconds: f64,
    pub clock_mhz: f64,
    pub energy: f64,
    pub per_ip: BTreeMap<String, IpActivity>,
    pub bottleneck: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEvent>>,
}

impl SimResult {
    pub fn idle(&self, node: &str) -> Option<u64> {
        self.per_ip.get(node).map(|a| a.idle_cycles)
    }

    pub fn busy(&self, node: &str) -> Option<u64> {
        self.per_ip.get(node).map(|a| a.busy_cycles)
    }

    pub fn per_ip_idle_cycles(&self) -> BTreeMap<String, u64> {
        self.per_ip.iter().map(|(k, a)| (k.clone(), a.idle_cycles)).collect()
    }

    pub fn per_ip_busy_cycles(&self) -> BTreeMap<String, u64> {
        self.per_ip.iter().map(|(k, a)| (k.clone(), a.busy_cycles)).collect()
    }
}

/// IP with the fewest idle cycles among those that have states. Ties go to the
/// lexicographically smallest id.
pub fn bottleneck(sim: &SimResult) -> Option<String> {
    sim.per_ip
        .iter()
        .filter(|(_, a)| a.states_total > 0)
        .min_by_key(|(_, a)| a.idle_cycles)
        .map(|(id, _)| id.clone())
}

/// Line-oriented trace: a header, then `cycle,node,from_state,to_state` per transition.
pub fn export_trace(sim: &SimResult) -> Result<String> {
    let trace = sim
        .trace
        .as_ref()
        .ok_or_else(|| Error::Config("simulation was run without tracing".into()))?;
    let mut out = String::from("cycle,node,from_state,to_state\n");
    for e in trace {
        let _ = writeln!(out, "{},{},{},{}", e.cycle, e.node, e.from_state, e.to_state);
    }
    Ok(out)
}

pub fn simulate(graph: &AccelGraph, costs: &UnitCostLibrary, limits: SimLimits) -> Result<SimResult> {
    let timing = graph_timing(graph, costs)?;
    simulate_with_timing(graph, costs, &timing, limits)
}

const NOT_READY: u64 = u64::MAX;

pub(crate) fn simulate_with_timing(
    graph: &AccelGraph,
    costs: &UnitCostLibrary,
    timing: &[NodeTiming],
    limits: SimLimits,
) -> Result<SimResult> {
    let n = graph.nodes.len();
    // First cycle in which each token is visible.
    let mut ready_at = vec![NOT_READY; graph.tokens.len()];
    for t in &graph.primary_inputs {
        ready_at[t.0 as usize] = 0;
    }
    let mut is_final = vec![false; graph.tokens.len()];
    let mut finals_left = 0usize;
    for t in &graph.final_outputs {
        is_final[t.0 as usize] = true;
        if ready_at[t.0 as usize] == NOT_READY {
            finals_left += 1;
        }
    }
    let wait_all = graph.final_outputs.is_empty();
    let mut states_left: usize = graph.state_count();

    let mut next = vec![0usize; n];
    let mut start = vec![0u64; n];
    let mut finish: Vec<Option<u64>> = vec![None; n];
    let mut idle = vec![0u64; n];
    let mut busy = vec![0u64; n];
    let mut trace = limits.trace_enabled.then(Vec::new);
    let mut waiting = Vec::with_capacity(n);
    let state_name = |k: usize| format!("s{k}");

    let mut cycle = 0u64;
    loop {
        for ip in 0..n {
            if finish[ip] != Some(cycle) {
                continue;
            }
            let k = next[ip] - 1;
            for t in &graph.nodes[ip].states[k].produces {
                let slot = &mut ready_at[t.0 as usize];
                if *slot == NOT_READY {
                    *slot = cycle;
                    if is_final[t.0 as usize] {
                        finals_left -= 1;
                    }
                }
            }
            busy[ip] += cycle - start[ip];
            finish[ip] = None;
            states_left -= 1;
            if let Some(tr) = trace.as_mut() {
                tr.push(TraceEvent {
                    cycle,
                    node: graph.nodes[ip].id.clone(),
                    from_state: state_name(k),
                    to_state: "idle".into(),
                });
            }
        }
        let done = if wait_all { states_left == 0 } else { finals_left == 0 };
        if done {
            break;
        }

        waiting.clear();
        for ip in 0..n {
            if finish[ip].is_some() {
                continue;
            }
            let node = &graph.nodes[ip];
            let Some(st) = node.states.get(next[ip]) else {
                continue;
            };
            if st.needs.iter().all(|t| ready_at[t.0 as usize] <= cycle) {
                let k = next[ip];
                start[ip] = cycle;
                finish[ip] = Some(cycle + timing[ip].durations[k]);
                next[ip] += 1;
                if let Some(tr) = trace.as_mut() {
                    tr.push(TraceEvent {
                        cycle,
                        node: node.id.clone(),
                        from_state: "idle".into(),
                        to_state: state_name(k),
                    });
                }
            } else {
                idle[ip] += 1;
                waiting.push(ip);
            }
        }

        let Some(next_cycle) = finish.iter().flatten().copied().min() else {
            let mut starved: Vec<String> = waiting
                .iter()
                .flat_map(|&ip| graph.nodes[ip].states[next[ip]].needs.iter())
                .filter(|t| ready_at[t.0 as usize] == NOT_READY)
                .map(|t| graph.tokens.name(*t).to_string())
                .collect();
            if starved.is_empty() {
                starved = graph
                    .final_outputs
                    .iter()
                    .filter(|t| ready_at[t.0 as usize] == NOT_READY)
                    .map(|t| graph.tokens.name(*t).to_string())
                    .collect();
            }
            starved.sort();
            starved.dedup();
            return Err(Error::Deadlock { cycle, starved });
        };
        if next_cycle > limits.max_cycles {
            return Err(Error::CycleLimit(limits.max_cycles));
        }
        for &ip in &waiting {
            idle[ip] += next_cycle - cycle - 1;
        }
        cycle = next_cycle;
    }

    let host = host_cycles(graph, costs);
    let mut energy = 0.0;
    let mut per_ip = BTreeMap::new();
    for ip in 0..n {
        let node = &graph.nodes[ip];
        let completed = next[ip] - usize::from(finish[ip].is_some());
        if finish[ip].is_some() {
            busy[ip] += cycle - start[ip];
        }
        let e = timing[ip].energy(completed);
        energy += e;
        per_ip.insert(
            node.id.clone(),
            IpActivity {
                idle_cycles: idle[ip],
                busy_cycles: busy[ip],
                states_total: node.states.len(),
                states_completed: completed,
                energy: e,
            },
        );
    }
    let total_cycles = cycle + host;
    let mut result = SimResult {
        total_cycles,
        host_cycles: host,
        latency_seconds: total_cycles as f64 / graph.clock_hz(),
        clock_mhz: graph.clock_mhz,
        energy: energy + costs.host.energy,
        per_ip,
        bottleneck: None,
        trace,
    };
    result.bottleneck = bottleneck(&result);
    Ok(result)
}
