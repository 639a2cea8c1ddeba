//! Per-state energy and duration shared by both predictors.
//!
//! Keeping one arithmetic path means the simulated energy of a completed run
//! is bit-identical to the analytical energy.

use crate::cost::{IpCostParams, UnitCostLibrary};
use crate::error::Result;
use crate::graph::{AccelGraph, IpNode, IpState, NodeAttrs};

/// `ceil(x)`, except that values within 1e-9 (relative) of an integer snap to it.
/// Keeps `5e-9 s * 200 MHz` at 1 cycle instead of 2 from floating-point noise.
pub fn robust_ceil(x: f64) -> u64 {
    if x.is_nan() || x <= 0.0 {
        return 0;
    }
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Converts cycles of an IP clock to cycles of the global clock, rounding up.
pub fn to_global(ip_cycles: u64, freq_mhz: f64, clock_mhz: f64) -> u64 {
    if freq_mhz == clock_mhz {
        ip_cycles
    } else {
        robust_ceil(ip_cycles as f64 * clock_mhz / freq_mhz)
    }
}

pub fn warmup_cycles(node: &IpNode, p: &IpCostParams) -> u64 {
    robust_ceil(p.l_warmup * node.freq_hz())
}

/// MAC steps of a computation state: `ceil(work / U)`.
fn steps(work: u64, unroll: u32) -> u64 {
    work.div_ceil(unroll.max(1) as u64)
}

/// Duration of one state in IP cycles. Never less than one cycle.
pub fn state_cycles(node: &IpNode, p: &IpCostParams, st: &IpState) -> u64 {
    let f = node.freq_hz();
    let cycles = match &node.attrs {
        NodeAttrs::Computation(c) => steps(st.work, c.unroll) * robust_ceil(p.l_mac * f),
        NodeAttrs::Memory(_) | NodeAttrs::DataPath(_) => {
            let port = node.port_width().unwrap_or(1).max(1) as u64;
            let beats = st.work.div_ceil(port);
            robust_ceil((p.l_control_per_state + beats as f64 * p.l_bit) * f)
        }
    };
    cycles.max(1)
}

/// Energy of one state: `e2 + e_mac*U*steps` or `e4 + V*e_bit`.
pub fn state_energy(node: &IpNode, p: &IpCostParams, st: &IpState) -> f64 {
    match &node.attrs {
        NodeAttrs::Computation(c) => {
            p.e_control_per_state + p.e_mac * (c.unroll as u64 * steps(st.work, c.unroll)) as f64
        }
        NodeAttrs::Memory(_) | NodeAttrs::DataPath(_) => p.e_control_per_state + st.work as f64 * p.e_bit,
    }
}

/// Resolved timing and energy of one node, in global-clock cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTiming {
    pub warmup_energy: f64,
    /// Warm-up in global cycles (used when the node has no states).
    pub warmup_global: u64,
    /// Warm-up in IP cycles.
    pub warmup_ip: u64,
    /// State durations in IP cycles, excluding warm-up.
    pub ip_cycles: Vec<u64>,
    /// State durations in global cycles, warm-up folded into the first.
    pub durations: Vec<u64>,
    pub energies: Vec<f64>,
}

impl NodeTiming {
    pub fn new(node: &IpNode, p: &IpCostParams, clock_mhz: f64) -> Self {
        let warmup_ip = warmup_cycles(node, p);
        let ip_cycles: Vec<u64> = node.states.iter().map(|s| state_cycles(node, p, s)).collect();
        let durations = ip_cycles
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let c = if i == 0 { c + warmup_ip } else { c };
                to_global(c, node.freq_mhz, clock_mhz)
            })
            .collect();
        NodeTiming {
            warmup_energy: p.e_warmup,
            warmup_global: to_global(warmup_ip, node.freq_mhz, clock_mhz),
            warmup_ip,
            ip_cycles,
            durations,
            energies: node.states.iter().map(|s| state_energy(node, p, s)).collect(),
        }
    }

    /// Warm-up energy plus the first `completed` state energies, accumulated in order.
    pub fn energy(&self, completed: usize) -> f64 {
        self.energies[..completed]
            .iter()
            .fold(self.warmup_energy, |acc, e| acc + e)
    }
}

/// Timing of every node of `graph`, in node order.
pub fn graph_timing(graph: &AccelGraph, costs: &UnitCostLibrary) -> Result<Vec<NodeTiming>> {
    graph
        .nodes
        .iter()
        .map(|n| {
            let entry = costs.lookup(&n.implementation, &graph.technology)?;
            Ok(NodeTiming::new(n, &entry.params, graph.clock_mhz))
        })
        .collect()
}

/// Host overhead in global cycles.
pub fn host_cycles(graph: &AccelGraph, costs: &UnitCostLibrary) -> u64 {
    robust_ceil(costs.host.latency * graph.clock_hz())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robust_ceil_snaps_noise() {
        assert_eq!(robust_ceil(5e-9 * 200e6), 1);
        assert_eq!(robust_ceil(1.000_000_000_1), 1);
        assert_eq!(robust_ceil(1.01), 2);
        assert_eq!(robust_ceil(0.0), 0);
        assert_eq!(robust_ceil(0.2), 1);
    }

    #[test]
    fn global_conversion_rounds_up() {
        assert_eq!(to_global(3, 100.0, 100.0), 3);
        assert_eq!(to_global(3, 100.0, 200.0), 6);
        assert_eq!(to_global(3, 200.0, 100.0), 2);
    }
}
