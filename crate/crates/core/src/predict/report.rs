//! JSON and CSV renderings of prediction and simulation results.
//!
//! CSV columns:
//!
//! * coarse: `node,kind,impl,energy_j,latency_cycles,latency_s`, then a
//!   `TOTAL` row with the system energy and latency (host included).
//! * fine: `node,idle_cycles,busy_cycles,states_completed,states_total,energy_j`,
//!   then a `TOTAL` row with total cycles and energy.
//!
//! Floats use the shortest representation that parses back to the same value.

use std::fmt::Write as _;

use super::coarse::PredictionReport;
use super::fine::SimResult;
use crate::graph::AccelGraph;

pub fn prediction_json(report: &PredictionReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn simulation_json(sim: &SimResult) -> String {
    serde_json::to_string_pretty(sim).expect("result serializes")
}

pub fn prediction_csv(graph: &AccelGraph, report: &PredictionReport) -> String {
    let mut out = String::from("node,kind,impl,energy_j,latency_cycles,latency_s\n");
    for n in &graph.nodes {
        if let Some(e) = report.per_ip.get(&n.id) {
            let _ = writeln!(
                out,
                "{},{},{},{:?},{},{:?}",
                n.id,
                n.kind(),
                n.implementation,
                e.energy,
                e.latency_cycles,
                e.latency_seconds
            );
        }
    }
    let _ = writeln!(
        out,
        "TOTAL,,,{:?},{},{:?}",
        report.energy_total, report.latency_cycles, report.latency_seconds
    );
    out
}

pub fn simulation_csv(sim: &SimResult) -> String {
    let mut out = String::from("node,idle_cycles,busy_cycles,states_completed,states_total,energy_j\n");
    for (id, a) in &sim.per_ip {
        let _ = writeln!(
            out,
            "{id},{},{},{},{},{:?}",
            a.idle_cycles, a.busy_cycles, a.states_completed, a.states_total, a.energy
        );
    }
    let _ = writeln!(out, "TOTAL,,{},,,{:?}", sim.total_cycles, sim.energy);
    out
}
