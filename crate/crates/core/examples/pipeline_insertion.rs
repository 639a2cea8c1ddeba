//! Splits the states of a two-IP producer/consumer pair and compares latency.

use accelforge::builder::{insert_pipeline, AppSpec, ResourceBudget};
use accelforge::builder::pipeline::reallocate_resource;
use accelforge::cost::load_library;
use accelforge::graph::{build_bound_graph, parse_arch};
use accelforge::predict::{simulate, SimLimits};

fn main() -> accelforge::Result<()> {
    let costs = load_library(include_str!("../data/toy-costs.json"))?;
    let mut g = build_bound_graph(&parse_arch(include_str!("../data/fig5-two-ip.json"))?, &costs)?;
    println!("unpipelined: {} cycles", simulate(&g, &costs, SimLimits::default())?.total_cycles);
    for _ in 0..3 {
        let (next, note) = insert_pipeline(&g, "dp", 2)?;
        g = next;
        let sim = simulate(&g, &costs, SimLimits::default())?;
        println!(
            "{}: dp has {} states, pe has {} states, {} cycles",
            note.detail,
            g.node("dp").map_or(0, |n| n.states.len()),
            g.node("pe").map_or(0, |n| n.states.len()),
            sim.total_cycles
        );
    }
    let spec = AppSpec {
        objective: Default::default(),
        throughput_fps_min: 1.0,
        power_budget_w: 1.0,
        resource_budget: ResourceBudget {
            mul_count: 2,
            mem_bits: 1 << 20,
            mem_bits_by_impl: Default::default(),
        },
        max_port_width_bits: None,
    };
    let (g2, note) = reallocate_resource(&g, "pe", &spec, &costs)?;
    println!("reallocate pe: {} -> {} cycles", note.detail, simulate(&g2, &costs, SimLimits::default())?.total_cycles);
    let (_, note) = reallocate_resource(&g2, "pe", &spec, &costs)?;
    println!("again: {} (changed: {})", note.detail, note.changed);
    Ok(())
}
