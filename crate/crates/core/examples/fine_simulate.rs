//! Cycle-level simulation of the 3x3 systolic fixture with a transition trace.

use accelforge::cost::load_library;
use accelforge::graph::{build_bound_graph, parse_arch};
use accelforge::predict::{export_trace, predict_coarse, simulate, SimLimits};

fn main() -> accelforge::Result<()> {
    let costs = load_library(include_str!("../data/toy-costs.json"))?;
    let g = build_bound_graph(&parse_arch(include_str!("../data/fig6-systolic.json"))?, &costs)?;
    let sim = simulate(&g, &costs, SimLimits::with_trace())?;
    let coarse = predict_coarse(&g, &costs)?;
    println!("fine {} cycles, coarse {} cycles", sim.total_cycles, coarse.latency_cycles);
    println!("bottleneck: {}", sim.bottleneck.as_deref().unwrap_or("-"));
    for i in 0..3 {
        let row: Vec<String> = (0..3)
            .map(|j| format!("{:>2}", sim.idle(&format!("mac_{i}_{j}")).unwrap_or(0)))
            .collect();
        println!("idle row {i}: {}", row.join(" "));
    }
    print!("{}", export_trace(&sim)?);
    Ok(())
}
