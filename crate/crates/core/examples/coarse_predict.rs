//! Analytical prediction of the 3x3 systolic fixture and of a bound template.

use accelforge::cost::{generic_28nm, load_library};
use accelforge::dnn::load_model;
use accelforge::graph::{bind_mapping, build_bound_graph, build_graph, load_arch, parse_arch};
use accelforge::predict::predict_coarse;
use accelforge::predict::report::prediction_csv;

fn main() -> accelforge::Result<()> {
    let toy = load_library(include_str!("../data/toy-costs.json"))?;
    let g = build_bound_graph(&parse_arch(include_str!("../data/fig6-systolic.json"))?, &toy)?;
    let r = predict_coarse(&g, &toy)?;
    println!("systolic fixture: {} cycles via {}", r.latency_cycles, r.critical_path.join(" -> "));

    let costs = generic_28nm();
    let arch = load_arch(concat!(env!("CARGO_MANIFEST_DIR"), "/data/designs/dwpw-hetero-small.json"))?;
    let model = load_model(concat!(env!("CARGO_MANIFEST_DIR"), "/data/models/dwpw-demo.json"))?;
    let g = bind_mapping(&build_graph(&arch, &costs)?, &model, &arch.schedule.clone().unwrap_or_default())?;
    let r = predict_coarse(&g, &costs)?;
    println!(
        "\n{} on {}: {:.3e} J, {} cycles ({:.3e} s), {} multipliers",
        model.name,
        arch.name,
        r.energy_total,
        r.latency_cycles,
        r.latency_seconds,
        r.resources.mul_count
    );
    for round in &r.rounds {
        println!("  {:<10} {:>7} cycles  {}", round.label, round.cycles, round.path.join(" -> "));
    }
    print!("\n{}", prediction_csv(&g, &r));
    Ok(())
}
