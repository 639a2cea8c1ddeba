//! Runs the pipeline co-optimisation loop on each block of the demo model.

use accelforge::builder::stage2::actionable_bottleneck;
use accelforge::builder::{optimize_candidate, AppSpec, ConvergenceRule, Objective, ResourceBudget};
use accelforge::cost::generic_28nm;
use accelforge::dnn::load_model;
use accelforge::graph::{bind_mapping, build_graph, load_arch};

fn main() -> accelforge::Result<()> {
    let costs = generic_28nm();
    let arch = load_arch(concat!(env!("CARGO_MANIFEST_DIR"), "/data/designs/dwpw-hetero-small.json"))?;
    let model = load_model(concat!(env!("CARGO_MANIFEST_DIR"), "/data/models/dwpw-demo.json"))?;
    let base = build_graph(&arch, &costs)?;
    let spec = AppSpec {
        objective: Objective::MinLatency,
        throughput_fps_min: 1.0,
        power_budget_w: 10.0,
        resource_budget: ResourceBudget {
            mul_count: 4096,
            mem_bits: 1 << 40,
            mem_bits_by_impl: Default::default(),
        },
        max_port_width_bits: None,
    };
    for b in 1..=6 {
        let prefix = format!("b{b}_");
        let ids: Vec<&str> = model.layers.iter().map(|l| l.id.as_str()).filter(|id| id.starts_with(&prefix)).collect();
        let block = model.sub_model(format!("block{b}"), &ids)?;
        let g = bind_mapping(&base, &block, &arch.schedule.clone().unwrap_or_default())?;
        let out = optimize_candidate(&g, &spec, &costs, &ConvergenceRule::default())?;
        let bn = &g.nodes[actionable_bottleneck(&g, &out.initial).expect("block has states")].id;
        println!(
            "block {b}: {} -> {} cycles in {} steps; bottleneck {bn} idle {} -> {}",
            out.initial.total_cycles,
            out.best.total_cycles,
            out.iterations,
            out.initial.idle(bn).unwrap_or(0),
            out.best.idle(bn).unwrap_or(0)
        );
        for s in out.log.iter().filter(|s| s.accepted) {
            println!("    {:?} {}: {} ({} -> {})", s.action, s.note.node, s.note.detail, s.cycles_before, s.cycles_after);
        }
    }
    Ok(())
}
