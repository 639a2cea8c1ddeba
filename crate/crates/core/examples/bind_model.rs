//! Binds a model onto a template and shows the generated state machines.

use accelforge::builder::{instantiate_template, TemplateKind, TemplateParams};
use accelforge::cost::generic_28nm;
use accelforge::dnn::load_model;
use accelforge::graph::{bind_mapping, build_graph, validate_graph, DataSchedule};

fn main() -> accelforge::Result<()> {
    let costs = generic_28nm();
    let model = load_model(concat!(env!("CARGO_MANIFEST_DIR"), "/data/models/toy2-exported.json"))?;
    let arch = instantiate_template(TemplateKind::AdderTreeSpatial, &TemplateParams::new())?;
    let schedule = DataSchedule {
        tile_channels: Some(8),
        ..DataSchedule::named("c8")
    };
    let g = bind_mapping(&build_graph(&arch, &costs)?, &model, &schedule)?;
    assert!(validate_graph(&g).is_empty());
    println!("rounds: {:?}", g.round_labels);
    for n in &g.nodes {
        println!("{} ({} states, work {})", n.id, n.states.len(), n.total_work());
        for (k, s) in n.states.iter().enumerate().take(3) {
            println!(
                "  s{k} r{} needs {:?} -> {:?} work {}",
                s.round,
                g.token_names(&s.needs),
                g.token_names(&s.produces),
                s.work
            );
        }
    }
    println!("MAC work {} == model MACs {}", g.total_mac_work(), model.total_macs());
    Ok(())
}
