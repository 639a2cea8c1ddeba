//! Loads a model-interchange document and prints its per-layer workload.
//!
//! `cargo run --example parse_model [path]`

use accelforge::dnn::{layer_workload, load_model};

fn main() -> accelforge::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/models/skynet-small.json").into());
    let model = load_model(&path)?;
    println!("{}: {} layers, {} edges", model.name, model.layers.len(), model.edge_count());
    println!("{:<8} {:<7} {:>14} {:>12} {:>12}", "layer", "kind", "out", "macs", "weight_bits");
    for i in model.topological_order()? {
        let l = &model.layers[i];
        let w = layer_workload(l, &model.precision);
        println!(
            "{:<8} {:<7} {:>14} {:>12} {:>12}",
            l.id,
            l.kind.name(),
            l.output_shape.to_string(),
            w.mac_count,
            w.weight_volume
        );
    }
    println!("total MACs: {}", model.total_macs());
    Ok(())
}
