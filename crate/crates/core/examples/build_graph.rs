//! Instantiates each architecture template, checks it and prints its shape.
//! With `--dot`, prints the systolic array as Graphviz instead.

use accelforge::builder::{instantiate_template, TemplateKind, TemplateParams};
use accelforge::cost::generic_28nm;
use accelforge::graph::{build_graph, validate_graph, IpKind};

fn main() -> accelforge::Result<()> {
    let costs = generic_28nm();
    let small: TemplateParams = [("dim".to_string(), 3)].into_iter().collect();
    if std::env::args().any(|a| a == "--dot") {
        let g = build_graph(&instantiate_template(TemplateKind::SystolicArray, &small)?, &costs)?;
        print!("{}", g.to_dot());
        return Ok(());
    }
    for kind in TemplateKind::ALL {
        let params = match kind {
            TemplateKind::SystolicArray | TemplateKind::RowStationaryNoc => small.clone(),
            _ => TemplateParams::new(),
        };
        let arch = instantiate_template(kind, &params)?;
        let g = build_graph(&arch, &costs)?;
        let diags = validate_graph(&g);
        println!(
            "{kind:<20} nodes={:<3} edges={:<3} memory={} compute={} data_path={} diagnostics={}",
            g.nodes.len(),
            g.edges.len(),
            arch.count_kind(IpKind::Memory),
            arch.count_kind(IpKind::Computation),
            arch.count_kind(IpKind::DataPath),
            diags.len()
        );
    }
    Ok(())
}
