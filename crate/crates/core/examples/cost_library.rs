//! Lists the bundled unit-cost library and merges a second technology into it.

use accelforge::cost::{generic_28nm, load_library};

fn main() -> accelforge::Result<()> {
    let mut lib = generic_28nm();
    lib.merge(load_library(include_str!("../data/toy-costs.json"))?)?;
    for tech in lib.technologies().collect::<std::collections::BTreeSet<_>>() {
        println!("{tech}: {}", lib.provenance(tech).unwrap_or("-"));
    }
    for (imp, tech) in lib.keys() {
        let e = lib.lookup(imp, tech)?;
        println!(
            "  {tech:<13} {imp:<11} {:<12} e_mac={:e} l_mac={:e} e_bit={:e} l_bit={:e}",
            e.kind.to_string(),
            e.params.e_mac,
            e.params.l_mac,
            e.params.e_bit,
            e.params.l_bit
        );
    }
    println!("host overhead: {:e} J, {:e} s", lib.host.energy, lib.host.latency);
    Ok(())
}
