//! Runs the bundled two-stage exploration and writes its outputs.
//!
//! `cargo run --release --example explore [out_dir]`

use accelforge::builder::explore::{default_threads, render_report};
use accelforge::builder::{explore, write_outputs, ExploreConfig, ReportFormat};

fn main() -> accelforge::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "explore-out".into());
    let config = ExploreConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/explore/demo.json"))?;
    let (model, costs) = config.load_inputs()?;
    let outcome = explore(&config, &model, &costs, config.threads.unwrap_or_else(default_threads))?;
    let c = outcome.manifest.counters;
    println!("enumerated {} -> N1 {} -> N2 {} -> N3 {} -> N_opt {}", c.enumerated, c.n1, c.n2, c.n3, c.n_opt);
    for rc in &outcome.manifest.candidates {
        let cand = &rc.candidate;
        println!(
            "#{} {} variant {}: {} -> {} cycles, {:.3e} J",
            rc.rank,
            cand.point.label(),
            cand.variant,
            cand.fine.initial.total_cycles,
            cand.fine.best.total_cycles,
            cand.energy()
        );
    }
    print!("{}", render_report(&outcome.manifest, ReportFormat::Csv));
    write_outputs(&outcome, &out)?;
    println!("wrote {out}/manifest.json, timing.json, pareto.csv");
    Ok(())
}
