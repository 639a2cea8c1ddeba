use accelforge::cost::load_library_file;
use accelforge::graph::{build_bound_graph, critical_paths, load_arch, validate_graph};
use accelforge::predict::{bottleneck, export_trace, predict_coarse, simulate, SimLimits};

fn data(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn fixture() -> (accelforge::graph::AccelGraph, accelforge::cost::UnitCostLibrary) {
    let costs = load_library_file(data("toy-costs.json")).unwrap();
    let g = build_bound_graph(&load_arch(data("fig6-systolic.json")).unwrap(), &costs).unwrap();
    (g, costs)
}

#[test]
fn fixture_is_valid() {
    let (g, _) = fixture();
    assert_eq!(validate_graph(&g), vec![]);
}

#[test]
fn coarse_is_fifteen_cycles() {
    let (g, costs) = fixture();
    let r = predict_coarse(&g, &costs).unwrap();
    assert_eq!(r.latency_cycles, 15);
    assert_eq!(r.critical_path.len(), 5);
}

#[test]
fn fine_is_seven_cycles() {
    let (g, costs) = fixture();
    let s = simulate(&g, &costs, SimLimits::with_trace()).unwrap();
    assert_eq!(s.total_cycles, 7);
    assert_eq!(bottleneck(&s).as_deref(), Some("mac_0_0"));
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(s.idle(&format!("mac_{i}_{j}")), Some((i + j) as u64));
            assert_eq!(s.busy(&format!("mac_{i}_{j}")), Some(3));
        }
    }
    let trace = export_trace(&s).unwrap();
    assert!(trace.starts_with("cycle,node,from_state,to_state\n"));
}

#[test]
fn every_maximal_path_crosses_five_macs() {
    let (g, _) = fixture();
    let paths = critical_paths(&g).unwrap();
    assert_eq!(paths.len(), 6);
    assert!(paths.iter().all(|p| p.len() == 5));
}
