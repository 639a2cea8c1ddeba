mod common;

use accelforge::graph::validate_graph;
use accelforge::predict::{predict_coarse, simulate, SimLimits};
use common::*;

#[test]
fn corpus_graphs_are_valid_and_within_size() {
    for seed in 0..CORPUS_SIZE as u64 {
        let g = random_graph(seed);
        assert!(g.nodes.len() <= MAX_NODES);
        assert!(g.state_count() <= MAX_STATES);
        assert_eq!(validate_graph(&g), vec![], "seed {seed}");
    }
}

#[test]
fn reference_durations_match_library_arithmetic() {
    let costs = corpus_costs();
    for seed in 0..50 {
        let g = random_graph(seed);
        let r = predict_coarse(&g, &costs).unwrap();
        for n in g.nodes.iter().filter(|n| !n.states.is_empty()) {
            let total: u64 = (0..n.states.len()).map(|s| reference_duration(n, s)).sum();
            assert_eq!(r.per_ip[&n.id].latency_cycles, total, "seed {seed} node {}", n.id);
        }
    }
}

#[test]
fn fine_matches_reference_simulator() {
    let costs = corpus_costs();
    for seed in 0..CORPUS_SIZE as u64 {
        let g = random_graph(seed);
        let fine = simulate(&g, &costs, SimLimits::default()).unwrap();
        let reference = reference_simulate(&g).expect("corpus graphs never deadlock");
        assert_eq!(fine.total_cycles, reference.total_cycles, "seed {seed}");
        for (i, n) in g.nodes.iter().enumerate() {
            assert_eq!(fine.idle(&n.id), Some(reference.idle[i]), "seed {seed} idle {}", n.id);
            assert_eq!(fine.busy(&n.id), Some(reference.busy[i]), "seed {seed} busy {}", n.id);
        }
    }
}

#[test]
fn fine_never_exceeds_coarse() {
    let costs = corpus_costs();
    for seed in 0..CORPUS_SIZE as u64 {
        let g = random_graph(seed);
        let fine = simulate(&g, &costs, SimLimits::default()).unwrap();
        let coarse = predict_coarse(&g, &costs).unwrap();
        assert!(fine.total_cycles <= coarse.latency_cycles, "seed {seed}");
    }
}

#[test]
fn barrier_chains_are_exact() {
    let costs = corpus_costs();
    for n in 2..=8 {
        for rounds in 1..=3 {
            let g = barrier_chain(n, rounds, (n * 10 + rounds) as u64);
            assert_eq!(validate_graph(&g), vec![]);
            let fine = simulate(&g, &costs, SimLimits::default()).unwrap();
            let coarse = predict_coarse(&g, &costs).unwrap();
            assert_eq!(fine.total_cycles, coarse.latency_cycles, "{}", g.name);
            let serial: u64 = g
                .nodes
                .iter()
                .map(|node| (0..node.states.len()).map(|s| reference_duration(node, s)).sum::<u64>())
                .sum();
            assert_eq!(fine.total_cycles, serial + REFERENCE_HOST_CYCLES);
        }
    }
}

#[test]
fn energy_is_schedule_invariant() {
    let costs = corpus_costs();
    for seed in 0..CORPUS_SIZE as u64 {
        let g = random_graph(seed);
        let fine = simulate(&g, &costs, SimLimits::default()).unwrap();
        let coarse = predict_coarse(&g, &costs).unwrap();
        assert_eq!(fine.energy, coarse.energy_total, "seed {seed}");
        let reference = reference_energy(&g);
        assert!((fine.energy - reference).abs() <= 1e-12 * reference, "seed {seed}");
    }
}
