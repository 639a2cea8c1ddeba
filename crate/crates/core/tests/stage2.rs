mod common;

use accelforge::builder::stage2::StepAction;
use accelforge::builder::{enumerate_stage1, optimize_candidate, optimize_stage2, prune_stage1, ConvergenceRule, TemplateKind, TemplateSpace};
use accelforge::cost::{generic_28nm, load_library_file};
use accelforge::graph::{build_bound_graph, load_arch};
use common::*;

#[test]
fn demo_blocks_match_golden_values() {
    let runs = demo_block_runs();
    for (run, golden) in runs.iter().zip(DEMO_BLOCK_GOLDEN) {
        let got = (run.initial_cycles, run.best_cycles, run.bottleneck.as_str(), run.idle_before, run.idle_after);
        assert_eq!(got, golden, "block {}", run.block);
        assert!(run.pipeline_applicable);
        assert!(run.best_cycles < run.initial_cycles);
    }
}

#[test]
fn accepted_steps_strictly_reduce_latency() {
    let costs = generic_28nm();
    let arch = load_arch(data("designs/dwpw-hetero-small.json")).unwrap();
    let g = accelforge::graph::bind_mapping(
        &build_bound_graph(&arch, &costs).unwrap(),
        &demo_model().sub_model("b3", &["b3_dw", "b3_pw", "b3_relu"]).unwrap(),
        arch.schedule.as_ref().unwrap(),
    )
    .unwrap();
    let conv = ConvergenceRule::default();
    let out = optimize_candidate(&g, &spec(4096, 1 << 40, 1.0, 10.0), &costs, &conv).unwrap();
    let mut current = out.initial.total_cycles;
    let mut accepted = 0;
    for step in &out.log {
        assert_eq!(step.cycles_before, current);
        if step.accepted {
            assert!(step.cycles_after < step.cycles_before);
            current = step.cycles_after;
            accepted += 1;
        }
    }
    assert_eq!(current, out.best.total_cycles);
    assert_eq!(accepted, out.iterations);
    assert!(out.log.len() <= conv.max_iters as usize);
    // Each bottleneck/successor pair is pipelined at most once.
    let mut pairs: Vec<(String, Option<String>)> = out
        .log
        .iter()
        .filter(|s| s.action == StepAction::Pipeline)
        .map(|s| (s.note.node.clone(), s.note.successor.clone()))
        .collect();
    let n = pairs.len();
    pairs.sort();
    pairs.dedup();
    assert_eq!(pairs.len(), n);
}

#[test]
fn a_graph_with_nothing_left_to_change_takes_zero_steps() {
    // One-MAC states cannot be split, and a 9-multiplier budget leaves no
    // room to widen any PE.
    let costs = load_library_file(data("toy-costs.json")).unwrap();
    let g = build_bound_graph(&load_arch(data("fig6-systolic.json")).unwrap(), &costs).unwrap();
    let out = optimize_candidate(&g, &spec(9, 1 << 20, 1.0, 1.0), &costs, &ConvergenceRule::default()).unwrap();
    assert_eq!(out.iterations, 0);
    assert_eq!(out.best, out.initial);
    assert!(out.frozen.is_some());
    assert!(out.log.iter().all(|s| !s.accepted));
}

#[test]
fn candidates_are_ranked_by_score_then_point_then_variant() {
    let costs = generic_28nm();
    let model = demo_model();
    let s = spec(1024, 1 << 36, 100.0, 10.0);
    let mut hetero = TemplateSpace::new(TemplateKind::HeteroDwConv)
        .with("dw_unroll", &[4, 16])
        .with("conv_unroll", &[16, 64]);
    hetero.schedules = vec![tiles(8, 4)];
    let space = enumerate_stage1(&model, &s, &[hetero], &costs).unwrap();
    let stage1 = prune_stage1(&space, &s, &costs, 3);
    assert_eq!(stage1.survivors.len(), 3);
    let all = optimize_stage2(&model, &stage1.survivors, &costs, &s, &ConvergenceRule::default(), usize::MAX, 2).unwrap();
    assert!(all.n3 >= 3);
    assert_eq!(all.candidates.len(), all.n3);
    let mut want: Vec<(f64, usize, usize)> = all
        .candidates
        .iter()
        .map(|c| (c.fine.best.latency_seconds, c.point.index, c.variant))
        .collect();
    want.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let got: Vec<(f64, usize, usize)> = all.candidates.iter().map(|c| (c.score, c.point.index, c.variant)).collect();
    assert_eq!(got, want);
    for c in &all.candidates {
        assert!(c.fine.best.total_cycles <= c.fine.initial.total_cycles);
        assert!(c.fine.best.total_cycles <= c.coarse.latency_cycles);
    }
    let top = optimize_stage2(&model, &stage1.survivors, &costs, &s, &ConvergenceRule::default(), 2, 2).unwrap();
    assert_eq!(top.candidates, all.candidates[..2].to_vec());
}
