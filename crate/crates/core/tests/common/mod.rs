//! Shared fixtures: bundled data paths, a random bound-graph generator and a
//! literal cycle-by-cycle reference simulator.

#![allow(dead_code, clippy::manual_div_ceil)]

use std::collections::{BTreeSet, HashSet};

use accelforge::cost::{load_library, UnitCostLibrary};
use accelforge::dnn::LayerKind;
use accelforge::graph::{
    AccelGraph, ComputeAttrs, DataPathAttrs, DataType, Edge, IpKind, IpNode, IpState, MemoryAttrs, NodeAttrs,
    TokenTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub const CORPUS_SIZE: usize = 600;
pub const MAX_NODES: usize = 10;
pub const MAX_STATES: usize = 20;

/// Cost library for the corpus. All nodes run at the 100 MHz global clock,
/// so one cycle is 10 ns and every latency below is a whole number of cycles.
pub const CORPUS_COSTS: &str = r#"{
  "version": 1,
  "technology": "rt",
  "provenance": "test corpus",
  "host": {"energy": 1e-9, "latency": 5e-8},
  "entries": [
    {"impl": "mac", "kind": "computation", "e_warmup": 1e-12, "l_warmup": 3e-8,
     "e_control_per_state": 2e-13, "e_mac": 1e-12, "l_mac": 2e-8},
    {"impl": "link", "kind": "data_path", "e_warmup": 3e-13, "l_warmup": 1e-8,
     "e_control_per_state": 1e-13, "l_control_per_state": 1e-8, "e_bit": 1e-13, "l_bit": 1e-8},
    {"impl": "buffer", "kind": "memory", "e_bit": 2e-13, "l_bit": 1e-8}
  ]
}"#;

pub fn corpus_costs() -> UnitCostLibrary {
    load_library(CORPUS_COSTS).unwrap()
}

/// Cycle length of one state in the corpus library, by integer arithmetic.
pub fn reference_duration(node: &IpNode, state: usize) -> u64 {
    let st = &node.states[state];
    let first = state == 0;
    match &node.attrs {
        NodeAttrs::Computation(c) => {
            let steps = (st.work + c.unroll as u64 - 1) / c.unroll as u64;
            (2 * steps).max(1) + if first { 3 } else { 0 }
        }
        NodeAttrs::DataPath(d) => {
            let beats = (st.work + d.port_width_bits as u64 - 1) / d.port_width_bits as u64;
            1 + beats + if first { 1 } else { 0 }
        }
        NodeAttrs::Memory(m) => {
            let beats = (st.work + m.port_width_bits as u64 - 1) / m.port_width_bits as u64;
            beats.max(1)
        }
    }
}

pub const REFERENCE_HOST_CYCLES: u64 = 5;

/// Energy of a completed run in the corpus library, summed node by node.
pub fn reference_energy(g: &AccelGraph) -> f64 {
    let mut total = 1e-9;
    for n in &g.nodes {
        let mut e = 0.0;
        match &n.attrs {
            NodeAttrs::Computation(c) => {
                e += 1e-12;
                for st in &n.states {
                    let steps = (st.work + c.unroll as u64 - 1) / c.unroll as u64;
                    e += 2e-13 + 1e-12 * (steps * c.unroll as u64) as f64;
                }
            }
            NodeAttrs::DataPath(_) => {
                e += 3e-13;
                for st in &n.states {
                    e += 1e-13 + 1e-13 * st.work as f64;
                }
            }
            NodeAttrs::Memory(_) => {
                for st in &n.states {
                    e += 2e-13 * st.work as f64;
                }
            }
        }
        total += e;
    }
    total
}

/// Outcome of the reference simulator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceRun {
    pub total_cycles: u64,
    pub idle: Vec<u64>,
    pub busy: Vec<u64>,
}

/// Steps one cycle at a time. At the top of a cycle, states whose countdown
/// reached zero publish their tokens; then every free IP either starts its
/// next state (all inputs published) or, if it still has work, waits a cycle.
pub fn reference_simulate(g: &AccelGraph) -> Option<ReferenceRun> {
    let n = g.nodes.len();
    let mut have: HashSet<u32> = g.primary_inputs.iter().map(|t| t.0).collect();
    let finals: Vec<u32> = g.final_outputs.iter().map(|t| t.0).collect();
    let mut pc = vec![0usize; n];
    let mut remaining: Vec<Option<u64>> = vec![None; n];
    let mut idle = vec![0u64; n];
    let mut busy = vec![0u64; n];
    let total_states: usize = g.nodes.iter().map(|x| x.states.len()).sum();
    let mut finished = 0usize;
    let mut cycle = 0u64;
    loop {
        for ip in 0..n {
            if remaining[ip] == Some(0) {
                remaining[ip] = None;
                for t in &g.nodes[ip].states[pc[ip] - 1].produces {
                    have.insert(t.0);
                }
                finished += 1;
            }
        }
        let done = if finals.is_empty() {
            finished == total_states
        } else {
            finals.iter().all(|t| have.contains(t))
        };
        if done {
            return Some(ReferenceRun {
                total_cycles: cycle + REFERENCE_HOST_CYCLES,
                idle,
                busy,
            });
        }
        for ip in 0..n {
            if remaining[ip].is_some() || pc[ip] >= g.nodes[ip].states.len() {
                continue;
            }
            if g.nodes[ip].states[pc[ip]].needs.iter().all(|t| have.contains(&t.0)) {
                remaining[ip] = Some(reference_duration(&g.nodes[ip], pc[ip]));
                pc[ip] += 1;
            } else {
                idle[ip] += 1;
            }
        }
        if remaining.iter().all(Option::is_none) {
            return None;
        }
        for ip in 0..n {
            if let Some(r) = remaining[ip].as_mut() {
                *r -= 1;
                busy[ip] += 1;
            }
        }
        cycle += 1;
    }
}

fn node(id: String, kind: IpKind, rng: &mut ChaCha8Rng) -> IpNode {
    let (implementation, attrs) = match kind {
        IpKind::Computation => (
            "mac",
            NodeAttrs::Computation(ComputeAttrs {
                unroll: [1, 2, 4, 8][rng.gen_range(0..4)],
                ops: BTreeSet::from([LayerKind::Conv]),
                grid: None,
            }),
        ),
        IpKind::DataPath => (
            "link",
            NodeAttrs::DataPath(DataPathAttrs {
                port_width_bits: [8, 16, 32][rng.gen_range(0..3)],
                data_types: DataType::ALL.into_iter().collect(),
            }),
        ),
        IpKind::Memory => (
            "buffer",
            NodeAttrs::Memory(MemoryAttrs {
                volume_bits: 1 << 16,
                data_types: DataType::ALL.into_iter().collect(),
                port_width_bits: [8, 64][rng.gen_range(0..2)],
            }),
        ),
    };
    IpNode {
        id,
        implementation: implementation.into(),
        freq_mhz: 100.0,
        precision: 8,
        attrs,
        states: Vec::new(),
    }
}

fn empty_graph(name: String) -> AccelGraph {
    AccelGraph {
        name,
        technology: "rt".into(),
        clock_mhz: 100.0,
        nodes: Vec::new(),
        edges: Vec::new(),
        tokens: TokenTable::default(),
        primary_inputs: BTreeSet::new(),
        final_outputs: BTreeSet::new(),
        round_labels: Vec::new(),
        split_generation: 0,
    }
}

/// Random valid bound graph: a forward chain with extra forward edges, and
/// states created in a global order so no schedule can deadlock. Every need
/// is a token of an adjacent predecessor (or a primary input); rounds never
/// decrease along the creation order.
pub fn random_graph(seed: u64) -> AccelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=MAX_NODES);
    let mut g = empty_graph(format!("corpus-{seed}"));
    for i in 0..n {
        let kind = if i == 0 || i + 1 == n {
            IpKind::Memory
        } else {
            [IpKind::Computation, IpKind::DataPath, IpKind::Memory][rng.gen_range(0..3)]
        };
        g.nodes.push(node(format!("n{i}"), kind, &mut rng));
    }
    for i in 1..n {
        g.edges.push(Edge { start: i - 1, end: i });
        for j in 0..i - 1 {
            if rng.gen_bool(0.25) {
                g.edges.push(Edge { start: j, end: i });
            }
        }
    }
    let preds: Vec<Vec<usize>> = (0..n)
        .map(|v| g.edges.iter().filter(|e| e.end == v).map(|e| e.start).collect())
        .collect();
    let n_states = rng.gen_range(1..=MAX_STATES);
    let n_rounds = rng.gen_range(1..=3usize);
    g.round_labels = (0..n_rounds).map(|r| format!("r{r}")).collect();
    // Tokens produced so far, per node.
    let mut produced: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut consumed: HashSet<u32> = HashSet::new();
    for k in 0..n_states {
        let v = rng.gen_range(0..n);
        let round = (k * n_rounds / n_states) as u32;
        let mut pool: Vec<u32> = preds[v].iter().flat_map(|&p| produced[p].iter().copied()).collect();
        pool.sort_unstable();
        let mut needs = Vec::new();
        for _ in 0..rng.gen_range(0..=2) {
            if !pool.is_empty() {
                needs.push(pool[rng.gen_range(0..pool.len())]);
            }
        }
        needs.sort_unstable();
        needs.dedup();
        if needs.is_empty() || rng.gen_bool(0.1) {
            let t = g.tokens.intern(&format!("in{k}"));
            g.primary_inputs.insert(t);
            needs.push(t.0);
        }
        consumed.extend(needs.iter().copied());
        let out = g.tokens.intern(&format!("t{k}"));
        produced[v].push(out.0);
        g.nodes[v].states.push(IpState {
            needs: needs.into_iter().map(accelforge::graph::TokenId).collect(),
            produces: vec![out],
            work: rng.gen_range(1..=96),
            round,
        });
    }
    for toks in &produced {
        for &t in toks {
            if !consumed.contains(&t) {
                g.final_outputs.insert(accelforge::graph::TokenId(t));
            }
        }
    }
    g
}

/// Chain of `n` nodes in which every round is a full barrier: node 0 of
/// round r waits for the last node of round r-1.
pub fn barrier_chain(n: usize, rounds: usize, seed: u64) -> AccelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = empty_graph(format!("chain-{n}x{rounds}"));
    for i in 0..n {
        let kind = if i == 0 || i + 1 == n {
            IpKind::Memory
        } else if i % 2 == 0 {
            IpKind::Computation
        } else {
            IpKind::DataPath
        };
        g.nodes.push(node(format!("c{i}"), kind, &mut rng));
    }
    for i in 1..n {
        g.edges.push(Edge { start: i - 1, end: i });
    }
    g.edges.push(Edge { start: n - 1, end: 0 });
    let mut prev = g.tokens.intern("x");
    g.primary_inputs.insert(prev);
    for r in 0..rounds {
        g.round_labels.push(format!("r{r}"));
        for i in 0..n {
            let out = g.tokens.intern(&format!("r{r}n{i}"));
            g.nodes[i].states.push(IpState {
                needs: vec![prev],
                produces: vec![out],
                work: rng.gen_range(1..=64),
                round: r as u32,
            });
            prev = out;
        }
    }
    g.final_outputs.insert(prev);
    g
}

use accelforge::builder::{enumerate_stage1, AppSpec, DesignSpace, Objective, ResourceBudget, TemplateKind, TemplateSpace};
use accelforge::dnn::{load_model, DnnModel};
use accelforge::graph::DataSchedule;

pub fn demo_model() -> DnnModel {
    load_model(data("models/dwpw-demo.json")).unwrap()
}

pub fn spec(mul: u64, mem_bits: u64, fps: f64, power_w: f64) -> AppSpec {
    AppSpec {
        objective: Objective::MinLatency,
        throughput_fps_min: fps,
        power_budget_w: power_w,
        resource_budget: ResourceBudget {
            mul_count: mul,
            mem_bits,
            mem_bits_by_impl: Default::default(),
        },
        max_port_width_bits: None,
    }
}

pub fn tiles(c: u32, r: u32) -> DataSchedule {
    DataSchedule {
        tile_channels: Some(c),
        tile_rows: Some(r),
        ..DataSchedule::named(format!("c{c}r{r}"))
    }
}

/// Grid of 1314 hetero and systolic points, sampled down to 1000.
pub const SOUNDNESS_POINTS: usize = 1000;
pub const SOUNDNESS_SEED: u64 = 42;

pub fn soundness_inputs() -> (DnnModel, AppSpec, DesignSpace) {
    let model = demo_model();
    let spec = spec(300, 1 << 36, 1500.0, 2.0);
    let mut hetero = TemplateSpace::new(TemplateKind::HeteroDwConv)
        .with("dw_unroll", &[1, 2, 4, 8, 16, 32])
        .with("conv_unroll", &[8, 16, 32, 64, 128, 256])
        .with("bus_width", &[16, 32, 64, 128])
        .with("bram_kb", &[64, 128, 256]);
    hetero.schedules = vec![tiles(8, 4), tiles(16, 2), tiles(32, 8)];
    let systolic = TemplateSpace::new(TemplateKind::SystolicArray)
        .with("dim", &[2, 4, 8])
        .with("bus_width", &[32, 64, 128])
        .with("ibuf_kb", &[32, 64]);
    let costs = accelforge::cost::generic_28nm();
    let full = enumerate_stage1(&model, &spec, &[hetero, systolic], &costs).unwrap();
    let space = accelforge::builder::space::sample_space(&full, SOUNDNESS_POINTS, SOUNDNESS_SEED);
    (model, spec, space)
}

/// Re-binds and re-predicts a survivor, then checks every budget by hand.
/// Returns the violated constraint names.
pub fn recheck_survivor(
    e: &accelforge::builder::Stage1Entry,
    model: &DnnModel,
    spec: &AppSpec,
    costs: &UnitCostLibrary,
) -> Vec<&'static str> {
    let g = e.point.bind(model, costs).unwrap();
    let r = accelforge::predict::predict_coarse(&g, costs).unwrap();
    let mut bad = Vec::new();
    let b = &spec.resource_budget;
    if r.resources.mul_count > b.mul_count {
        bad.push("multipliers");
    }
    let mem: u64 = r.resources.mem_bits_by_impl.values().sum();
    if mem > b.mem_bits {
        bad.push("memory");
    }
    for (imp, cap) in &b.mem_bits_by_impl {
        if r.resources.mem_bits_by_impl.get(imp).copied().unwrap_or(0) > *cap {
            bad.push("memory per implementation");
        }
    }
    if r.latency_seconds * spec.throughput_fps_min > 1.0 {
        bad.push("throughput");
    }
    if r.energy_total > spec.power_budget_w * r.latency_seconds {
        bad.push("power");
    }
    if r.latency_cycles != e.latency_cycles || r.energy_total != e.energy {
        bad.push("stale evaluation");
    }
    bad
}

/// Outcome of the optimisation loop on one block of the demo model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRun {
    pub block: usize,
    pub initial_cycles: u64,
    pub best_cycles: u64,
    pub iterations: u32,
    pub bottleneck: String,
    pub idle_before: u64,
    pub idle_after: u64,
    /// Whether any pipeline insertion changed the graph.
    pub pipeline_applicable: bool,
}

pub fn demo_block_runs() -> Vec<BlockRun> {
    use accelforge::builder::stage2::{actionable_bottleneck, StepAction};
    use accelforge::builder::{optimize_candidate, ConvergenceRule};
    use accelforge::graph::{bind_mapping, build_graph, load_arch};
    let costs = accelforge::cost::generic_28nm();
    let arch = load_arch(data("designs/dwpw-hetero-small.json")).unwrap();
    let model = demo_model();
    let base = build_graph(&arch, &costs).unwrap();
    let s = spec(4096, 1 << 40, 1.0, 10.0);
    (1..=6)
        .map(|b| {
            let prefix = format!("b{b}_");
            let ids: Vec<&str> = model.layers.iter().map(|l| l.id.as_str()).filter(|id| id.starts_with(&prefix)).collect();
            let block = model.sub_model(format!("block{b}"), &ids).unwrap();
            let g = bind_mapping(&base, &block, arch.schedule.as_ref().unwrap()).unwrap();
            let out = optimize_candidate(&g, &s, &costs, &ConvergenceRule::default()).unwrap();
            let bn = g.nodes[actionable_bottleneck(&g, &out.initial).unwrap()].id.clone();
            BlockRun {
                block: b,
                initial_cycles: out.initial.total_cycles,
                best_cycles: out.best.total_cycles,
                iterations: out.iterations,
                idle_before: out.initial.idle(&bn).unwrap(),
                idle_after: out.best.idle(&bn).unwrap(),
                bottleneck: bn,
                pipeline_applicable: out.log.iter().any(|s| s.action == StepAction::Pipeline && s.note.changed),
            }
        })
        .collect()
}

/// Golden per-block results on the demo design, frozen after the first
/// verified run: (initial cycles, optimised cycles, bottleneck, idle before, idle after).
pub const DEMO_BLOCK_GOLDEN: [(u64, u64, &str, u64, u64); 6] = [
    (9498, 8884, "conv_engine", 3934, 4141),
    (11658, 4828, "conv_engine", 5422, 2592),
    (6679, 2577, "conv_engine", 2926, 1552),
    (11163, 3917, "conv_engine", 4270, 2828),
    (14555, 4917, "conv_engine", 5614, 3700),
    (10323, 3013, "dw_engine", 5401, 2123),
];
