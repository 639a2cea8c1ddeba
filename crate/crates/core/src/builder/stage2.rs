//! IP-pipeline co-optimisation driven by the cycle-level simulator.
//!
//! Each iteration simulates the graph and looks at the bottleneck IP. The
//! first time a bottleneck is met together with its main successor, the two
//! are pipelined; afterwards the bottleneck receives more resources. Every
//! step is tentative and is rolled back unless simulated latency drops.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{insert_pipeline_between, pipeline_successor, reallocate_resource, RewriteNote};
use super::space::{AppSpec, DesignPoint, Stage1Entry};
use crate::cost::UnitCostLibrary;
use crate::dnn::DnnModel;
use crate::error::Result;
use crate::graph::{AccelGraph, IpKind};
use crate::predict::{predict_coarse, simulate, PredictionReport, SimLimits, SimResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceRule {
    /// Relative latency improvement below which a step counts as a stall.
    pub rel_tol: f64,
    /// Consecutive stalls that end the loop.
    pub patience: u32,
    pub max_iters: u32,
    /// Split factor per pipeline adoption.
    pub split_factor: u32,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        ConvergenceRule {
            rel_tol: 0.01,
            patience: 2,
            max_iters: 50,
            split_factor: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Pipeline,
    Reallocate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: StepAction,
    pub note: RewriteNote,
    pub cycles_before: u64,
    pub cycles_after: u64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    #[serde(skip)]
    pub graph: Option<AccelGraph>,
    pub initial: SimResult,
    pub best: SimResult,
    /// Accepted steps.
    pub iterations: u32,
    pub log: Vec<StepRecord>,
    /// Why the loop stopped before converging, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<String>,
}

/// IP with the fewest idle cycles among computation and data-path nodes that
/// have states; ties go to the smallest id.
pub fn actionable_bottleneck(graph: &AccelGraph, sim: &SimResult) -> Option<usize> {
    graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.kind() != IpKind::Memory && !n.states.is_empty())
        .filter_map(|(i, n)| sim.idle(&n.id).map(|idle| (idle, &n.id, i)))
        .min()
        .map(|(_, _, i)| i)
}

/// Runs the optimisation loop on one bound graph.
pub fn optimize_candidate(
    graph: &AccelGraph,
    spec: &AppSpec,
    costs: &UnitCostLibrary,
    conv: &ConvergenceRule,
) -> Result<OptimizeOutcome> {
    let limits = SimLimits::default();
    let initial = simulate(graph, costs, limits)?;
    let mut g = graph.clone();
    let mut best = initial.clone();
    let mut adopted: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut log = Vec::new();
    let mut iterations = 0;
    let mut stall = 0;
    let mut frozen = None;
    for _ in 0..conv.max_iters {
        let Some(b) = actionable_bottleneck(&g, &best) else {
            frozen = Some("no computation or data-path IP has states".into());
            break;
        };
        let succ = pipeline_successor(&g, b).filter(|s| !adopted.contains(&(b, *s)));
        let (action, (candidate, note)) = match succ {
            Some(s) => {
                adopted.insert((b, s));
                (StepAction::Pipeline, insert_pipeline_between(&g, b, s, conv.split_factor)?)
            }
            None => (StepAction::Reallocate, reallocate_resource(&g, &g.nodes[b].id, spec, costs)?),
        };
        if !note.changed {
            let stop = action == StepAction::Reallocate;
            if stop {
                frozen = Some(note.detail.clone());
            }
            log.push(StepRecord {
                action,
                note,
                cycles_before: best.total_cycles,
                cycles_after: best.total_cycles,
                accepted: false,
            });
            if stop {
                break;
            }
            continue;
        }
        let sim = simulate(&candidate, costs, limits)?;
        let accepted = sim.total_cycles < best.total_cycles;
        log.push(StepRecord {
            action,
            note,
            cycles_before: best.total_cycles,
            cycles_after: sim.total_cycles,
            accepted,
        });
        if accepted {
            let gain = (best.total_cycles - sim.total_cycles) as f64 / best.total_cycles as f64;
            stall = if gain < conv.rel_tol { stall + 1 } else { 0 };
            iterations += 1;
            g = candidate;
            best = sim;
        } else {
            stall += 1;
        }
        if stall >= conv.patience {
            break;
        }
    }
    Ok(OptimizeOutcome {
        graph: Some(g),
        initial,
        best,
        iterations,
        log,
        frozen,
    })
}

/// Base graph plus up to `max_variants` graphs with one pipeline pre-inserted
/// on an edge feeding a computation node.
pub fn pipeline_variants(graph: &AccelGraph, max_variants: usize, factor: u32) -> Result<Vec<(AccelGraph, Option<RewriteNote>)>> {
    let mut out = vec![(graph.clone(), None)];
    for e in &graph.edges {
        if out.len() > max_variants {
            break;
        }
        if graph.nodes[e.end].kind() != IpKind::Computation || graph.nodes[e.start].kind() == IpKind::Computation {
            continue;
        }
        if pipeline_successor(graph, e.start) != Some(e.end) {
            continue;
        }
        let (g, note) = insert_pipeline_between(graph, e.start, e.end, factor)?;
        if note.changed {
            out.push((g, Some(note)));
        }
    }
    Ok(out)
}

/// A fully optimised design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub point: DesignPoint,
    pub variant: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_note: Option<RewriteNote>,
    pub coarse: PredictionReport,
    pub fine: OptimizeOutcome,
    pub score: f64,
}

impl Candidate {
    pub fn energy(&self) -> f64 {
        self.fine.best.energy
    }

    pub fn latency_seconds(&self) -> f64 {
        self.fine.best.latency_seconds
    }
}

/// Orders by score, then by point index and variant.
pub fn rank_candidates(cands: &mut [Candidate]) {
    cands.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.point.index.cmp(&b.point.index))
            .then(a.variant.cmp(&b.variant))
    });
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Result {
    /// Best first, at most `n_opt`.
    pub candidates: Vec<Candidate>,
    /// Graphs optimised (survivors times variants).
    pub n3: usize,
}

/// Expands each survivor into pipeline variants, optimises all of them in
/// parallel and keeps the best `n_opt`.
pub fn optimize_stage2(
    model: &DnnModel,
    survivors: &[Stage1Entry],
    costs: &UnitCostLibrary,
    spec: &AppSpec,
    conv: &ConvergenceRule,
    n_opt: usize,
    max_variants: usize,
) -> Result<Stage2Result> {
    let jobs: Vec<(DesignPoint, usize, AccelGraph, Option<RewriteNote>)> = survivors
        .par_iter()
        .map(|e| -> Result<Vec<_>> {
            let g = e.point.bind(model, costs)?;
            Ok(pipeline_variants(&g, max_variants, conv.split_factor)?
                .into_iter()
                .enumerate()
                .map(|(v, (g, note))| (e.point.clone(), v, g, note))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let n3 = jobs.len();
    let mut candidates = jobs
        .into_par_iter()
        .map(|(point, variant, g, variant_note)| -> Result<Candidate> {
            let mut fine = optimize_candidate(&g, spec, costs, conv)?;
            let best_graph = fine.graph.take().expect("set by optimize_candidate");
            let coarse = predict_coarse(&best_graph, costs)?;
            let score = spec.objective.score(fine.best.energy, fine.best.latency_seconds);
            Ok(Candidate {
                point,
                variant,
                variant_note,
                coarse,
                fine,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rank_candidates(&mut candidates);
    candidates.truncate(n_opt);
    Ok(Stage2Result { candidates, n3 })
}

