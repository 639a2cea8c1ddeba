//! Application requirements, design points and Stage-1 enumeration/pruning.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::templates::{instantiate_template, resolve_params, TemplateKind, TemplateParams};
use crate::cost::UnitCostLibrary;
use crate::dnn::{DnnModel, LayerKind};
use crate::error::{Error, Result};
use crate::graph::{bind_mapping, build_graph, AccelGraph, ArchDescription, DataSchedule};
use crate::predict::{predict_coarse, resource_usage, ResourceReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MinEnergy,
    #[default]
    MinLatency,
    MinEdp,
}

impl Objective {
    /// Lower is better.
    pub fn score(self, energy: f64, latency_seconds: f64) -> f64 {
        match self {
            Objective::MinEnergy => energy,
            Objective::MinLatency => latency_seconds,
            Objective::MinEdp => energy * latency_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceBudget {
    /// Multipliers, decode overhead included.
    pub mul_count: u64,
    /// Total memory bits over all implementations.
    pub mem_bits: u64,
    /// Optional per-implementation memory caps.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mem_bits_by_impl: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    #[serde(default)]
    pub objective: Objective,
    pub throughput_fps_min: f64,
    pub power_budget_w: f64,
    pub resource_budget: ResourceBudget,
    /// Data-path port cap for reallocation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_port_width_bits: Option<u32>,
}

impl AppSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("throughput_fps_min", self.throughput_fps_min > 0.0 && self.throughput_fps_min.is_finite()),
            ("power_budget_w", self.power_budget_w > 0.0),
            ("resource_budget.mul_count", self.resource_budget.mul_count > 0),
            ("resource_budget.mem_bits", self.resource_budget.mem_bits > 0),
            ("max_port_width_bits", self.max_port_width_bits != Some(0)),
        ];
        for (field, ok) in positive {
            if !ok {
                return Err(Error::Config(format!("`{field}` must be > 0")));
            }
        }
        if let Some((k, _)) = self.resource_budget.mem_bits_by_impl.iter().find(|(_, v)| **v == 0) {
            return Err(Error::Config(format!("memory cap for `{k}` must be > 0")));
        }
        Ok(())
    }

    /// Deadline implied by the throughput requirement.
    pub fn max_latency_seconds(&self) -> f64 {
        1.0 / self.throughput_fps_min
    }
}

/// Budget violations of a resource report.
pub fn resource_violations(r: &ResourceReport, budget: &ResourceBudget) -> Vec<String> {
    let mut v = Vec::new();
    if r.mul_count > budget.mul_count {
        v.push(format!("mul_count {} > {}", r.mul_count, budget.mul_count));
    }
    if r.mem_bits_total() > budget.mem_bits {
        v.push(format!("mem_bits {} > {}", r.mem_bits_total(), budget.mem_bits));
    }
    for (imp, cap) in &budget.mem_bits_by_impl {
        let used = r.mem_bits_by_impl.get(imp).copied().unwrap_or(0);
        if used > *cap {
            v.push(format!("mem_bits[{imp}] {used} > {cap}"));
        }
    }
    v
}

/// Every hard-constraint violation of an evaluated point.
pub fn budget_violations(energy: f64, latency_seconds: f64, r: &ResourceReport, spec: &AppSpec) -> Vec<String> {
    let mut v = resource_violations(r, &spec.resource_budget);
    if latency_seconds > spec.max_latency_seconds() {
        v.push(format!("latency {latency_seconds} s > {} s", spec.max_latency_seconds()));
    }
    let power = energy / latency_seconds;
    if power > spec.power_budget_w {
        v.push(format!("power {power} W > {} W", spec.power_budget_w));
    }
    v
}

/// Parameter grid of one template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSpace {
    pub kind: TemplateKind,
    /// Values per parameter; omitted parameters keep their default.
    #[serde(default)]
    pub params: BTreeMap<String, Vec<u64>>,
    /// Schedule families; empty means one default schedule.
    #[serde(default)]
    pub schedules: Vec<DataSchedule>,
}

impl TemplateSpace {
    pub fn new(kind: TemplateKind) -> Self {
        TemplateSpace {
            kind,
            params: BTreeMap::new(),
            schedules: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, values: &[u64]) -> Self {
        self.params.insert(name.to_string(), values.to_vec());
        self
    }

    /// Number of grid points.
    pub fn size(&self) -> usize {
        self.params.values().map(Vec::len).product::<usize>() * self.schedules.len().max(1)
    }

    fn assignments(&self) -> Vec<TemplateParams> {
        let mut out = vec![TemplateParams::new()];
        for (name, values) in &self.params {
            out = out
                .into_iter()
                .flat_map(|base| {
                    values.iter().map(move |v| {
                        let mut p = base.clone();
                        p.insert(name.clone(), *v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignPoint {
    /// Position in the generated space.
    pub index: usize,
    pub template: TemplateKind,
    pub params: TemplateParams,
    pub schedule: DataSchedule,
}

impl DesignPoint {
    pub fn arch(&self) -> Result<ArchDescription> {
        instantiate_template(self.template, &self.params)
    }

    pub fn graph(&self, costs: &UnitCostLibrary) -> Result<AccelGraph> {
        build_graph(&self.arch()?, costs)
    }

    /// Graph with `model` bound according to the point's schedule.
    pub fn bind(&self, model: &DnnModel, costs: &UnitCostLibrary) -> Result<AccelGraph> {
        bind_mapping(&self.graph(costs)?, model, &self.schedule)
    }

    pub fn label(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let mut label = format!("{}[{}]", self.template, params.join(","));
        if !self.schedule.name.is_empty() {
            label = format!("{label}/{}", self.schedule.name);
        }
        label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    /// Raw grid size before the static pre-filter.
    pub enumerated: usize,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n_opt: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    pub model: DnnModel,
    pub points: Vec<DesignPoint>,
    pub counters: Counters,
}

/// Grid enumeration over `pool`, minus points that cannot run the model's
/// layer kinds or whose bare architecture already exceeds the resource budget.
pub fn enumerate_stage1(
    model: &DnnModel,
    spec: &AppSpec,
    pool: &[TemplateSpace],
    costs: &UnitCostLibrary,
) -> Result<DesignSpace> {
    if pool.is_empty() {
        return Err(Error::Config("template pool is empty".into()));
    }
    spec.validate()?;
    let kinds: BTreeSet<LayerKind> = model.layers.iter().map(|l| l.kind).collect();
    let mut points = Vec::new();
    let mut enumerated = 0;
    let mut reasons = BTreeSet::new();
    for ts in pool {
        let supported = ts.kind.supported_ops();
        let missing: Vec<&str> = kinds.iter().filter(|k| !supported.contains(k)).map(|k| k.name()).collect();
        let default_schedule = [DataSchedule::named("default")];
        let schedules = if ts.schedules.is_empty() { &default_schedule[..] } else { &ts.schedules[..] };
        for params in ts.assignments() {
            for schedule in schedules {
                enumerated += 1;
                schedule.validate()?;
                let params = resolve_params(ts.kind, &params)?;
                if !missing.is_empty() {
                    reasons.insert(format!("{} lacks {}", ts.kind, missing.join(", ")));
                    continue;
                }
                let point = DesignPoint {
                    index: points.len(),
                    template: ts.kind,
                    params,
                    schedule: schedule.clone(),
                };
                let floor = resource_usage(&point.graph(costs)?, costs);
                let over = resource_violations(&floor, &spec.resource_budget);
                if !over.is_empty() {
                    reasons.insert(format!("{}: {}", ts.kind, over.join("; ")));
                    continue;
                }
                points.push(point);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::NoFeasibleTemplate(reasons.into_iter().collect::<Vec<_>>().join(" | ")));
    }
    let n1 = points.len();
    Ok(DesignSpace {
        model: model.clone(),
        points,
        counters: Counters {
            enumerated,
            n1,
            ..Default::default()
        },
    })
}

/// Keeps a seeded random subset of `n` points, in their original order.
pub fn sample_space(space: &DesignSpace, n: usize, seed: u64) -> DesignSpace {
    if n >= space.points.len() {
        return space.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, space.points.len(), n).into_vec();
    picked.sort_unstable();
    DesignSpace {
        model: space.model.clone(),
        points: picked.into_iter().map(|i| space.points[i].clone()).collect(),
        counters: space.counters,
    }
}

/// Coarse evaluation of one Stage-1 point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Entry {
    pub point: DesignPoint,
    pub energy: f64,
    pub latency_cycles: u64,
    pub latency_seconds: f64,
    pub resources: ResourceReport,
    pub score: f64,
    /// Budget violations, or the binding error for unbindable points.
    pub violations: Vec<String>,
}

impl Stage1Entry {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn evaluate_point(
    point: &DesignPoint,
    model: &DnnModel,
    spec: &AppSpec,
    costs: &UnitCostLibrary,
) -> Stage1Entry {
    let evaluated = point.bind(model, costs).and_then(|g| predict_coarse(&g, costs));
    match evaluated {
        Ok(r) => Stage1Entry {
            point: point.clone(),
            energy: r.energy_total,
            latency_cycles: r.latency_cycles,
            latency_seconds: r.latency_seconds,
            score: spec.objective.score(r.energy_total, r.latency_seconds),
            violations: budget_violations(r.energy_total, r.latency_seconds, &r.resources, spec),
            resources: r.resources,
        },
        Err(e) => Stage1Entry {
            point: point.clone(),
            energy: f64::INFINITY,
            latency_cycles: u64::MAX,
            latency_seconds: f64::INFINITY,
            resources: ResourceReport::default(),
            score: f64::INFINITY,
            violations: vec![format!("binding: {e}")],
        },
    }
}

fn rank(a: &Stage1Entry, b: &Stage1Entry) -> Ordering {
    a.score.total_cmp(&b.score).then(a.point.index.cmp(&b.point.index))
}

/// Feasible entries, re-checked against `spec`, best first, at most `keep`.
pub fn prune_evaluated(entries: &[Stage1Entry], spec: &AppSpec, keep: usize) -> Vec<Stage1Entry> {
    let mut kept: Vec<Stage1Entry> = entries
        .iter()
        .filter(|e| e.feasible() && budget_violations(e.energy, e.latency_seconds, &e.resources, spec).is_empty())
        .cloned()
        .collect();
    kept.sort_by(rank);
    kept.truncate(keep);
    kept
}

/// Outcome of Stage 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Result {
    pub space: DesignSpace,
    /// Every evaluated point, in generation order.
    pub evaluated: Vec<Stage1Entry>,
    /// Survivors, best first.
    pub survivors: Vec<Stage1Entry>,
}

/// Coarse-evaluates every point in parallel and keeps the best feasible ones.
pub fn prune_stage1(space: &DesignSpace, spec: &AppSpec, costs: &UnitCostLibrary, keep: usize) -> Stage1Result {
    let evaluated: Vec<Stage1Entry> = space
        .points
        .par_iter()
        .map(|p| evaluate_point(p, &space.model, spec, costs))
        .collect();
    let survivors = prune_evaluated(&evaluated, spec, keep);
    let mut out = space.clone();
    out.points = survivors.iter().map(|e| e.point.clone()).collect();
    out.counters.n2 = survivors.len();
    Stage1Result {
        space: out,
        evaluated,
        survivors,
    }
}
