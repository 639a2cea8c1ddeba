//! Binding a DNN workload onto a graph as per-IP state machines.
//!
//! Two strategies are used, picked from the graph shape:
//!
//! * **Engine binding** (no computation node has `grid` coordinates). Each layer
//!   runs on one engine, chosen among the nodes whose `ops` include the layer
//!   kind. The layer is cut into output tiles (channels × rows) and every node on
//!   the input, weight and output routes of that engine gets one state per tile.
//! * **Array binding** (grid nodes present). Each layer is lowered to a GEMM
//!   `C[M×N] = W[M×K] · X[K×N]` and mapped output-stationary onto the PE grid:
//!   weights stream along rows, activations down columns, one state per
//!   reduction chunk.
//!
//! Routes are shortest paths through non-computation nodes whose data types
//! include the data being moved. Layers execute in topological order, each in
//! its own round; the first state of a layer's input route waits for the final
//! tokens of all predecessor layers.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{AccelGraph, Adjacency, DataType, IpKind, IpState, NodeAttrs, TokenId};
use crate::dnn::{layer_workload, DnnModel, LayerKind, LayerSpec, Precision};
use crate::error::{Error, Result};

/// How layers are assigned to engines when several support a kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineAssignment {
    #[default]
    FirstFit,
    RoundRobin,
}

/// Loop tiling and assignment choices for a binding.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSchedule {
    #[serde(default)]
    pub name: String,
    /// Output channels per tile (engine binding). Defaults to all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile_channels: Option<u32>,
    /// Output rows per tile (engine binding). Defaults to all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile_rows: Option<u32>,
    /// Reduction elements per PE state (array binding). Defaults to the whole reduction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction_chunk: Option<u32>,
    #[serde(default)]
    pub assignment: EngineAssignment,
}

impl DataSchedule {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("tile_channels", self.tile_channels),
            ("tile_rows", self.tile_rows),
            ("reduction_chunk", self.reduction_chunk),
        ] {
            if v == Some(0) {
                return Err(Error::Binding(format!("schedule `{field}` must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Binds `model` onto a copy of `graph`, replacing any existing binding.
pub fn bind_mapping(graph: &AccelGraph, model: &DnnModel, schedule: &DataSchedule) -> Result<AccelGraph> {
    schedule.validate()?;
    let mut g = graph.clone();
    g.clear_binding();
    if model.layers.is_empty() {
        return Ok(g);
    }
    let order = model.topological_order()?;
    let array = g.nodes.iter().any(|n| n.grid().is_some());
    let adj = g.adjacency();
    let mut b = Binder {
        g,
        adj,
        precision: model.precision,
        schedule,
        tails: HashMap::new(),
        outputs: HashMap::new(),
        next_engine: 0,
    };
    for (round, &li) in order.iter().enumerate() {
        let layer = &model.layers[li];
        b.g.round_labels.push(layer.id.clone());
        if array {
            b.bind_array_layer(layer, round as u32)?;
        } else {
            b.bind_engine_layer(layer, round as u32)?;
        }
    }
    for exit in model.exit_layers() {
        let outs = b.outputs.remove(&exit.id).unwrap_or_default();
        b.g.final_outputs.extend(outs);
    }
    b.check_capacity()?;
    Ok(b.g)
}

struct Binder<'a> {
    g: AccelGraph,
    adj: Adjacency,
    precision: Precision,
    schedule: &'a DataSchedule,
    /// Tokens whose production marks a layer as complete.
    tails: HashMap<String, Vec<TokenId>>,
    /// All output tokens of a layer, used as final outputs of exit layers.
    outputs: HashMap<String, Vec<TokenId>>,
    next_engine: usize,
}

/// Portion `[lo, hi)` of `total` spread over `units`; parts always sum to `total`.
fn share(total: u64, lo: u64, hi: u64, units: u64) -> u64 {
    let t = total as u128;
    let u = units.max(1) as u128;
    (t * hi as u128 / u - t * lo as u128 / u) as u64
}

fn chunks(extent: u64, size: u64) -> Vec<(u64, u64)> {
    let size = size.clamp(1, extent.max(1));
    (0..extent.div_ceil(size))
        .map(|i| (i * size, ((i + 1) * size).min(extent)))
        .collect()
}

impl Binder<'_> {
    fn tok(&mut self, name: String) -> TokenId {
        self.g.tokens.intern(&name)
    }

    fn primary(&mut self, name: String) -> TokenId {
        let t = self.tok(name);
        self.g.primary_inputs.insert(t);
        t
    }

    fn push(&mut self, node: usize, needs: Vec<TokenId>, produces: Vec<TokenId>, work: u64, round: u32) {
        self.g.nodes[node].states.push(IpState {
            needs,
            produces,
            work,
            round,
        });
    }

    fn carrier(&self, node: usize, dt: DataType) -> bool {
        let n = &self.g.nodes[node];
        n.kind() != IpKind::Computation && n.carries(dt)
    }

    /// Tokens the first input state of `layer` must wait for.
    fn entry_needs(&mut self, layer: &LayerSpec) -> Vec<TokenId> {
        if layer.predecessors.is_empty() {
            vec![self.primary(format!("in:{}", layer.id))]
        } else {
            layer
                .predecessors
                .iter()
                .flat_map(|p| self.tails.get(p).cloned().unwrap_or_default())
                .collect()
        }
    }

    /// Shortest chain of carriers from an in-degree-0 node to `target` (exclusive).
    fn route_in(&self, target: usize, dt: DataType) -> Option<Vec<usize>> {
        self.route(target, dt, true)
    }

    /// Shortest chain of carriers from `source` (exclusive) to an out-degree-0 node.
    fn route_out(&self, source: usize, dt: DataType) -> Option<Vec<usize>> {
        self.route(source, dt, false)
    }

    fn route(&self, from: usize, dt: DataType, backwards: bool) -> Option<Vec<usize>> {
        let (step, ends) = if backwards {
            (&self.adj.preds, &self.adj.preds)
        } else {
            (&self.adj.succs, &self.adj.succs)
        };
        let mut prev: Vec<Option<usize>> = vec![None; self.g.nodes.len()];
        let mut seen = vec![false; self.g.nodes.len()];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for &v in &step[u] {
                if seen[v] || !self.carrier(v, dt) {
                    continue;
                }
                seen[v] = true;
                prev[v] = Some(u);
                if ends[v].is_empty() {
                    let mut path = vec![v];
                    let mut cur = v;
                    while let Some(p) = prev[cur] {
                        if p == from {
                            break;
                        }
                        path.push(p);
                        cur = p;
                    }
                    if !backwards {
                        path.reverse();
                    }
                    return Some(path);
                }
                queue.push_back(v);
            }
        }
        None
    }

    /// Appends one state per route node, chained by tokens. Returns the tail token.
    fn chain(
        &mut self,
        route: &[usize],
        mut upstream: Vec<TokenId>,
        label: &str,
        work: u64,
        round: u32,
    ) -> Vec<TokenId> {
        for &n in route {
            let t = self.tok(format!("{label}@{}", self.g.nodes[n].id));
            self.push(n, upstream, vec![t], work, round);
            upstream = vec![t];
        }
        upstream
    }

    fn bind_engine_layer(&mut self, layer: &LayerSpec, round: u32) -> Result<()> {
        let candidates: Vec<usize> = self
            .g
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.supports(layer.kind))
            .map(|(i, _)| i)
            .collect();
        if candidates.is_empty() {
            return Err(unsupported(layer));
        }
        let engine = match self.schedule.assignment {
            EngineAssignment::FirstFit => candidates[0],
            EngineAssignment::RoundRobin => {
                let e = candidates[self.next_engine % candidates.len()];
                self.next_engine += 1;
                e
            }
        };
        let engine_id = self.g.nodes[engine].id.clone();
        let no_route = |what: &str| {
            Error::Binding(format!("no {what} route for engine `{engine_id}` (layer `{}`)", layer.id))
        };
        let in_route = self.route_in(engine, DataType::Activations).ok_or_else(|| no_route("input"))?;
        let w_route = if layer.kind.has_weights() {
            Some(self.route_in(engine, DataType::Weights).ok_or_else(|| no_route("weight"))?)
        } else {
            None
        };
        let out_route = self
            .route_out(engine, DataType::Activations)
            .ok_or_else(|| no_route("output"))?;

        let wl = layer_workload(layer, &self.precision);
        let m = layer.output_shape.channels as u64;
        let h = layer.output_shape.height as u64;
        let ch = chunks(m, self.schedule.tile_channels.map_or(m, u64::from));
        let rows = chunks(h, self.schedule.tile_rows.map_or(h, u64::from));
        let channelwise = !matches!(layer.kind, LayerKind::Conv | LayerKind::FullyConnected);

        let mut entry = Some(self.entry_needs(layer));
        let mut w_entry = w_route
            .as_ref()
            .map(|_| vec![self.primary(format!("w:{}", layer.id))]);
        let mut outs = Vec::new();
        let mut t = 0usize;
        for &(c0, c1) in &ch {
            for &(r0, r1) in &rows {
                let tile = |total: u64| share(share(total, c0, c1, m), r0, r1, h);
                let macs = tile(wl.mac_count);
                let in_bits = if channelwise {
                    tile(wl.input_volume)
                } else {
                    share(wl.input_volume, r0, r1, h)
                };
                let label = format!("{}/t{t}", layer.id);
                let mut needs = self.chain(
                    &in_route,
                    entry.take().unwrap_or_default(),
                    &format!("{label}/in"),
                    in_bits,
                    round,
                );
                if let Some(route) = &w_route {
                    let w_bits = share(wl.weight_volume, c0, c1, m);
                    let w = self.chain(route, w_entry.take().unwrap_or_default(), &format!("{label}/w"), w_bits, round);
                    needs.extend(w);
                }
                let c = self.tok(format!("{label}/out@{}", self.g.nodes[engine].id));
                self.push(engine, needs, vec![c], macs, round);
                let tail = self.chain(&out_route, vec![c], &format!("{label}/out"), tile(wl.output_volume), round);
                outs.extend(tail);
                t += 1;
            }
        }
        self.tails
            .insert(layer.id.clone(), outs.last().copied().into_iter().collect());
        self.outputs.insert(layer.id.clone(), outs);
        Ok(())
    }

    /// Returns `None` for a direct edge, `Some(hop)` for a single data-path hop.
    fn link(&self, from: usize, to: usize) -> Result<Option<usize>> {
        if self.adj.succs[from].contains(&to) {
            return Ok(None);
        }
        self.adj.succs[from]
            .iter()
            .copied()
            .find(|&h| self.g.nodes[h].kind() == IpKind::DataPath && self.adj.succs[h].contains(&to))
            .map(Some)
            .ok_or_else(|| {
                Error::Binding(format!(
                    "no link from `{}` to `{}`",
                    self.g.nodes[from].id, self.g.nodes[to].id
                ))
            })
    }

    fn feeder(&self, pe: usize, dt: DataType) -> Option<usize> {
        self.adj.preds[pe].iter().copied().find(|&p| self.carrier(p, dt))
    }

    fn bind_array_layer(&mut self, layer: &LayerSpec, round: u32) -> Result<()> {
        let mut grid: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for (i, n) in self.g.nodes.iter().enumerate() {
            if let Some(pos) = n.grid() {
                if !n.supports(layer.kind) {
                    return Err(unsupported(layer));
                }
                if grid.insert(pos, i).is_some() {
                    return Err(Error::Binding(format!("duplicate grid position {pos:?}")));
                }
            }
        }
        let rows = grid.keys().map(|p| p.0).max().unwrap_or(0) + 1;
        let cols = grid.keys().map(|p| p.1).max().unwrap_or(0) + 1;
        if grid.len() != (rows * cols) as usize {
            return Err(Error::Binding(format!("PE grid {rows}x{cols} has holes")));
        }
        let pe = |i: u64, j: u64| grid[&(i as u32, j as u32)];

        let m = layer.output_shape.channels as u64;
        let n = layer.output_shape.height as u64 * layer.output_shape.width as u64;
        let macs = layer.mac_count();
        if !macs.is_multiple_of(m * n) {
            return Err(Error::Binding(format!("layer `{}` does not lower to a GEMM", layer.id)));
        }
        let k_total = macs / (m * n);
        let kc = self
            .schedule
            .reduction_chunk
            .map_or(k_total, u64::from)
            .clamp(1, k_total.max(1));
        let q = if k_total == 0 { 1 } else { k_total.div_ceil(kc) };
        let weights = layer.kind.has_weights();
        let (wb, ab) = (self.precision.weights as u64, self.precision.activations as u64);
        let entry_layer = layer.predecessors.is_empty();

        let row_feed: Vec<Option<usize>> = (0..rows as u64).map(|i| self.feeder(pe(i, 0), DataType::Weights)).collect();
        let col_feed: Vec<Option<usize>> = (0..cols as u64).map(|j| self.feeder(pe(0, j), DataType::Activations)).collect();
        if !entry_layer && (col_feed.iter().any(Option::is_none) || (weights && row_feed.iter().any(Option::is_none))) {
            return Err(Error::Binding(format!(
                "array without feeders cannot bind non-entry layer `{}`",
                layer.id
            )));
        }
        let w_groups = self.feeder_groups(&row_feed, DataType::Weights);
        let x_groups = self.feeder_groups(&col_feed, DataType::Activations);
        let all_pes: Vec<usize> = grid.values().copied().collect();
        let drain = self.adj.succs[all_pes[0]].iter().copied().find(|&d| {
            self.g.nodes[d].kind() != IpKind::Computation && all_pes.iter().all(|&p| self.adj.succs[p].contains(&d))
        });
        let out_route = match drain {
            Some(d) => self.route_out(d, DataType::Activations).unwrap_or_default(),
            None => Vec::new(),
        };

        let mut x_entry = Some(self.entry_needs(layer));
        let mut w_entry = weights.then(|| vec![self.primary(format!("w:{}", layer.id))]);
        let mut outs = Vec::new();
        let mut last_c: BTreeMap<usize, TokenId> = BTreeMap::new();
        let mut t = 0u64;
        for mt in 0..m.div_ceil(rows as u64) {
            for nt in 0..n.div_ceil(cols as u64) {
                let r_eff = (m - mt * rows as u64).min(rows as u64);
                let c_eff = (n - nt * cols as u64).min(cols as u64);
                let tile = format!("{}/t{t}", layer.id);
                let mut c_tokens = Vec::new();
                for k in 0..q {
                    let kw = if k_total == 0 { 0 } else { kc.min(k_total - k * kc) };
                    let dk = kw.max(1);
                    let base = format!("{tile}/k{k}");
                    if weights {
                        self.feed(&w_groups, r_eff, &mut w_entry, &base, 'w', dk * wb, round)?;
                    }
                    self.feed(&x_groups, c_eff, &mut x_entry, &base, 'x', dk * ab, round)?;
                    for i in 0..r_eff {
                        for j in 0..c_eff {
                            let here = pe(i, j);
                            let mut needs = Vec::with_capacity(2);
                            if weights {
                                needs.push(self.tok(format!("{base}/w{i},{j}")));
                            }
                            needs.push(self.tok(format!("{base}/x{i},{j}")));
                            let mut produces = Vec::new();
                            let mut hops = Vec::new();
                            if weights && j + 1 < c_eff {
                                produces.push(self.forward(here, pe(i, j + 1), format!("{base}/w{i},{}", j + 1), dk * wb, &mut hops)?);
                            }
                            if i + 1 < r_eff {
                                produces.push(self.forward(here, pe(i + 1, j), format!("{base}/x{},{j}", i + 1), dk * ab, &mut hops)?);
                            }
                            if k + 1 == q {
                                let c = self.tok(format!("{tile}/c{i},{j}"));
                                produces.push(c);
                                c_tokens.push(c);
                                last_c.insert(here, c);
                            }
                            if produces.is_empty() {
                                produces.push(self.tok(format!("{base}/p{i},{j}")));
                            }
                            self.push(here, needs, produces, kw, round);
                            for (hop, need, out, bits) in hops {
                                self.push(hop, vec![need], vec![out], bits, round);
                            }
                        }
                    }
                }
                match drain {
                    Some(d) => {
                        let dt = self.tok(format!("{tile}/drain@{}", self.g.nodes[d].id));
                        let bits = r_eff * c_eff * ab;
                        self.push(d, c_tokens, vec![dt], bits, round);
                        outs.extend(self.chain(&out_route, vec![dt], &format!("{tile}/out"), bits, round));
                    }
                    None => outs.extend(c_tokens),
                }
                t += 1;
            }
        }
        let tails = match drain {
            Some(_) => outs.last().copied().into_iter().collect(),
            None => last_c.into_values().collect(),
        };
        self.tails.insert(layer.id.clone(), tails);
        self.outputs.insert(layer.id.clone(), outs);
        Ok(())
    }

    /// Groups feeder positions by their upstream route.
    fn feeder_groups(&self, feeders: &[Option<usize>], dt: DataType) -> Vec<FeedGroup> {
        let mut groups: Vec<FeedGroup> = Vec::new();
        for (pos, f) in feeders.iter().enumerate() {
            let route = f.map(|f| self.route_in(f, dt).unwrap_or_default());
            match groups.iter_mut().find(|g| g.route == route) {
                Some(g) => g.members.push((pos as u64, *f)),
                None => groups.push(FeedGroup {
                    route,
                    members: vec![(pos as u64, *f)],
                }),
            }
        }
        groups
    }

    /// Emits the states that deliver boundary tokens to the first row or column.
    #[allow(clippy::too_many_arguments)]
    fn feed(
        &mut self,
        groups: &[FeedGroup],
        active: u64,
        entry: &mut Option<Vec<TokenId>>,
        base: &str,
        tag: char,
        bits: u64,
        round: u32,
    ) -> Result<()> {
        let first_entry = entry.take().unwrap_or_default();
        for group in groups {
            let members: Vec<(u64, Option<usize>)> =
                group.members.iter().copied().filter(|(p, _)| *p < active).collect();
            if members.is_empty() {
                continue;
            }
            let Some(route) = &group.route else {
                for (p, _) in members {
                    let name = match tag {
                        'w' => format!("{base}/w{p},0"),
                        _ => format!("{base}/x0,{p}"),
                    };
                    self.primary(name);
                }
                continue;
            };
            let upstream = self.chain(
                route,
                first_entry.clone(),
                &format!("{base}/{tag}"),
                bits * members.len() as u64,
                round,
            );
            for (p, f) in members {
                let f = f.expect("grouped feeders have a node");
                let name = match tag {
                    'w' => format!("{base}/w{p},0"),
                    _ => format!("{base}/x0,{p}"),
                };
                let out = self.tok(name);
                self.push(f, upstream.clone(), vec![out], bits, round);
            }
        }
        Ok(())
    }

    /// Token a PE produces for its neighbour, routed through a hop if needed.
    fn forward(
        &mut self,
        from: usize,
        to: usize,
        name: String,
        bits: u64,
        hops: &mut Vec<(usize, TokenId, TokenId, u64)>,
    ) -> Result<TokenId> {
        match self.link(from, to)? {
            None => Ok(self.tok(name)),
            Some(h) => {
                let mid = self.tok(format!("{name}~{}", self.g.nodes[h].id));
                let out = self.tok(name);
                hops.push((h, mid, out, bits));
                Ok(mid)
            }
        }
    }

    fn check_capacity(&self) -> Result<()> {
        for n in &self.g.nodes {
            if let NodeAttrs::Memory(m) = &n.attrs {
                if let Some(s) = n.states.iter().find(|s| s.work > m.volume_bits) {
                    return Err(Error::Binding(format!(
                        "tile of layer `{}` needs {} bits in memory `{}` (capacity {})",
                        self.g.round_labels[s.round as usize], s.work, n.id, m.volume_bits
                    )));
                }
            }
        }
        Ok(())
    }
}

struct FeedGroup {
    /// `None` when the boundary tokens come straight from primary inputs.
    route: Option<Vec<usize>>,
    members: Vec<(u64, Option<usize>)>,
}

fn unsupported(layer: &LayerSpec) -> Error {
    Error::Binding(format!(
        "unsupported layer kind `{}` (layer `{}`): no computation node supports it",
        layer.kind, layer.id
    ))
}
