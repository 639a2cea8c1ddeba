//! Attributed directed graph of memory, computation and data-path IPs.
//!
//! Nodes carry the per-IP state machine that drives both predictors. Each state
//! lists the tokens it needs and the tokens it produces; a token is an abstract
//! unit of data (one state's worth), not a byte address.

mod arch;
mod binding;
mod paths;
mod validate;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dnn::LayerKind;

pub use arch::{
    build_bound_graph, build_graph, load_arch, parse_arch, ArchDescription, BindingDescription, EdgeDescription,
    NodeDescription, StateDescription, ARCH_DOC_VERSION,
};
pub use binding::{bind_mapping, DataSchedule, EngineAssignment};
pub use paths::{
    critical_paths, dependency_dag, longest_path, DependencyDag, RoundDag, MAX_ENUMERATED_PATHS,
};
pub use validate::{validate_graph, Diagnostic, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpKind {
    Memory,
    Computation,
    DataPath,
}

impl fmt::Display for IpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IpKind::Memory => "memory",
            IpKind::Computation => "computation",
            IpKind::DataPath => "data_path",
        })
    }
}

/// Data categories a memory holds or a data path carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Weights,
    Activations,
    PartialSums,
}

impl DataType {
    pub const ALL: [DataType; 3] = [DataType::Weights, DataType::Activations, DataType::PartialSums];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryAttrs {
    pub volume_bits: u64,
    pub data_types: BTreeSet<DataType>,
    /// Access width used for the per-state transfer latency.
    pub port_width_bits: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputeAttrs {
    /// Simultaneous MACs per step (PE parallelism).
    pub unroll: u32,
    pub ops: BTreeSet<LayerKind>,
    /// Position inside a PE array, if this node is one PE of it.
    pub grid: Option<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPathAttrs {
    pub port_width_bits: u32,
    /// Carried data categories. Used for routing only, never in a cost formula.
    pub data_types: BTreeSet<DataType>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeAttrs {
    Memory(MemoryAttrs),
    Computation(ComputeAttrs),
    DataPath(DataPathAttrs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IpState {
    pub needs: Vec<TokenId>,
    pub produces: Vec<TokenId>,
    /// MACs for computation IPs, bits moved for data paths and memories.
    pub work: u64,
    /// Execution round (index into `AccelGraph::round_labels`, one per layer).
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpNode {
    pub id: String,
    pub implementation: String,
    pub freq_mhz: f64,
    pub precision: u32,
    pub attrs: NodeAttrs,
    pub states: Vec<IpState>,
}

impl IpNode {
    pub fn kind(&self) -> IpKind {
        match self.attrs {
            NodeAttrs::Memory(_) => IpKind::Memory,
            NodeAttrs::Computation(_) => IpKind::Computation,
            NodeAttrs::DataPath(_) => IpKind::DataPath,
        }
    }

    pub fn freq_hz(&self) -> f64 {
        self.freq_mhz * 1e6
    }

    pub fn unroll(&self) -> Option<u32> {
        match &self.attrs {
            NodeAttrs::Computation(c) => Some(c.unroll),
            _ => None,
        }
    }

    /// Port width for data paths and memories.
    pub fn port_width(&self) -> Option<u32> {
        match &self.attrs {
            NodeAttrs::Memory(m) => Some(m.port_width_bits),
            NodeAttrs::DataPath(d) => Some(d.port_width_bits),
            NodeAttrs::Computation(_) => None,
        }
    }

    pub fn data_types(&self) -> Option<&BTreeSet<DataType>> {
        match &self.attrs {
            NodeAttrs::Memory(m) => Some(&m.data_types),
            NodeAttrs::DataPath(d) => Some(&d.data_types),
            NodeAttrs::Computation(_) => None,
        }
    }

    pub fn carries(&self, dt: DataType) -> bool {
        self.data_types().is_some_and(|s| s.contains(&dt))
    }

    pub fn supports(&self, kind: LayerKind) -> bool {
        matches!(&self.attrs, NodeAttrs::Computation(c) if c.ops.contains(&kind))
    }

    pub fn grid(&self) -> Option<(u32, u32)> {
        match &self.attrs {
            NodeAttrs::Computation(c) => c.grid,
            _ => None,
        }
    }

    pub fn total_work(&self) -> u64 {
        self.states.iter().map(|s| s.work).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub start: usize,
    pub end: usize,
}

/// Interned token names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenTable {
    names: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl TokenTable {
    pub fn intern(&mut self, name: &str) -> TokenId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = TokenId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<TokenId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: TokenId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelGraph {
    pub name: String,
    pub technology: String,
    /// Global clock used for cycle accounting.
    pub clock_mhz: f64,
    pub nodes: Vec<IpNode>,
    pub edges: Vec<Edge>,
    pub tokens: TokenTable,
    pub primary_inputs: BTreeSet<TokenId>,
    pub final_outputs: BTreeSet<TokenId>,
    pub round_labels: Vec<String>,
    /// Counter used to mint unique names when states are split.
    pub split_generation: u32,
}

/// Location of a state: (node index, state index).
pub type StateRef = (usize, usize);

#[derive(Debug, Clone)]
pub struct Adjacency {
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
}

impl AccelGraph {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn node(&self, id: &str) -> Option<&IpNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_mhz * 1e6
    }

    pub fn adjacency(&self) -> Adjacency {
        let n = self.nodes.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for e in &self.edges {
            if e.start < n && e.end < n {
                succs[e.start].push(e.end);
                preds[e.end].push(e.start);
            }
        }
        for v in preds.iter_mut().chain(succs.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        Adjacency { preds, succs }
    }

    pub fn has_edge(&self, start: usize, end: usize) -> bool {
        self.edges.iter().any(|e| e.start == start && e.end == end)
    }

    pub fn is_bound(&self) -> bool {
        self.nodes.iter().any(|n| !n.states.is_empty())
    }

    pub fn state_count(&self) -> usize {
        self.nodes.iter().map(|n| n.states.len()).sum()
    }

    /// Producer of every token, indexed by token id. Duplicates keep the first producer.
    pub fn producers(&self) -> Vec<Option<StateRef>> {
        let mut out = vec![None; self.tokens.len()];
        for (ni, node) in self.nodes.iter().enumerate() {
            for (si, st) in node.states.iter().enumerate() {
                for t in &st.produces {
                    let slot = &mut out[t.0 as usize];
                    if slot.is_none() {
                        *slot = Some((ni, si));
                    }
                }
            }
        }
        out
    }

    /// Sum of computation work over all states.
    pub fn total_mac_work(&self) -> u64 {
        self.nodes
            .iter()
            .filter(|n| n.kind() == IpKind::Computation)
            .map(IpNode::total_work)
            .sum()
    }

    pub fn clear_binding(&mut self) {
        for n in &mut self.nodes {
            n.states.clear();
        }
        self.tokens = TokenTable::default();
        self.primary_inputs.clear();
        self.final_outputs.clear();
        self.round_labels.clear();
        self.split_generation = 0;
    }

    pub fn token_names<'a>(&'a self, ids: impl IntoIterator<Item = &'a TokenId>) -> Vec<String> {
        ids.into_iter().map(|t| self.tokens.name(*t).to_string()).collect()
    }

    /// Graphviz rendering of the physical graph (node/edge list with labels).
    pub fn to_dot(&self) -> String {
        let mut out = format!("digraph \"{}\" {{\n  rankdir=LR;\n", self.name);
        for n in &self.nodes {
            let (shape, extra) = match &n.attrs {
                NodeAttrs::Memory(m) => ("cylinder", format!("vol={}b", m.volume_bits)),
                NodeAttrs::Computation(c) => ("box", format!("U={}", c.unroll)),
                NodeAttrs::DataPath(d) => ("cds", format!("bw={}b", d.port_width_bits)),
            };
            out.push_str(&format!(
                "  \"{}\" [shape={shape}, label=\"{}\\n{} {}MHz {}\\nstates={}\"];\n",
                n.id,
                n.id,
                n.implementation,
                n.freq_mhz,
                extra,
                n.states.len()
            ));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\";\n",
                self.nodes[e.start].id, self.nodes[e.end].id
            ));
        }
        out.push_str("}\n");
        out
    }
}
