//! Architecture-description documents and their conversion to [`AccelGraph`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AccelGraph, ComputeAttrs, DataPathAttrs, DataSchedule, DataType, Edge, IpKind, IpNode, IpState,
    MemoryAttrs, NodeAttrs, TokenTable,
};
use crate::cost::UnitCostLibrary;
use crate::dnn::LayerKind;
use crate::error::{Error, Result};

pub const ARCH_DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDescription {
    pub version: u32,
    pub name: String,
    pub technology: String,
    /// Global clock; defaults to the fastest node clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_mhz: Option<f64>,
    pub nodes: Vec<NodeDescription>,
    pub edges: Vec<EdgeDescription>,
    /// Schedule used when a model is bound onto this architecture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<DataSchedule>,
    /// Explicit state machines, for hand-authored fixtures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<BindingDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDescription {
    pub id: String,
    pub kind: IpKind,
    #[serde(rename = "impl")]
    pub implementation: String,
    pub freq_mhz: f64,
    pub precision: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_bits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_types: Option<Vec<DataType>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port_width_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unroll: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ops: Option<Vec<LayerKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDescription {
    pub start: String,
    pub end: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BindingDescription {
    #[serde(default)]
    pub primary_inputs: Vec<String>,
    #[serde(default)]
    pub final_outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<String>,
    /// Node id to its ordered states. Nodes not listed stay stateless.
    pub states: BTreeMap<String, Vec<StateDescription>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDescription {
    #[serde(default)]
    pub needs: Vec<String>,
    #[serde(default)]
    pub produces: Vec<String>,
    #[serde(default)]
    pub work: u64,
    #[serde(default)]
    pub round: u32,
}

impl NodeDescription {
    fn into_node(self) -> Result<IpNode> {
        let bad = |msg: &str| Error::Architecture(format!("node `{}`: {msg}", self.id));
        let allowed: &[&str] = match self.kind {
            IpKind::Memory => &["volume_bits", "data_types", "port_width_bits"],
            IpKind::Computation => &["unroll", "ops", "grid"],
            IpKind::DataPath => &["port_width_bits", "data_types"],
        };
        let present = [
            ("volume_bits", self.volume_bits.is_some()),
            ("data_types", self.data_types.is_some()),
            ("port_width_bits", self.port_width_bits.is_some()),
            ("unroll", self.unroll.is_some()),
            ("ops", self.ops.is_some()),
            ("grid", self.grid.is_some()),
        ];
        for (field, is_set) in present {
            if is_set && !allowed.contains(&field) {
                return Err(bad(&format!("attribute `{field}` not allowed on {} nodes", self.kind)));
            }
        }
        let types = |v: &Option<Vec<DataType>>| -> BTreeSet<DataType> {
            v.as_ref()
                .map(|v| v.iter().copied().collect())
                .unwrap_or_else(|| DataType::ALL.into_iter().collect())
        };
        let attrs = match self.kind {
            IpKind::Memory => NodeAttrs::Memory(MemoryAttrs {
                volume_bits: self.volume_bits.ok_or_else(|| bad("missing `volume_bits`"))?,
                data_types: types(&self.data_types),
                port_width_bits: self.port_width_bits.unwrap_or(self.precision),
            }),
            IpKind::Computation => NodeAttrs::Computation(ComputeAttrs {
                unroll: self.unroll.ok_or_else(|| bad("missing `unroll`"))?,
                ops: self
                    .ops
                    .as_ref()
                    .map(|v| v.iter().copied().collect())
                    .unwrap_or_else(|| LayerKind::ALL.into_iter().collect()),
                grid: self.grid.map(|g| (g[0], g[1])),
            }),
            IpKind::DataPath => NodeAttrs::DataPath(DataPathAttrs {
                port_width_bits: self
                    .port_width_bits
                    .ok_or_else(|| bad("missing `port_width_bits`"))?,
                data_types: types(&self.data_types),
            }),
        };
        Ok(IpNode {
            id: self.id,
            implementation: self.implementation,
            freq_mhz: self.freq_mhz,
            precision: self.precision,
            attrs,
            states: Vec::new(),
        })
    }

    fn from_node(n: &IpNode) -> Self {
        let mut d = NodeDescription {
            id: n.id.clone(),
            kind: n.kind(),
            implementation: n.implementation.clone(),
            freq_mhz: n.freq_mhz,
            precision: n.precision,
            volume_bits: None,
            data_types: None,
            port_width_bits: None,
            unroll: None,
            ops: None,
            grid: None,
        };
        match &n.attrs {
            NodeAttrs::Memory(m) => {
                d.volume_bits = Some(m.volume_bits);
                d.data_types = Some(m.data_types.iter().copied().collect());
                d.port_width_bits = Some(m.port_width_bits);
            }
            NodeAttrs::Computation(c) => {
                d.unroll = Some(c.unroll);
                d.ops = Some(c.ops.iter().copied().collect());
                d.grid = c.grid.map(|(r, c)| [r, c]);
            }
            NodeAttrs::DataPath(p) => {
                d.port_width_bits = Some(p.port_width_bits);
                d.data_types = Some(p.data_types.iter().copied().collect());
            }
        }
        d
    }
}

/// Builds the unbound graph. Every implementation key must resolve in `costs`
/// with a matching kind. Any `binding` section is ignored here; see
/// [`AccelGraph::apply_binding`].
pub fn build_graph(arch: &ArchDescription, costs: &UnitCostLibrary) -> Result<AccelGraph> {
    if arch.version != ARCH_DOC_VERSION {
        return Err(Error::Version {
            found: arch.version,
            expected: ARCH_DOC_VERSION,
        });
    }
    let mut seen = HashSet::new();
    let mut nodes = Vec::with_capacity(arch.nodes.len());
    for nd in &arch.nodes {
        if !seen.insert(nd.id.as_str()) {
            return Err(Error::Architecture(format!("duplicate node id `{}`", nd.id)));
        }
        if !(nd.freq_mhz.is_finite() && nd.freq_mhz > 0.0) {
            return Err(Error::Architecture(format!("node `{}`: freq_mhz must be > 0", nd.id)));
        }
        let entry = costs.lookup(&nd.implementation, &arch.technology)?;
        if entry.kind != nd.kind {
            return Err(Error::Architecture(format!(
                "node `{}` is {} but implementation `{}` is {}",
                nd.id, nd.kind, nd.implementation, entry.kind
            )));
        }
        nodes.push(nd.clone().into_node()?);
    }
    let index: BTreeMap<&str, usize> = arch
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut edges = Vec::with_capacity(arch.edges.len());
    let mut edge_set = HashSet::new();
    for e in &arch.edges {
        let lookup = |id: &str| index.get(id).copied().ok_or_else(|| Error::DanglingEndpoint(id.to_string()));
        let edge = Edge {
            start: lookup(&e.start)?,
            end: lookup(&e.end)?,
        };
        if edge.start == edge.end {
            return Err(Error::Architecture(format!("self loop on `{}`", e.start)));
        }
        if !edge_set.insert(edge) {
            return Err(Error::Architecture(format!("duplicate edge `{}` -> `{}`", e.start, e.end)));
        }
        edges.push(edge);
    }
    let clock_mhz = match arch.clock_mhz {
        Some(c) if c.is_finite() && c > 0.0 => c,
        Some(_) => return Err(Error::Architecture("clock_mhz must be > 0".into())),
        None => nodes.iter().map(|n| n.freq_mhz).fold(0.0, f64::max).max(1.0),
    };
    Ok(AccelGraph {
        name: arch.name.clone(),
        technology: arch.technology.clone(),
        clock_mhz,
        nodes,
        edges,
        tokens: TokenTable::default(),
        primary_inputs: BTreeSet::new(),
        final_outputs: BTreeSet::new(),
        round_labels: Vec::new(),
        split_generation: 0,
    })
}

pub fn parse_arch(document: &str) -> Result<ArchDescription> {
    Ok(serde_json::from_str(document)?)
}

pub fn load_arch(path: impl AsRef<Path>) -> Result<ArchDescription> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_arch(&text)
}

impl ArchDescription {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("arch document serializes")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn count_kind(&self, kind: IpKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }
}

impl AccelGraph {
    /// Replaces all state machines with the given explicit binding.
    pub fn apply_binding(&mut self, binding: &BindingDescription) -> Result<()> {
        self.clear_binding();
        for id in binding.states.keys() {
            if self.node_index(id).is_none() {
                return Err(Error::Binding(format!("states given for unknown node `{id}`")));
            }
        }
        let mut tokens = TokenTable::default();
        for t in &binding.primary_inputs {
            self.primary_inputs.insert(tokens.intern(t));
        }
        for node in &mut self.nodes {
            let Some(states) = binding.states.get(&node.id) else {
                continue;
            };
            node.states = states
                .iter()
                .map(|s| IpState {
                    needs: s.needs.iter().map(|t| tokens.intern(t)).collect(),
                    produces: s.produces.iter().map(|t| tokens.intern(t)).collect(),
                    work: s.work,
                    round: s.round,
                })
                .collect();
        }
        for t in &binding.final_outputs {
            self.final_outputs.insert(tokens.intern(t));
        }
        self.tokens = tokens;
        let max_round = self
            .nodes
            .iter()
            .flat_map(|n| n.states.iter().map(|s| s.round))
            .max();
        self.round_labels = if binding.rounds.is_empty() {
            (0..max_round.map_or(0, |r| r + 1)).map(|r| format!("round{r}")).collect()
        } else {
            binding.rounds.clone()
        };
        if let Some(r) = max_round {
            if r as usize >= self.round_labels.len() {
                return Err(Error::Binding(format!("state round {r} has no label")));
            }
        }
        Ok(())
    }

    /// Explicit binding document for the current state machines.
    pub fn binding_description(&self) -> BindingDescription {
        let names = |ids: &[super::TokenId]| ids.iter().map(|t| self.tokens.name(*t).to_string()).collect();
        BindingDescription {
            primary_inputs: self.token_names(&self.primary_inputs),
            final_outputs: self.token_names(&self.final_outputs),
            rounds: self.round_labels.clone(),
            states: self
                .nodes
                .iter()
                .filter(|n| !n.states.is_empty())
                .map(|n| {
                    let states = n
                        .states
                        .iter()
                        .map(|s| StateDescription {
                            needs: names(&s.needs),
                            produces: names(&s.produces),
                            work: s.work,
                            round: s.round,
                        })
                        .collect();
                    (n.id.clone(), states)
                })
                .collect(),
        }
    }

    /// Architecture document for this graph, including its binding when bound.
    pub fn to_arch(&self) -> ArchDescription {
        ArchDescription {
            version: ARCH_DOC_VERSION,
            name: self.name.clone(),
            technology: self.technology.clone(),
            clock_mhz: Some(self.clock_mhz),
            nodes: self.nodes.iter().map(NodeDescription::from_node).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDescription {
                    start: self.nodes[e.start].id.clone(),
                    end: self.nodes[e.end].id.clone(),
                })
                .collect(),
            schedule: None,
            binding: self.is_bound().then(|| self.binding_description()),
        }
    }
}

/// Builds the graph and applies the document's explicit binding, if any.
pub fn build_bound_graph(arch: &ArchDescription, costs: &UnitCostLibrary) -> Result<AccelGraph> {
    let mut g = build_graph(arch, costs)?;
    if let Some(b) = &arch.binding {
        g.apply_binding(b)?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::generic_28nm;

    fn two_node() -> ArchDescription {
        parse_arch(
            r#"{"version":1,"name":"pair","technology":"generic-28nm",
                "nodes":[{"id":"bus","kind":"data_path","impl":"axi","freq_mhz":200,"precision":8,"port_width_bits":64},
                         {"id":"pe","kind":"computation","impl":"adder_tree","freq_mhz":200,"precision":8,"unroll":16}],
                "edges":[{"start":"bus","end":"pe"}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn two_node_arch_builds() {
        let g = build_graph(&two_node(), &generic_28nm()).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert!(!g.is_bound());
        assert_eq!(g.clock_mhz, 200.0);
    }

    #[test]
    fn dangling_endpoint_rejected() {
        let mut a = two_node();
        a.edges.push(EdgeDescription {
            start: "pe".into(),
            end: "ghost".into(),
        });
        let err = build_graph(&a, &generic_28nm()).unwrap_err();
        assert!(err.to_string().contains("dangling endpoint"), "{err}");
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut a = two_node();
        a.nodes.push(a.nodes[0].clone());
        assert!(build_graph(&a, &generic_28nm()).unwrap_err().to_string().contains("duplicate node id"));
    }

    #[test]
    fn unresolvable_impl_rejected() {
        let mut a = two_node();
        a.nodes[1].implementation = "Adder_Tree".into();
        let err = build_graph(&a, &generic_28nm()).unwrap_err();
        assert!(err.to_string().contains("unknown implementation"), "{err}");
    }

    #[test]
    fn foreign_attribute_rejected() {
        let mut a = two_node();
        a.nodes[0].unroll = Some(4);
        assert!(build_graph(&a, &generic_28nm()).is_err());
    }

    #[test]
    fn unknown_field_rejected() {
        let err = parse_arch(r#"{"version":1,"name":"x","technology":"t","nodes":[],"edges":[],"colour":1}"#)
            .unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn to_arch_round_trips() {
        let costs = generic_28nm();
        let mut a = two_node();
        a.binding = Some(BindingDescription {
            primary_inputs: vec!["x".into()],
            final_outputs: vec!["y".into()],
            rounds: vec!["only".into()],
            states: BTreeMap::from([
                ("bus".to_string(), vec![StateDescription { needs: vec!["x".into()], produces: vec!["m".into()], work: 64, round: 0 }]),
                ("pe".to_string(), vec![StateDescription { needs: vec!["m".into()], produces: vec!["y".into()], work: 16, round: 0 }]),
            ]),
        });
        let g = build_bound_graph(&a, &costs).unwrap();
        let again = build_bound_graph(&parse_arch(&g.to_arch().to_json()).unwrap(), &costs).unwrap();
        assert_eq!(g, again);
    }
}
