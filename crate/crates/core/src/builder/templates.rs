//! Parameterised architecture templates.
//!
//! Every template reads DRAM through an AXI port, stages data in on-chip
//! buffers and writes results back through a second AXI port. Implementation
//! keys refer to the bundled `generic-28nm` library.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dnn::LayerKind;
use crate::error::{Error, Result};
use crate::graph::{
    ArchDescription, DataType, EdgeDescription, IpKind, NodeDescription, ARCH_DOC_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// One (or, flattened, several chained) adder-tree engines.
    AdderTreeSpatial,
    /// Separate depth-wise and standard convolution engines.
    HeteroDwConv,
    /// Output-stationary `dim × dim` MAC grid.
    SystolicArray,
    /// PE grid whose neighbours talk through NoC hops.
    RowStationaryNoc,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 4] = [
        TemplateKind::AdderTreeSpatial,
        TemplateKind::HeteroDwConv,
        TemplateKind::SystolicArray,
        TemplateKind::RowStationaryNoc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::AdderTreeSpatial => "adder_tree_spatial",
            TemplateKind::HeteroDwConv => "hetero_dw_conv",
            TemplateKind::SystolicArray => "systolic_array",
            TemplateKind::RowStationaryNoc => "row_stationary_noc",
        }
    }

    /// Declared parameters: `(name, default, min, max)`.
    pub fn parameters(self) -> &'static [(&'static str, u64, u64, u64)] {
        const MEM: (u64, u64) = (1, 1 << 20);
        match self {
            TemplateKind::AdderTreeSpatial => &[
                ("unroll", 64, 1, 4096),
                ("engines", 1, 1, 16),
                ("ibuf_kb", 64, MEM.0, MEM.1),
                ("wbuf_kb", 64, MEM.0, MEM.1),
                ("obuf_kb", 64, MEM.0, MEM.1),
                ("bus_width", 64, 1, 4096),
                ("freq_mhz", 200, 1, 2000),
            ],
            TemplateKind::HeteroDwConv => &[
                ("dw_unroll", 16, 1, 4096),
                ("conv_unroll", 64, 1, 4096),
                ("bram_kb", 128, MEM.0, MEM.1),
                ("wbuf_kb", 64, MEM.0, MEM.1),
                ("bus_width", 64, 1, 4096),
                ("freq_mhz", 200, 1, 2000),
            ],
            TemplateKind::SystolicArray => &[
                ("dim", 8, 1, 64),
                ("ibuf_kb", 64, MEM.0, MEM.1),
                ("wbuf_kb", 64, MEM.0, MEM.1),
                ("obuf_kb", 64, MEM.0, MEM.1),
                ("bus_width", 64, 1, 4096),
                ("freq_mhz", 200, 1, 2000),
            ],
            TemplateKind::RowStationaryNoc => &[
                ("dim", 4, 1, 32),
                ("pe_unroll", 4, 1, 256),
                ("noc_width", 16, 1, 1024),
                ("glb_kb", 128, MEM.0, MEM.1),
                ("bus_width", 64, 1, 4096),
                ("freq_mhz", 200, 1, 2000),
            ],
        }
    }

    /// Layer kinds the template's computation nodes can run.
    pub fn supported_ops(self) -> Vec<LayerKind> {
        match self {
            TemplateKind::AdderTreeSpatial => LayerKind::ALL.into_iter().filter(|k| *k != LayerKind::DwConv).collect(),
            _ => LayerKind::ALL.to_vec(),
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type TemplateParams = BTreeMap<String, u64>;

/// Technology tag used by template implementation keys.
pub const TEMPLATE_TECHNOLOGY: &str = "generic-28nm";

const DRAM_BITS: u64 = 1 << 34;
const PRECISION: u32 = 8;

/// Fills defaults and checks names and ranges.
pub fn resolve_params(kind: TemplateKind, params: &TemplateParams) -> Result<TemplateParams> {
    let decl = kind.parameters();
    for name in params.keys() {
        if !decl.iter().any(|(n, ..)| n == name) {
            return Err(Error::Template(format!("unknown parameter `{name}` for {kind}")));
        }
    }
    let mut out = TemplateParams::new();
    for &(name, default, lo, hi) in decl {
        let v = params.get(name).copied().unwrap_or(default);
        if !(lo..=hi).contains(&v) {
            return Err(Error::Template(format!(
                "parameter `{name}` = {v} outside [{lo}, {hi}] for {kind}"
            )));
        }
        out.insert(name.to_string(), v);
    }
    Ok(out)
}

struct Builder {
    freq: f64,
    nodes: Vec<NodeDescription>,
    edges: Vec<EdgeDescription>,
}

impl Builder {
    fn node(&mut self, id: &str, kind: IpKind, implementation: &str) -> &mut NodeDescription {
        self.nodes.push(NodeDescription {
            id: id.to_string(),
            kind,
            implementation: implementation.to_string(),
            freq_mhz: self.freq,
            precision: PRECISION,
            volume_bits: None,
            data_types: None,
            port_width_bits: None,
            unroll: None,
            ops: None,
            grid: None,
        });
        self.nodes.last_mut().expect("just pushed")
    }

    fn memory(&mut self, id: &str, implementation: &str, bits: u64, port: u64, types: &[DataType]) {
        let n = self.node(id, IpKind::Memory, implementation);
        n.volume_bits = Some(bits);
        n.port_width_bits = Some(port as u32);
        n.data_types = Some(types.to_vec());
    }

    fn path(&mut self, id: &str, implementation: &str, port: u64, types: &[DataType]) {
        let n = self.node(id, IpKind::DataPath, implementation);
        n.port_width_bits = Some(port as u32);
        n.data_types = Some(types.to_vec());
    }

    fn engine(&mut self, id: &str, implementation: &str, unroll: u64, ops: &[LayerKind], grid: Option<[u32; 2]>) {
        let n = self.node(id, IpKind::Computation, implementation);
        n.unroll = Some(unroll as u32);
        n.ops = Some(ops.to_vec());
        n.grid = grid;
    }

    fn edge(&mut self, a: &str, b: &str) {
        self.edges.push(EdgeDescription {
            start: a.to_string(),
            end: b.to_string(),
        });
    }

    fn finish(self, kind: TemplateKind) -> ArchDescription {
        ArchDescription {
            version: ARCH_DOC_VERSION,
            name: kind.name().to_string(),
            technology: TEMPLATE_TECHNOLOGY.to_string(),
            clock_mhz: Some(self.freq),
            nodes: self.nodes,
            edges: self.edges,
            schedule: None,
            binding: None,
        }
    }
}

use DataType::{Activations as A, PartialSums as P, Weights as W};

fn kb(v: u64) -> u64 {
    v * 1024 * 8
}

/// Architecture description for a template and parameter assignment.
pub fn instantiate_template(kind: TemplateKind, params: &TemplateParams) -> Result<ArchDescription> {
    let p = resolve_params(kind, params)?;
    let get = |name: &str| p[name];
    let mut b = Builder {
        freq: get("freq_mhz") as f64,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    let bus = get("bus_width");
    b.memory("dram_in", "dram", DRAM_BITS, bus, &[W, A]);
    match kind {
        TemplateKind::AdderTreeSpatial => {
            let ops = kind.supported_ops();
            b.path("axi_in", "axi", bus, &[W, A]);
            b.memory("ibuf", "sram", kb(get("ibuf_kb")), bus, &[A]);
            b.memory("wbuf", "sram", kb(get("wbuf_kb")), bus, &[W]);
            let engines = get("engines");
            for e in 0..engines {
                b.engine(&format!("engine_{e}"), "adder_tree", get("unroll"), &ops, None);
                if e + 1 < engines {
                    b.path(&format!("fifo_{e}"), "fifo", bus, &[A]);
                }
            }
            b.memory("obuf", "sram", kb(get("obuf_kb")), bus, &[A, P]);
            b.edge("dram_in", "axi_in");
            b.edge("axi_in", "ibuf");
            b.edge("axi_in", "wbuf");
            for e in 0..engines {
                let id = format!("engine_{e}");
                b.edge("ibuf", &id);
                b.edge("wbuf", &id);
                b.edge(&id, "obuf");
                if e + 1 < engines {
                    b.edge(&id, &format!("fifo_{e}"));
                    b.edge(&format!("fifo_{e}"), &format!("engine_{}", e + 1));
                }
            }
            b.path("axi_out", "axi", bus, &[A]);
            b.edge("obuf", "axi_out");
        }
        TemplateKind::HeteroDwConv => {
            use LayerKind::*;
            b.path("axi_in", "axi", bus, &[A]);
            b.memory("bram_a", "sram", kb(get("bram_kb")), bus, &[A]);
            b.path("axi_w", "axi", bus, &[W]);
            b.memory("wbuf", "sram", kb(get("wbuf_kb")), bus, &[W]);
            b.engine("dw_engine", "dw_engine", get("dw_unroll"), &[DwConv, Pool, ReLU], None);
            b.engine("conv_engine", "adder_tree", get("conv_unroll"), &[Conv, FullyConnected, Reorg, Add, Concat], None);
            b.memory("bram_b", "sram", kb(get("bram_kb")), bus, &[A, P]);
            b.path("axi_out", "axi", bus, &[A]);
            b.edge("dram_in", "axi_in");
            b.edge("axi_in", "bram_a");
            b.edge("dram_in", "axi_w");
            b.edge("axi_w", "wbuf");
            for e in ["dw_engine", "conv_engine"] {
                b.edge("bram_a", e);
                b.edge("wbuf", e);
                b.edge(e, "bram_b");
            }
            b.edge("bram_b", "axi_out");
        }
        TemplateKind::SystolicArray | TemplateKind::RowStationaryNoc => {
            let noc = kind == TemplateKind::RowStationaryNoc;
            let n = get("dim");
            let ops = kind.supported_ops();
            let (wbits, ibits, obits) = if noc {
                let g = kb(get("glb_kb"));
                (g / 2, g / 2, g / 2)
            } else {
                (kb(get("wbuf_kb")), kb(get("ibuf_kb")), kb(get("obuf_kb")))
            };
            let (pe_impl, unroll) = if noc { ("mac_pe", get("pe_unroll")) } else { ("mac_pe", 1) };
            b.path("axi_in", "axi", bus, &[W, A]);
            b.memory("wbuf", "sram", wbits, bus, &[W]);
            b.memory("ibuf", "sram", ibits, bus, &[A]);
            b.edge("dram_in", "axi_in");
            b.edge("axi_in", "wbuf");
            b.edge("axi_in", "ibuf");
            for i in 0..n {
                b.path(&format!("feed_row_{i}"), "feeder", PRECISION as u64, &[W]);
                b.edge("wbuf", &format!("feed_row_{i}"));
                b.edge(&format!("feed_row_{i}"), &format!("pe_{i}_0"));
            }
            for j in 0..n {
                b.path(&format!("feed_col_{j}"), "feeder", PRECISION as u64, &[A]);
                b.edge("ibuf", &format!("feed_col_{j}"));
                b.edge(&format!("feed_col_{j}"), &format!("pe_0_{j}"));
            }
            let width = if noc { get("noc_width") } else { PRECISION as u64 };
            for i in 0..n {
                for j in 0..n {
                    let id = format!("pe_{i}_{j}");
                    b.engine(&id, pe_impl, unroll, &ops, Some([i as u32, j as u32]));
                    let mut link = |to: String, hop: String, types: &[DataType]| {
                        if noc {
                            b.path(&hop, "noc", width, types);
                            b.edge(&id, &hop);
                            b.edge(&hop, &to);
                        } else {
                            b.edge(&id, &to);
                        }
                    };
                    if j + 1 < n {
                        link(format!("pe_{i}_{}", j + 1), format!("noc_h_{i}_{j}"), &[W]);
                    }
                    if i + 1 < n {
                        link(format!("pe_{}_{j}", i + 1), format!("noc_v_{i}_{j}"), &[A]);
                    }
                    b.edge(&id, "drain");
                }
            }
            b.path("drain", "fifo", bus, &[A, P]);
            b.memory("obuf", "sram", obits, bus, &[A, P]);
            b.path("axi_out", "axi", bus, &[A]);
            b.edge("drain", "obuf");
            b.edge("obuf", "axi_out");
        }
    }
    b.memory("dram_out", "dram", DRAM_BITS, bus, &[A]);
    b.edge("axi_out", "dram_out");
    Ok(b.finish(kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::generic_28nm;
    use crate::graph::{build_graph, validate_graph};

    fn with(pairs: &[(&str, u64)]) -> TemplateParams {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn every_template_builds_and_validates() {
        let costs = generic_28nm();
        for kind in TemplateKind::ALL {
            let arch = instantiate_template(kind, &TemplateParams::new()).unwrap();
            let g = build_graph(&arch, &costs).unwrap();
            assert_eq!(validate_graph(&g), vec![], "{kind}");
        }
    }

    #[test]
    fn systolic_closed_form_counts() {
        for n in [1u64, 3, 8] {
            let a = instantiate_template(TemplateKind::SystolicArray, &with(&[("dim", n)])).unwrap();
            assert_eq!(a.count_kind(IpKind::Computation) as u64, n * n);
            assert_eq!(a.nodes.iter().filter(|x| x.implementation == "feeder").count() as u64, 2 * n);
            assert_eq!(a.nodes.len() as u64, n * n + 2 * n + 8);
        }
    }

    #[test]
    fn hetero_has_two_engine_kinds() {
        let a = instantiate_template(TemplateKind::HeteroDwConv, &TemplateParams::new()).unwrap();
        let impls: std::collections::BTreeSet<_> = a
            .nodes
            .iter()
            .filter(|n| n.kind == IpKind::Computation)
            .map(|n| n.implementation.as_str())
            .collect();
        assert_eq!(impls.len(), 2);
    }

    #[test]
    fn noc_hops_sit_between_pes() {
        let a = instantiate_template(TemplateKind::RowStationaryNoc, &with(&[("dim", 2)])).unwrap();
        assert_eq!(a.nodes.iter().filter(|n| n.implementation == "noc").count(), 4);
        assert!(a.edges.iter().any(|e| e.start == "pe_0_0" && e.end == "noc_h_0_0"));
        assert!(a.edges.iter().any(|e| e.start == "noc_h_0_0" && e.end == "pe_0_1"));
    }

    #[test]
    fn out_of_range_and_unknown_rejected() {
        assert!(instantiate_template(TemplateKind::SystolicArray, &with(&[("dim", 0)])).is_err());
        assert!(instantiate_template(TemplateKind::SystolicArray, &with(&[("rows", 2)])).is_err());
    }
}
