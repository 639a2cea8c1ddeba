//! Layer-graph description of a DNN and the per-layer workload it induces.
//!
//! Models are exchanged as a versioned JSON document (see `docs/formats.md`):
//!
//! ```json
//! { "version": 1, "name": "tiny", "precision": { "w": 8, "a": 8, "acc": 32 },
//!   "layers": [ { "id": "conv1", "kind": "conv", "in_shape": [3, 32, 32],
//!                 "out_shape": [16, 32, 32], "kernel": [3, 3], "stride": 1, "preds": [] } ] }
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
}

impl TensorShape {
    pub fn new(channels: u32, height: u32, width: u32) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn elements(&self) -> u64 {
        self.channels as u64 * self.height as u64 * self.width as u64
    }

    fn as_array(&self) -> [u32; 3] {
        [self.channels, self.height, self.width]
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    #[serde(rename = "dwconv")]
    DwConv,
    Pool,
    #[serde(rename = "relu")]
    ReLU,
    Reorg,
    #[serde(rename = "fc")]
    FullyConnected,
    Add,
    Concat,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Conv,
        LayerKind::DwConv,
        LayerKind::Pool,
        LayerKind::ReLU,
        LayerKind::Reorg,
        LayerKind::FullyConnected,
        LayerKind::Add,
        LayerKind::Concat,
    ];

    pub fn has_weights(self) -> bool {
        matches!(
            self,
            LayerKind::Conv | LayerKind::DwConv | LayerKind::FullyConnected
        )
    }

    pub fn has_kernel(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::DwConv | LayerKind::Pool)
    }

    fn is_merge(self) -> bool {
        matches!(self, LayerKind::Add | LayerKind::Concat)
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::DwConv => "dwconv",
            LayerKind::Pool => "pool",
            LayerKind::ReLU => "relu",
            LayerKind::Reorg => "reorg",
            LayerKind::FullyConnected => "fc",
            LayerKind::Add => "add",
            LayerKind::Concat => "concat",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Kernel {
    pub height: u32,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub input_shape: TensorShape,
    pub output_shape: TensorShape,
    pub kernel: Option<Kernel>,
    pub stride: u32,
    /// Explicit zero padding; `None` means "same" padding.
    pub padding: Option<u32>,
    pub predecessors: Vec<String>,
}

/// Bit widths of weights, activations and accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Precision {
    #[serde(rename = "w")]
    pub weights: u32,
    #[serde(rename = "a")]
    pub activations: u32,
    #[serde(rename = "acc")]
    pub accumulator: u32,
}

impl Precision {
    pub fn new(weights: u32, activations: u32, accumulator: u32) -> Self {
        Self {
            weights,
            activations,
            accumulator,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, bits) in [
            ("w", self.weights),
            ("a", self.activations),
            ("acc", self.accumulator),
        ] {
            if !(1..=64).contains(&bits) {
                return Err(Error::Model(format!(
                    "precision `{name}` = {bits} outside [1, 64]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnnModel {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    pub precision: Precision,
}

/// Work a single layer imposes, in MACs and bits moved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Workload {
    pub mac_count: u64,
    pub input_volume: u64,
    pub weight_volume: u64,
    pub output_volume: u64,
}

/// Output extent of a sliding window along one dimension.
pub(crate) fn window_out(input: u32, kernel: u32, stride: u32, padding: Option<u32>) -> Option<u32> {
    match padding {
        None => Some(input.div_ceil(stride)),
        Some(pad) => {
            let padded = input + 2 * pad;
            if padded < kernel {
                None
            } else {
                Some((padded - kernel) / stride + 1)
            }
        }
    }
}

impl LayerSpec {
    pub fn weight_count(&self) -> u64 {
        let k = self
            .kernel
            .map(|k| k.height as u64 * k.width as u64)
            .unwrap_or(1);
        match self.kind {
            LayerKind::Conv => self.output_shape.channels as u64 * self.input_shape.channels as u64 * k,
            LayerKind::DwConv => self.input_shape.channels as u64 * k,
            LayerKind::FullyConnected => {
                self.output_shape.channels as u64 * self.input_shape.elements()
            }
            _ => 0,
        }
    }

    pub fn mac_count(&self) -> u64 {
        let k = self
            .kernel
            .map(|k| k.height as u64 * k.width as u64)
            .unwrap_or(1);
        let out_positions = self.output_shape.height as u64 * self.output_shape.width as u64;
        match self.kind {
            LayerKind::Conv => {
                self.output_shape.channels as u64 * self.input_shape.channels as u64 * k * out_positions
            }
            LayerKind::DwConv => self.input_shape.channels as u64 * k * out_positions,
            LayerKind::FullyConnected => self.output_shape.channels as u64 * self.input_shape.elements(),
            _ => 0,
        }
    }

    /// Checks the layer in isolation: kernel presence, stride and shape arithmetic.
    fn validate_local(&self) -> Result<()> {
        let bad = |detail: String| Error::ShapeMismatch {
            layer: self.id.clone(),
            detail,
        };
        for (what, s) in [("in_shape", self.input_shape), ("out_shape", self.output_shape)] {
            if s.channels == 0 || s.height == 0 || s.width == 0 {
                return Err(bad(format!("{what} {s} has a zero dimension")));
            }
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::Model(format!(
                "layer `{}`: stride {} unsupported (only 1 and 2 are modeled)",
                self.id, self.stride
            )));
        }
        match (self.kind.has_kernel(), self.kernel) {
            (true, None) => {
                return Err(Error::Model(format!(
                    "layer `{}` ({}) requires a kernel",
                    self.id, self.kind
                )))
            }
            (false, Some(_)) => {
                return Err(Error::Model(format!(
                    "layer `{}` ({}) must not declare a kernel",
                    self.id, self.kind
                )))
            }
            (true, Some(k)) if k.height == 0 || k.width == 0 => {
                return Err(Error::Model(format!("layer `{}` has a zero kernel", self.id)))
            }
            _ => {}
        }
        if self.padding.is_some() && !self.kind.has_kernel() {
            return Err(Error::Model(format!(
                "layer `{}` ({}) must not declare padding",
                self.id, self.kind
            )));
        }
        let (i, o) = (self.input_shape, self.output_shape);
        match self.kind {
            LayerKind::Conv | LayerKind::DwConv | LayerKind::Pool => {
                let k = self.kernel.expect("checked above");
                let h = window_out(i.height, k.height, self.stride, self.padding);
                let w = window_out(i.width, k.width, self.stride, self.padding);
                if h != Some(o.height) || w != Some(o.width) {
                    return Err(bad(format!(
                        "out_shape {o} inconsistent with in_shape {i}, kernel {}x{}, stride {}",
                        k.height, k.width, self.stride
                    )));
                }
                if self.kind != LayerKind::Conv && o.channels != i.channels {
                    return Err(bad(format!(
                        "{} must preserve channels ({} -> {})",
                        self.kind, i.channels, o.channels
                    )));
                }
            }
            LayerKind::ReLU | LayerKind::Add | LayerKind::Concat => {
                if self.stride != 1 {
                    return Err(Error::Model(format!(
                        "layer `{}` ({}) must have stride 1",
                        self.id, self.kind
                    )));
                }
                if o != i {
                    return Err(bad(format!("out_shape {o} must equal in_shape {i}")));
                }
            }
            LayerKind::Reorg => {
                if self.stride != 2 {
                    return Err(Error::Model(format!(
                        "layer `{}`: reorg requires stride 2",
                        self.id
                    )));
                }
                if i.height % 2 != 0 || i.width % 2 != 0 {
                    return Err(bad(format!("reorg input {i} needs even spatial dims")));
                }
                let expect = TensorShape::new(i.channels * 4, i.height / 2, i.width / 2);
                if o != expect {
                    return Err(bad(format!("reorg of {i} must produce {expect}, got {o}")));
                }
            }
            LayerKind::FullyConnected => {
                if self.stride != 1 {
                    return Err(Error::Model(format!(
                        "layer `{}` (fc) must have stride 1",
                        self.id
                    )));
                }
                if o.height != 1 || o.width != 1 {
                    return Err(bad(format!("fc output {o} must be Mx1x1")));
                }
            }
        }
        Ok(())
    }
}

/// Computes the workload of one layer at the given precision.
pub fn layer_workload(layer: &LayerSpec, precision: &Precision) -> Workload {
    Workload {
        mac_count: layer.mac_count(),
        input_volume: layer.input_shape.elements() * precision.activations as u64,
        weight_volume: layer.weight_count() * precision.weights as u64,
        output_volume: layer.output_shape.elements() * precision.activations as u64,
    }
}

impl DnnModel {
    /// Builds a model and checks every invariant.
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>, precision: Precision) -> Result<Self> {
        let model = Self {
            name: name.into(),
            layers,
            precision,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.precision.validate()?;
        let mut index = BTreeMap::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.id.is_empty() {
                return Err(Error::Model("layer with empty id".into()));
            }
            if index.insert(layer.id.as_str(), i).is_some() {
                return Err(Error::Model(format!("duplicate layer id `{}`", layer.id)));
            }
        }
        for layer in &self.layers {
            let mut seen = BTreeSet::new();
            for pred in &layer.predecessors {
                if !index.contains_key(pred.as_str()) {
                    return Err(Error::UnknownPredecessor {
                        layer: layer.id.clone(),
                        pred: pred.clone(),
                    });
                }
                if !seen.insert(pred.as_str()) {
                    return Err(Error::Model(format!(
                        "layer `{}` lists predecessor `{pred}` twice",
                        layer.id
                    )));
                }
            }
        }
        self.topological_order()?;
        for layer in &self.layers {
            layer.validate_local()?;
            self.validate_connections(layer, &index)?;
        }
        Ok(())
    }

    fn validate_connections(&self, layer: &LayerSpec, index: &BTreeMap<&str, usize>) -> Result<()> {
        let preds: Vec<&LayerSpec> = layer
            .predecessors
            .iter()
            .map(|p| &self.layers[index[p.as_str()]])
            .collect();
        let bad = |detail: String| Error::ShapeMismatch {
            layer: layer.id.clone(),
            detail,
        };
        if layer.kind.is_merge() {
            if preds.len() < 2 {
                return Err(bad(format!("{} needs at least two predecessors", layer.kind)));
            }
            let i = layer.input_shape;
            for p in &preds {
                let o = p.output_shape;
                if o.height != i.height || o.width != i.width {
                    return Err(bad(format!(
                        "predecessor `{}` spatial size {o} does not match in_shape {i}",
                        p.id
                    )));
                }
                if layer.kind == LayerKind::Add && o.channels != i.channels {
                    return Err(bad(format!(
                        "add operand `{}` has shape {o}, expected {i}",
                        p.id
                    )));
                }
            }
            if layer.kind == LayerKind::Concat {
                let total: u64 = preds.iter().map(|p| p.output_shape.channels as u64).sum();
                if total != i.channels as u64 {
                    return Err(bad(format!(
                        "concat inputs sum to {total} channels, in_shape has {}",
                        i.channels
                    )));
                }
            }
        } else {
            if preds.len() > 1 {
                return Err(bad(format!(
                    "{} accepts one predecessor, got {}",
                    layer.kind,
                    preds.len()
                )));
            }
            if let Some(p) = preds.first() {
                if p.output_shape != layer.input_shape {
                    return Err(bad(format!(
                        "predecessor `{}` produces {}, in_shape is {}",
                        p.id, p.output_shape, layer.input_shape
                    )));
                }
            }
        }
        Ok(())
    }

    /// Kahn order, ties broken by position in the layer list.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let index: BTreeMap<&str, usize> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.as_str(), i))
            .collect();
        let n = self.layers.len();
        let mut indegree = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for (i, layer) in self.layers.iter().enumerate() {
            for p in &layer.predecessors {
                let Some(&pi) = index.get(p.as_str()) else {
                    return Err(Error::UnknownPredecessor {
                        layer: layer.id.clone(),
                        pred: p.clone(),
                    });
                };
                succ[pi].push(i);
                indegree[i] += 1;
            }
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..n)
            .filter(|&i| indegree[i] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(i)) = ready.pop() {
            order.push(i);
            for &s in &succ[i] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(std::cmp::Reverse(s));
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).expect("cycle member");
            return Err(Error::CyclicModel(self.layers[stuck].id.clone()));
        }
        Ok(order)
    }

    pub fn layer(&self, id: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn entry_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.predecessors.is_empty())
    }

    pub fn exit_layers(&self) -> Vec<&LayerSpec> {
        let consumed: BTreeSet<&str> = self
            .layers
            .iter()
            .flat_map(|l| l.predecessors.iter().map(String::as_str))
            .collect();
        self.layers
            .iter()
            .filter(|l| !consumed.contains(l.id.as_str()))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.layers.iter().map(|l| l.predecessors.len()).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(LayerSpec::mac_count).sum()
    }

    /// Extracts the sub-model made of `ids`; predecessors outside the set are dropped,
    /// turning those layers into entry layers.
    pub fn sub_model(&self, name: impl Into<String>, ids: &[&str]) -> Result<DnnModel> {
        let keep: BTreeSet<&str> = ids.iter().copied().collect();
        let layers = self
            .layers
            .iter()
            .filter(|l| keep.contains(l.id.as_str()))
            .map(|l| {
                let mut l = l.clone();
                l.predecessors.retain(|p| keep.contains(p.as_str()));
                l
            })
            .collect();
        DnnModel::new(name, layers, self.precision)
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            version: MODEL_DOC_VERSION,
            name: self.name.clone(),
            precision: self.precision,
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    id: l.id.clone(),
                    kind: l.kind,
                    in_shape: l.input_shape.as_array(),
                    out_shape: l.output_shape.as_array(),
                    kernel: l.kernel.map(|k| [k.height, k.width]),
                    stride: Some(l.stride),
                    padding: l.padding,
                    preds: l.predecessors.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDocument {
    pub id: String,
    pub kind: LayerKind,
    pub in_shape: [u32; 3],
    pub out_shape: [u32; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<u32>,
    #[serde(default)]
    pub preds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub version: u32,
    pub name: String,
    pub precision: Precision,
    pub layers: Vec<LayerDocument>,
}

impl ModelDocument {
    pub fn into_model(self) -> Result<DnnModel> {
        if self.version != MODEL_DOC_VERSION {
            return Err(Error::Version {
                found: self.version,
                expected: MODEL_DOC_VERSION,
            });
        }
        let shape = |a: [u32; 3]| TensorShape::new(a[0], a[1], a[2]);
        let layers = self
            .layers
            .into_iter()
            .map(|l| LayerSpec {
                stride: l.stride.unwrap_or(if l.kind == LayerKind::Reorg { 2 } else { 1 }),
                id: l.id,
                kind: l.kind,
                input_shape: shape(l.in_shape),
                output_shape: shape(l.out_shape),
                kernel: l.kernel.map(|k| Kernel {
                    height: k[0],
                    width: k[1],
                }),
                padding: l.padding,
                predecessors: l.preds,
            })
            .collect();
        DnnModel::new(self.name, layers, self.precision)
    }
}

/// Parses and validates a model-interchange document.
pub fn parse_model(document: &str) -> Result<DnnModel> {
    let doc: ModelDocument = serde_json::from_str(document)?;
    doc.into_model()
}

pub fn load_model(path: impl AsRef<std::path::Path>) -> Result<DnnModel> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_model(&text)
}

/// Edges of the layer DAG as `(from, to)` id pairs.
pub fn layer_edges(model: &DnnModel) -> Vec<(String, String)> {
    model
        .layers
        .iter()
        .flat_map(|l| l.predecessors.iter().map(move |p| (p.clone(), l.id.clone())))
        .collect()
}

/// Layers reachable from `start` (exclusive) along successor edges.
pub fn descendants(model: &DnnModel, start: &str) -> BTreeSet<String> {
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for l in &model.layers {
        for p in &l.predecessors {
            succ.entry(p.as_str()).or_default().push(l.id.as_str());
        }
    }
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<&str> = VecDeque::from([start]);
    while let Some(id) = queue.pop_front() {
        for &s in succ.get(id).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(s.to_string()) {
                queue.push_back(s);
            }
        }
    }
    seen
}
