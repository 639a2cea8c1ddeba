//! Unit energy/latency parameters per IP implementation.
//!
//! Energies are in joules and latencies in seconds. Conversion to cycles happens
//! at prediction time using the clock of the IP that uses the entry.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::IpKind;

pub const COST_DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IpCostParams {
    /// e1 (computation) or e3 (data path / memory).
    pub e_warmup: f64,
    /// l1 (computation) or l2 (data path / memory).
    pub l_warmup: f64,
    /// e2 (computation) or e4 (data path / memory).
    pub e_control_per_state: f64,
    /// l3; data path and memory only.
    pub l_control_per_state: f64,
    pub e_mac: f64,
    pub l_mac: f64,
    pub e_bit: f64,
    pub l_bit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostEntry {
    pub kind: IpKind,
    pub params: IpCostParams,
}

/// Per-inference overhead of the host CPU / on-chip controller.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostOverhead {
    #[serde(default)]
    pub energy: f64,
    #[serde(default)]
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnitCostLibrary {
    entries: BTreeMap<(String, String), CostEntry>,
    provenance: BTreeMap<String, String>,
    /// Multipliers charged per memory node for address decoding.
    pub mul_per_decode: u64,
    pub host: HostOverhead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntryDocument {
    #[serde(rename = "impl")]
    pub implementation: String,
    pub kind: IpKind,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub e_warmup: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub l_warmup: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub e_control_per_state: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_control_per_state: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_mac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_mac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_bit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_bit: Option<f64>,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostDocument {
    pub version: u32,
    pub technology: String,
    pub provenance: String,
    #[serde(default)]
    pub mul_per_decode: u64,
    #[serde(default)]
    pub host: HostOverhead,
    pub entries: Vec<CostEntryDocument>,
}

impl CostEntryDocument {
    fn into_entry(self) -> Result<(String, CostEntry)> {
        let name = self.implementation.clone();
        let neg = |field: &str| Error::NegativeCost {
            implementation: name.clone(),
            field: field.to_string(),
        };
        let missing = |field: &str| {
            Error::CostLibrary(format!(
                "entry `{name}` ({}) is missing mandatory field `{field}`",
                self.kind
            ))
        };
        let forbidden = |field: &str| {
            Error::CostLibrary(format!(
                "entry `{name}` ({}) must not define `{field}`",
                self.kind
            ))
        };
        let check = |field: &str, v: f64| -> Result<f64> {
            if !v.is_finite() {
                Err(Error::CostLibrary(format!("entry `{name}`: `{field}` is not finite")))
            } else if v < 0.0 {
                Err(neg(field))
            } else {
                Ok(v)
            }
        };
        let mut params = IpCostParams {
            e_warmup: check("e_warmup", self.e_warmup)?,
            l_warmup: check("l_warmup", self.l_warmup)?,
            e_control_per_state: check("e_control_per_state", self.e_control_per_state)?,
            ..Default::default()
        };
        match self.kind {
            IpKind::Computation => {
                if self.l_control_per_state.is_some() {
                    return Err(forbidden("l_control_per_state"));
                }
                if self.e_bit.is_some() {
                    return Err(forbidden("e_bit"));
                }
                if self.l_bit.is_some() {
                    return Err(forbidden("l_bit"));
                }
                params.e_mac = check("e_mac", self.e_mac.ok_or_else(|| missing("e_mac"))?)?;
                params.l_mac = check("l_mac", self.l_mac.ok_or_else(|| missing("l_mac"))?)?;
            }
            IpKind::DataPath | IpKind::Memory => {
                if self.e_mac.is_some() {
                    return Err(forbidden("e_mac"));
                }
                if self.l_mac.is_some() {
                    return Err(forbidden("l_mac"));
                }
                params.l_control_per_state =
                    check("l_control_per_state", self.l_control_per_state.unwrap_or(0.0))?;
                params.e_bit = check("e_bit", self.e_bit.ok_or_else(|| missing("e_bit"))?)?;
                params.l_bit = check("l_bit", self.l_bit.ok_or_else(|| missing("l_bit"))?)?;
            }
        }
        Ok((
            self.implementation,
            CostEntry {
                kind: self.kind,
                params,
            },
        ))
    }

    fn from_entry(implementation: &str, entry: &CostEntry) -> Self {
        let p = &entry.params;
        let comp = entry.kind == IpKind::Computation;
        Self {
            implementation: implementation.to_string(),
            kind: entry.kind,
            e_warmup: p.e_warmup,
            l_warmup: p.l_warmup,
            e_control_per_state: p.e_control_per_state,
            l_control_per_state: (!comp && p.l_control_per_state != 0.0).then_some(p.l_control_per_state),
            e_mac: comp.then_some(p.e_mac),
            l_mac: comp.then_some(p.l_mac),
            e_bit: (!comp).then_some(p.e_bit),
            l_bit: (!comp).then_some(p.l_bit),
        }
    }
}

impl UnitCostLibrary {
    pub fn from_document(doc: CostDocument) -> Result<Self> {
        if doc.version != COST_DOC_VERSION {
            return Err(Error::Version {
                found: doc.version,
                expected: COST_DOC_VERSION,
            });
        }
        if doc.technology.is_empty() {
            return Err(Error::CostLibrary("empty technology tag".into()));
        }
        if doc.provenance.trim().is_empty() {
            return Err(Error::CostLibrary("missing provenance statement".into()));
        }
        for (field, v) in [("host.energy", doc.host.energy), ("host.latency", doc.host.latency)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::NegativeCost {
                    implementation: "host".into(),
                    field: field.into(),
                });
            }
        }
        let mut lib = UnitCostLibrary {
            mul_per_decode: doc.mul_per_decode,
            host: doc.host,
            ..Default::default()
        };
        lib.provenance.insert(doc.technology.clone(), doc.provenance);
        for e in doc.entries {
            let (name, entry) = e.into_entry()?;
            let key = (name, doc.technology.clone());
            if lib.entries.contains_key(&key) {
                return Err(Error::CostLibrary(format!(
                    "duplicate key `{}` / `{}`",
                    key.0, key.1
                )));
            }
            lib.entries.insert(key, entry);
        }
        Ok(lib)
    }

    /// Adds the entries of another technology. Keys must not collide. Host
    /// overhead and decode cost are taken from `other`.
    pub fn merge(&mut self, other: UnitCostLibrary) -> Result<()> {
        for (key, entry) in other.entries {
            if self.entries.contains_key(&key) {
                return Err(Error::CostLibrary(format!(
                    "duplicate key `{}` / `{}`",
                    key.0, key.1
                )));
            }
            self.entries.insert(key, entry);
        }
        self.provenance.extend(other.provenance);
        self.host = other.host;
        self.mul_per_decode = other.mul_per_decode;
        Ok(())
    }

    pub fn insert(&mut self, implementation: &str, technology: &str, entry: CostEntry) {
        self.entries
            .insert((implementation.to_string(), technology.to_string()), entry);
        self.provenance
            .entry(technology.to_string())
            .or_insert_with(|| "constructed in code".to_string());
    }

    /// Exact, case-sensitive lookup.
    pub fn lookup(&self, implementation: &str, technology: &str) -> Result<&CostEntry> {
        self.entries
            .get(&(implementation.to_string(), technology.to_string()))
            .ok_or_else(|| Error::UnknownImplementation {
                implementation: implementation.to_string(),
                technology: technology.to_string(),
            })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.keys().map(|(i, t)| (i.as_str(), t.as_str()))
    }

    pub fn technologies(&self) -> impl Iterator<Item = &str> {
        self.provenance.keys().map(String::as_str)
    }

    pub fn provenance(&self, technology: &str) -> Option<&str> {
        self.provenance.get(technology).map(String::as_str)
    }

    /// Document for one technology of this library.
    pub fn to_document(&self, technology: &str) -> CostDocument {
        CostDocument {
            version: COST_DOC_VERSION,
            technology: technology.to_string(),
            provenance: self.provenance(technology).unwrap_or_default().to_string(),
            mul_per_decode: self.mul_per_decode,
            host: self.host,
            entries: self
                .entries
                .iter()
                .filter(|((_, t), _)| t == technology)
                .map(|((i, _), e)| CostEntryDocument::from_entry(i, e))
                .collect(),
        }
    }

    pub fn to_json(&self, technology: &str) -> String {
        serde_json::to_string_pretty(&self.to_document(technology)).expect("cost document serializes")
    }
}

/// Parses and validates a cost-library document.
pub fn load_library(document: &str) -> Result<UnitCostLibrary> {
    let doc: CostDocument = serde_json::from_str(document)?;
    UnitCostLibrary::from_document(doc)
}

pub fn load_library_file(path: impl AsRef<Path>) -> Result<UnitCostLibrary> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    load_library(&text)
}

/// Placeholder 28 nm library shipped with the crate.
pub const GENERIC_28NM: &str = include_str!("../data/generic-28nm.json");

pub fn generic_28nm() -> UnitCostLibrary {
    load_library(GENERIC_28NM).expect("bundled library is valid")
}
