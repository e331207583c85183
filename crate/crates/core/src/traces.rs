//! Line-delimited traces of real reasoner/tool runs.
//!
//! Each line records the direct-path correctness and, per tool, whether it
//! ran and whether the tool-augmented answer was correct:
//!
//! ```text
//! {"id":"q17","category":"music","features":["kw:audio_features",3],"options":4,"acc_dir":0,
//!  "tools":{"audio_features":{"acc":1,"executed":true},"transcribe":{"executed":false}}}
//! ```
//!
//! Features may be indices or names resolved through a [`FeatureDict`].
//! Replayed instances are deterministic: their outcome probabilities are the
//! recorded bits, so nothing stochastic is ever drawn.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Dataset, OutcomeSpec, TaskInstance, ToolRegistry};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("no valid records ({} malformed lines)", .0.len())]
    NoValidRecords(Vec<LineError>),
    #[error("feature dictionary: {0}")]
    Dictionary(String),
    #[error("cannot export instance `{0}`: outcome is not deterministic")]
    NotDeterministic(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    pub errors: Vec<LineError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolTrace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc: Option<u8>,
    pub executed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub id: String,
    pub category: String,
    pub features: Vec<FeatureRef>,
    pub options: u32,
    pub acc_dir: u8,
    #[serde(default)]
    pub tools: BTreeMap<String, ToolTrace>,
}

/// Maps named flags to feature indices. `audio` lists the flags derived from
/// audio rather than question text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDict {
    pub version: u32,
    pub feature_dim: usize,
    pub features: BTreeMap<String, usize>,
    #[serde(default)]
    pub audio: Vec<String>,
}

impl FeatureDict {
    pub fn new(feature_dim: usize) -> Self {
        Self { version: 1, feature_dim, features: BTreeMap::new(), audio: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.version != 1 {
            return Err(TraceError::Dictionary(format!("unsupported version {}", self.version)));
        }
        if let Some((n, i)) = self.features.iter().find(|(_, &i)| i >= self.feature_dim) {
            return Err(TraceError::Dictionary(format!("`{n}` maps to {i} >= feature_dim {}", self.feature_dim)));
        }
        if let Some(a) = self.audio.iter().find(|a| !self.features.contains_key(*a)) {
            return Err(TraceError::Dictionary(format!("audio flag `{a}` is not defined")));
        }
        Ok(())
    }

    pub fn audio_indices(&self) -> Vec<usize> {
        self.audio.iter().filter_map(|a| self.features.get(a).copied()).collect()
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let d: Self = serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| TraceError::Dictionary(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        fs::write(path, serde_json::to_string_pretty(self).expect("dict serializes") + "\n")?;
        Ok(())
    }
}

fn bit(v: u8, what: &str) -> Result<bool, String> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(format!("{what} must be 0 or 1, got {v}")),
    }
}

fn to_instance(rec: TraceRecord, dict: &FeatureDict, registry: &ToolRegistry) -> Result<TaskInstance, String> {
    if rec.options < 2 {
        return Err(format!("options must be >= 2, got {}", rec.options));
    }
    let acc_dir = bit(rec.acc_dir, "acc_dir")?;
    let mut features = Vec::with_capacity(rec.features.len());
    for f in &rec.features {
        let idx = match f {
            FeatureRef::Index(i) if *i < dict.feature_dim => *i,
            FeatureRef::Index(i) => return Err(format!("feature index {i} >= feature_dim {}", dict.feature_dim)),
            FeatureRef::Name(n) => *dict.features.get(n).ok_or_else(|| format!("unknown feature `{n}`"))?,
        };
        features.push(idx);
    }
    features.sort_unstable();
    features.dedup();

    let mut p_tool = BTreeMap::new();
    let mut unexecuted = BTreeSet::new();
    for (name, t) in rec.tools {
        if !registry.contains(&name) {
            return Err(format!("tool `{name}` is not in the registry"));
        }
        match (t.executed, t.acc) {
            (true, Some(a)) => {
                p_tool.insert(name, if bit(a, "acc")? { 1.0 } else { 0.0 });
            }
            (true, None) => return Err(format!("tool `{name}`: executed without acc")),
            (false, None) => {
                unexecuted.insert(name);
            }
            (false, Some(_)) => return Err(format!("tool `{name}`: acc present but executed=false")),
        }
    }
    Ok(TaskInstance {
        id: rec.id,
        category: rec.category,
        features,
        option_count: rec.options,
        outcome: OutcomeSpec {
            p_dir: if acc_dir { 1.0 } else { 0.0 },
            p_tool,
            unexecuted,
            deterministic: true,
            seed_salt: 0,
        },
    })
}

/// Parses trace text. Malformed lines are reported and skipped.
pub fn parse_traces(
    text: &str,
    dict: &FeatureDict,
    registry: &ToolRegistry,
    allow_empty: bool,
) -> Result<(Dataset, LoadReport), TraceError> {
    dict.validate()?;
    let mut report = LoadReport::default();
    let mut instances = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let res = serde_json::from_str::<TraceRecord>(line)
            .map_err(|e| e.to_string())
            .and_then(|rec| to_instance(rec, dict, registry))
            .and_then(|inst| {
                if ids.insert(inst.id.clone()) {
                    Ok(inst)
                } else {
                    Err(format!("duplicate id `{}`", inst.id))
                }
            });
        match res {
            Ok(inst) => instances.push(inst),
            Err(message) => report.errors.push(LineError { line: i + 1, message }),
        }
    }
    if instances.is_empty() && !(allow_empty && report.errors.is_empty()) {
        return Err(TraceError::NoValidRecords(report.errors));
    }
    report.loaded = instances.len();
    Ok((Dataset { feature_dim: dict.feature_dim, instances }, report))
}

pub fn load_traces(
    path: &Path,
    dict: &FeatureDict,
    registry: &ToolRegistry,
    allow_empty: bool,
) -> Result<(Dataset, LoadReport), TraceError> {
    parse_traces(&fs::read_to_string(path)?, dict, registry, allow_empty)
}

/// Canonical record of a deterministic instance: indices sorted, tools in
/// name order, realized bits.
pub fn to_record(inst: &TaskInstance) -> Result<TraceRecord, TraceError> {
    let o = &inst.outcome;
    if !o.deterministic {
        return Err(TraceError::NotDeterministic(inst.id.clone()));
    }
    let mut tools: BTreeMap<String, ToolTrace> = o
        .p_tool
        .keys()
        .map(|t| (t.clone(), ToolTrace { acc: o.realized_tool(&inst.id, t).map(u8::from), executed: true }))
        .collect();
    for t in &o.unexecuted {
        tools.insert(t.clone(), ToolTrace { acc: None, executed: false });
    }
    Ok(TraceRecord {
        id: inst.id.clone(),
        category: inst.category.clone(),
        features: inst.features.iter().map(|&i| FeatureRef::Index(i)).collect(),
        options: inst.option_count,
        acc_dir: u8::from(o.realized_dir(&inst.id)),
        tools,
    })
}

pub fn traces_text(dataset: &Dataset) -> Result<String, TraceError> {
    let mut out = String::new();
    for inst in &dataset.instances {
        out.push_str(&serde_json::to_string(&to_record(inst)?).expect("record serializes"));
        out.push('\n');
    }
    Ok(out)
}

pub fn save_traces(dataset: &Dataset, path: &Path) -> Result<(), TraceError> {
    fs::write(path, traces_text(dataset)?)?;
    Ok(())
}
