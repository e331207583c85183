//! Domain types shared by every module: actions, tools, tasks, rollouts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::toolbus::ResultMap;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("tool `{0}` is already registered")]
    DuplicateName(String),
    #[error("invalid tool name `{0}`: expected [a-z][a-z0-9_]*")]
    InvalidName(String),
    #[error("invalid action token `{0}`")]
    InvalidActionToken(String),
    #[error("instance `{id}`: {reason}")]
    InvalidInstance { id: String, reason: String },
}

/// Returns true when `name` matches `[a-z][a-z0-9_]*`.
pub fn is_valid_token(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Direct,
    Tool,
    Decoy,
}

/// One routing choice: answer directly, call a registered tool, or emit a
/// well-formed call to a tool that does not exist.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId {
    kind: ActionKind,
    name: String,
}

impl ActionId {
    pub fn direct() -> Self {
        Self { kind: ActionKind::Direct, name: String::new() }
    }

    pub fn tool(name: impl Into<String>) -> Self {
        Self { kind: ActionKind::Tool, name: name.into() }
    }

    pub fn decoy(name: impl Into<String>) -> Self {
        Self { kind: ActionKind::Decoy, name: name.into() }
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    /// Empty for `Direct`.
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_direct(&self) -> bool {
        self.kind == ActionKind::Direct
    }

    pub fn is_tool(&self) -> bool {
        self.kind == ActionKind::Tool
    }

    pub fn is_decoy(&self) -> bool {
        self.kind == ActionKind::Decoy
    }

    /// Stable token used in checkpoints: `direct`, `tool:<name>`, `decoy:<name>`.
    pub fn token(&self) -> String {
        match self.kind {
            ActionKind::Direct => "direct".to_string(),
            ActionKind::Tool => format!("tool:{}", self.name),
            ActionKind::Decoy => format!("decoy:{}", self.name),
        }
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActionKind::Direct => write!(f, "Direct"),
            ActionKind::Tool => write!(f, "Tool({})", self.name),
            ActionKind::Decoy => write!(f, "Decoy({})", self.name),
        }
    }
}

impl FromStr for ActionId {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "direct" {
            return Ok(Self::direct());
        }
        let bad = || TypeError::InvalidActionToken(s.to_string());
        let (kind, name) = s.split_once(':').ok_or_else(bad)?;
        if !is_valid_token(name) {
            return Err(bad());
        }
        match kind {
            "tool" => Ok(Self::tool(name)),
            "decoy" => Ok(Self::decoy(name)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for ActionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.token())
    }
}

impl<'de> Deserialize<'de> for ActionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How a registered tool is executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Adapter {
    /// Returns a scripted result keyed by `params.instance_id`; the key `*`
    /// is the fallback.
    Simulated {
        #[serde(default)]
        scripted: BTreeMap<String, ResultMap>,
    },
    /// Runs one of the native signal-processing tools in [`crate::dsp`].
    NativeDsp,
    /// Spawns `command` and speaks the line protocol in [`crate::toolbus`].
    Subprocess { command: Vec<String>, timeout_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    #[serde(default)]
    pub capabilities: BTreeSet<String>,
    #[serde(default)]
    pub description: String,
    pub adapter: Adapter,
}

impl ToolSpec {
    pub fn simulated(name: &str, capabilities: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            capabilities: capabilities.iter().map(|c| c.to_string()).collect(),
            description: String::new(),
            adapter: Adapter::Simulated { scripted: BTreeMap::new() },
        }
    }

    pub fn with_description(mut self, description: &str) -> Self {
        self.description = description.to_string();
        self
    }

    pub fn with_adapter(mut self, adapter: Adapter) -> Self {
        self.adapter = adapter;
        self
    }
}

/// Registered tools in insertion order. The position of a tool fixes its
/// action index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolRegistry {
    tools: Vec<ToolSpec>,
    index: HashMap<String, usize>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), TypeError> {
        if !is_valid_token(&spec.name) {
            return Err(TypeError::InvalidName(spec.name));
        }
        if self.index.contains_key(&spec.name) {
            return Err(TypeError::DuplicateName(spec.name));
        }
        self.index.insert(spec.name.clone(), self.tools.len());
        self.tools.push(spec);
        Ok(())
    }

    pub fn from_specs(specs: impl IntoIterator<Item = ToolSpec>) -> Result<Self, TypeError> {
        let mut reg = Self::new();
        for s in specs {
            reg.register(s)?;
        }
        Ok(reg)
    }

    pub fn lookup(&self, name: &str) -> Option<&ToolSpec> {
        self.index.get(name).map(|&i| &self.tools[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.iter().map(|t| t.name.as_str())
    }

    /// The six tool modules of the reference audio tool kit. Signal-level
    /// analyses run natively; the neural tools are simulated placeholders
    /// until a subprocess command is configured for them.
    pub fn audio_toolkit() -> Self {
        let specs = [
            ToolSpec::simulated("transcribe", &["speech"])
                .with_description("speech recognition (Whisper-class model via subprocess)"),
            ToolSpec::simulated("sound_classification", &["sound_event"])
                .with_description("sound event classification (AST-class model via subprocess)"),
            ToolSpec::simulated("duration_analysis", &["duration"])
                .with_description("sliding-window sound duration analysis")
                .with_adapter(Adapter::NativeDsp),
            ToolSpec::simulated("temporal_analysis", &["temporal"])
                .with_description("sliding-window sound temporal analysis")
                .with_adapter(Adapter::NativeDsp),
            ToolSpec::simulated("chord_recognition", &["harmony"])
                .with_description("chord recognition (via subprocess)"),
            ToolSpec::simulated("audio_features", &["tempo", "pitch", "timbre"])
                .with_description("tempo, pitch and spectral-centroid extraction")
                .with_adapter(Adapter::NativeDsp),
        ];
        Self::from_specs(specs).expect("toolkit names are valid and unique")
    }
}

/// Ordered action list `[Direct, tools..., decoys...]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    actions: Vec<ActionId>,
    index: HashMap<ActionId, usize>,
}

impl ActionSpace {
    /// Builds the action space for `registry` with `decoy_count` unregistered
    /// names `decoy_0, decoy_1, ...` (skipping any name a tool already uses).
    pub fn new(registry: &ToolRegistry, decoy_count: usize) -> Self {
        let mut actions = vec![ActionId::direct()];
        actions.extend(registry.names().map(ActionId::tool));
        let mut n = 0;
        let mut added = 0;
        while added < decoy_count {
            let name = format!("decoy_{n}");
            n += 1;
            if registry.contains(&name) {
                continue;
            }
            actions.push(ActionId::decoy(name));
            added += 1;
        }
        Self::from_actions(actions).expect("constructed action list is well-formed")
    }

    /// Rebuilds an action space from an explicit ordering (checkpoints).
    pub fn from_actions(actions: Vec<ActionId>) -> Result<Self, TypeError> {
        if actions.first() != Some(&ActionId::direct()) {
            return Err(TypeError::InvalidActionToken("action list must start with direct".into()));
        }
        let mut index = HashMap::new();
        for (i, a) in actions.iter().enumerate() {
            if index.insert(a.clone(), i).is_some() {
                return Err(TypeError::InvalidActionToken(a.token()));
            }
        }
        Ok(Self { actions, index })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> &ActionId {
        &self.actions[i]
    }

    pub fn index_of(&self, a: &ActionId) -> Option<usize> {
        self.index.get(a).copied()
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.actions
    }

    pub fn tools(&self) -> impl Iterator<Item = &ActionId> {
        self.actions.iter().filter(|a| a.is_tool())
    }

    pub fn decoy_count(&self) -> usize {
        self.actions.iter().filter(|a| a.is_decoy()).count()
    }
}

/// Correctness specification of one instance under every action.
///
/// In deterministic mode all actions share one uniform draw `u` derived from
/// `(instance id, seed_salt)`, and an action is correct iff `u < p`. Outcomes
/// are therefore monotone in `p`: common random bits for the direct and tool
/// paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub p_dir: f64,
    pub p_tool: BTreeMap<String, f64>,
    /// Registered tools that fail to execute on this instance.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub unexecuted: BTreeSet<String>,
    pub deterministic: bool,
    pub seed_salt: u64,
}

impl OutcomeSpec {
    /// The shared uniform draw of a deterministic instance.
    pub fn common_draw(&self, instance_id: &str) -> f64 {
        rng::unit_interval(rng::mix(self.seed_salt, &[rng::fnv1a(instance_id.as_bytes())]))
    }

    /// Realized direct correctness in deterministic mode.
    pub fn realized_dir(&self, instance_id: &str) -> bool {
        self.common_draw(instance_id) < self.p_dir
    }

    /// Realized tool correctness in deterministic mode; `None` when the tool
    /// does not execute or is unknown to this instance.
    pub fn realized_tool(&self, instance_id: &str, tool: &str) -> Option<bool> {
        if self.unexecuted.contains(tool) {
            return None;
        }
        self.p_tool.get(tool).map(|&p| self.common_draw(instance_id) < p)
    }

    fn check(&self) -> Result<(), String> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.p_dir) {
            return Err(format!("p_dir {} outside [0,1]", self.p_dir));
        }
        if let Some((t, p)) = self.p_tool.iter().find(|(_, &p)| !ok(p)) {
            return Err(format!("p_tool[{t}] {p} outside [0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub category: String,
    /// Sorted, deduplicated indices of the active binary features.
    pub features: Vec<usize>,
    pub option_count: u32,
    pub outcome: OutcomeSpec,
}

impl TaskInstance {
    pub fn validate(&self, feature_dim: usize) -> Result<(), TypeError> {
        let bad = |reason: String| TypeError::InvalidInstance { id: self.id.clone(), reason };
        if self.option_count < 2 {
            return Err(bad(format!("option_count {} < 2", self.option_count)));
        }
        if let Some(&f) = self.features.iter().find(|&&f| f >= feature_dim) {
            return Err(bad(format!("feature index {f} >= feature dim {feature_dim}")));
        }
        if self.features.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("features must be sorted and unique".into()));
        }
        self.outcome.check().map_err(bad)
    }
}

/// A set of instances over a common feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_dim: usize,
    pub instances: Vec<TaskInstance>,
}

impl Dataset {
    pub fn new(feature_dim: usize, instances: Vec<TaskInstance>) -> Result<Self, TypeError> {
        for inst in &instances {
            inst.validate(feature_dim)?;
        }
        Ok(Self { feature_dim, instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Splits off the last `fraction` of instances (by position) as held-out.
    pub fn split_holdout(&self, fraction: f64) -> (Dataset, Dataset) {
        let n = self.instances.len();
        let held = ((n as f64) * fraction).round() as usize;
        let cut = n - held.min(n);
        (
            Dataset { feature_dim: self.feature_dim, instances: self.instances[..cut].to_vec() },
            Dataset { feature_dim: self.feature_dim, instances: self.instances[cut..].to_vec() },
        )
    }

    pub fn prefix(&self, n: usize) -> Dataset {
        Dataset {
            feature_dim: self.feature_dim,
            instances: self.instances[..n.min(self.instances.len())].to_vec(),
        }
    }
}

/// One sampled routing decision and its scored outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub instance_id: String,
    pub action: ActionId,
    /// `None` when the outcome was not consulted (format-reward warm-up).
    pub acc_dir: Option<bool>,
    /// Present iff the action is a tool that executed.
    pub acc_tool: Option<bool>,
    pub reward: f64,
    pub behavior_logprob: f64,
}

impl Rollout {
    /// Recomputes the reward from the stored outcome fields.
    pub fn recompute_reward(&self, cfg: &crate::reward::RewardConfig) -> f64 {
        match self.acc_dir {
            None => crate::reward::format_reward(cfg, &self.action),
            Some(d) => crate::reward::relative_outcome_reward(cfg, &self.action, d, self.acc_tool),
        }
    }
}
