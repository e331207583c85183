//! Synthetic task populations with a frozen correctness oracle.
//!
//! Every instance needs one latent capability. Tools that provide it raise
//! the reasoner's chance of answering correctly by `tool_gain`; every other
//! tool lowers it by `tool_harm`. Two generator knobs reproduce the classic
//! routing failure modes:
//!
//! - *keyword bias*: the instance's surface keyword names a tool that does
//!   not provide the needed capability;
//! - *boundary hallucination*: a tool that sounds right for the request but
//!   lacks the capability is made tempting (its keyword is present) while it
//!   still lowers correctness.
//!
//! In both cases only the audio-derived capability indicator tells the
//! helpful tool apart. Feature indices are laid out in disjoint groups (see
//! [`FeatureLayout`]): capability indicators, one keyword indicator per tool,
//! category indicators, then distractors that carry no signal.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, StreamRng};
use crate::types::{ActionId, ActionKind, ActionSpace, Dataset, OutcomeSpec, TaskInstance, ToolRegistry, ToolSpec};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("decoy action `{0}` has no outcome")]
    DecoyAction(String),
    #[error("operation requires a deterministic world")]
    RequiresDeterministicWorld,
    #[error("world file io: {0}")]
    Io(#[from] std::io::Error),
    #[error("world file parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("corrupt world file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryWeight {
    pub tag: String,
    pub weight: f64,
}

fn default_true() -> bool {
    true
}

fn default_distractor_rate() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub feature_dim: usize,
    pub tools: Vec<ToolSpec>,
    pub num_instances: usize,
    pub categories: Vec<CategoryWeight>,
    /// `[lo, hi]` range of the direct-answer correctness probability.
    pub base_p_dir: [f64; 2],
    pub tool_gain: f64,
    pub tool_harm: f64,
    pub keyword_bias_rate: f64,
    pub boundary_hallucination_rate: f64,
    /// Activation probability of each distractor feature.
    #[serde(default = "default_distractor_rate")]
    pub distractor_rate: f64,
    #[serde(default = "default_true")]
    pub deterministic: bool,
    pub seed: u64,
}

impl WorldSpec {
    /// Three single-capability tools over four categories. With the defaults
    /// below this is the separable world used throughout the test suite.
    pub fn separable(seed: u64) -> Self {
        Self {
            feature_dim: 16,
            tools: vec![
                ToolSpec::simulated("audio_features", &["tempo"]),
                ToolSpec::simulated("sound_classification", &["sound_event"]),
                ToolSpec::simulated("transcribe", &["speech"]),
            ],
            num_instances: 2000,
            categories: ["sound", "music", "speech", "mixed"]
                .iter()
                .map(|t| CategoryWeight { tag: t.to_string(), weight: 1.0 })
                .collect(),
            base_p_dir: [0.3, 0.5],
            tool_gain: 0.45,
            tool_harm: 0.2,
            keyword_bias_rate: 0.3,
            boundary_hallucination_rate: 0.2,
            distractor_rate: default_distractor_rate(),
            deterministic: true,
            seed,
        }
    }

    /// Tools never change correctness. The direct path is right more often
    /// than not, the regime where the redundancy penalty makes answering
    /// directly the better expected route.
    pub fn no_effect(seed: u64) -> Self {
        Self {
            num_instances: 1000,
            base_p_dir: [0.55, 0.85],
            tool_gain: 0.0,
            tool_harm: 0.0,
            ..Self::separable(seed)
        }
    }

    pub fn registry(&self) -> Result<ToolRegistry, WorldError> {
        ToolRegistry::from_specs(self.tools.iter().cloned()).map_err(|e| WorldError::InvalidSpec(format!("tools: {e}")))
    }

    /// Capability tags in first-seen order across the tool list.
    pub fn capabilities(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in &self.tools {
            for c in &t.capabilities {
                if seen.insert(c.clone()) {
                    out.push(c.clone());
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidSpec(m));
        let unit = |name: &str, v: f64| -> Result<(), WorldError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(WorldError::InvalidSpec(format!("{name}: {v} outside [0,1]")))
            }
        };
        unit("base_p_dir[0]", self.base_p_dir[0])?;
        unit("base_p_dir[1]", self.base_p_dir[1])?;
        if self.base_p_dir[0] > self.base_p_dir[1] {
            return bad("base_p_dir: lo > hi".into());
        }
        unit("tool_gain", self.tool_gain)?;
        unit("tool_harm", self.tool_harm)?;
        unit("keyword_bias_rate", self.keyword_bias_rate)?;
        unit("boundary_hallucination_rate", self.boundary_hallucination_rate)?;
        unit("distractor_rate", self.distractor_rate)?;
        if self.tools.is_empty() {
            return bad("tools: at least one tool required".into());
        }
        self.registry()?;
        for (i, t) in self.tools.iter().enumerate() {
            if t.capabilities.is_empty() {
                return bad(format!("tools[{i}].capabilities: empty"));
            }
        }
        if self.categories.is_empty() {
            return bad("categories: at least one category required".into());
        }
        for (i, c) in self.categories.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return bad(format!("categories[{i}].weight: {} must be finite and >= 0", c.weight));
            }
        }
        if self.categories.iter().map(|c| c.weight).sum::<f64>() <= 0.0 {
            return bad("categories: weights sum to zero".into());
        }
        let needed = self.capabilities().len() + self.tools.len() + self.categories.len();
        if self.feature_dim < needed {
            return bad(format!("feature_dim: {} < {needed} required indicator features", self.feature_dim));
        }
        if !self.has_non_matching_tool() {
            if self.keyword_bias_rate > 0.0 {
                return bad("keyword_bias_rate: every tool covers every capability, no misleading keyword exists".into());
            }
            if self.boundary_hallucination_rate > 0.0 {
                return bad("boundary_hallucination_rate: every tool covers every capability, no tempting tool exists".into());
            }
        }
        Ok(())
    }

    fn has_non_matching_tool(&self) -> bool {
        self.capabilities()
            .iter()
            .any(|c| self.tools.iter().any(|t| !t.capabilities.contains(c)))
    }
}

/// Index assignment of every feature group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub capabilities: Vec<(String, usize)>,
    /// Tool name and its keyword feature.
    pub keywords: Vec<(String, usize)>,
    pub categories: Vec<(String, usize)>,
    pub distractors: Vec<usize>,
}

impl FeatureLayout {
    fn new(spec: &WorldSpec) -> Self {
        let mut next = 0usize;
        let mut take = || {
            next += 1;
            next - 1
        };
        let capabilities = spec.capabilities().into_iter().map(|c| (c, take())).collect();
        let keywords = spec.tools.iter().map(|t| (t.name.clone(), take())).collect();
        let categories = spec.categories.iter().map(|c| (c.tag.clone(), take())).collect();
        let distractors = (next..spec.feature_dim).collect();
        Self { capabilities, keywords, categories, distractors }
    }

    /// Features derived from audio rather than question text; masked for a
    /// text-only router.
    pub fn audio_features(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.capabilities.iter().map(|(_, i)| *i).collect();
        v.extend(&self.distractors);
        v.sort_unstable();
        v
    }

    pub fn keyword_of(&self, tool: &str) -> Option<usize> {
        self.keywords.iter().find(|(t, _)| t == tool).map(|(_, i)| *i)
    }
}

/// Generator-side facts about one instance, kept for analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub capability: String,
    pub keyword_biased: bool,
    pub boundary: bool,
    /// Tool whose keyword the instance carries.
    pub keyword_tool: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub spec: WorldSpec,
    pub layout: FeatureLayout,
    pub annotations: Vec<Annotation>,
    pub dataset: Dataset,
}

fn uniform_in(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn pick<'a, T>(rng: &mut StreamRng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

pub fn generate_world(spec: &WorldSpec) -> Result<World, WorldError> {
    spec.validate()?;
    let layout = FeatureLayout::new(spec);
    let total_weight: f64 = spec.categories.iter().map(|c| c.weight).sum();
    let mut instances = Vec::with_capacity(spec.num_instances);
    let mut annotations = Vec::with_capacity(spec.num_instances);

    for i in 0..spec.num_instances {
        let mut r = rng::stream(spec.seed, &[0x5151, i as u64]);

        let mut x = r.gen::<f64>() * total_weight;
        let mut cat = spec.categories.len() - 1;
        for (ci, c) in spec.categories.iter().enumerate() {
            if x < c.weight {
                cat = ci;
                break;
            }
            x -= c.weight;
        }

        let (cap_name, cap_idx) = pick(&mut r, &layout.capabilities).clone();
        let p_dir = uniform_in(&mut r, spec.base_p_dir[0], spec.base_p_dir[1]);
        let boundary = r.gen::<f64>() < spec.boundary_hallucination_rate;
        let biased = r.gen::<f64>() < spec.keyword_bias_rate;

        let matching: Vec<&ToolSpec> = spec.tools.iter().filter(|t| t.capabilities.contains(&cap_name)).collect();
        let others: Vec<&ToolSpec> = spec.tools.iter().filter(|t| !t.capabilities.contains(&cap_name)).collect();

        let own = pick(&mut r, &matching).name.clone();
        let keyword_tool = if (boundary || biased) && !others.is_empty() {
            pick(&mut r, &others).name.clone()
        } else {
            own.clone()
        };

        let p_tool: BTreeMap<String, f64> = spec
            .tools
            .iter()
            .map(|t| {
                let helps = t.capabilities.contains(&cap_name);
                let p = if helps {
                    (p_dir + spec.tool_gain).min(1.0)
                } else {
                    (p_dir - spec.tool_harm).max(0.0)
                };
                (t.name.clone(), p)
            })
            .collect();

        let mut features = vec![cap_idx, layout.categories[cat].1];
        features.push(layout.keyword_of(&keyword_tool).expect("keyword for registered tool"));
        for &d in &layout.distractors {
            if r.gen::<f64>() < spec.distractor_rate {
                features.push(d);
            }
        }
        features.sort_unstable();
        features.dedup();

        instances.push(TaskInstance {
            id: format!("w{:06}", i),
            category: spec.categories[cat].tag.clone(),
            features,
            option_count: r.gen_range(2..=4),
            outcome: OutcomeSpec {
                p_dir,
                p_tool,
                unexecuted: BTreeSet::new(),
                deterministic: spec.deterministic,
                seed_salt: spec.seed,
            },
        });
        annotations.push(Annotation {
            capability: cap_name,
            keyword_biased: biased && keyword_tool != own,
            boundary: boundary && keyword_tool != own,
            keyword_tool,
        });
    }

    let dataset = Dataset::new(spec.feature_dim, instances).map_err(|e| WorldError::InvalidSpec(e.to_string()))?;
    Ok(World { spec: spec.clone(), layout, annotations, dataset })
}

/// Correctness bits for one decision: `(acc_dir, acc_tool)`.
pub type Outcome = (bool, Option<bool>);

/// Source of correctness bits for the frozen reasoner. Implementations take
/// `&self`, so nothing a router does can change what the reasoner answers.
pub trait OutcomeOracle: Sync {
    fn outcome(&self, instance: &TaskInstance, action: &ActionId, rng: &mut StreamRng) -> Result<Outcome, WorldError>;
}

/// Reads outcomes from each instance's own [`OutcomeSpec`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SpecOracle;

impl OutcomeOracle for SpecOracle {
    fn outcome(&self, instance: &TaskInstance, action: &ActionId, rng: &mut StreamRng) -> Result<Outcome, WorldError> {
        sample_outcome(instance, action, rng)
    }
}

pub fn sample_outcome(instance: &TaskInstance, action: &ActionId, rng: &mut StreamRng) -> Result<Outcome, WorldError> {
    let o = &instance.outcome;
    if action.is_decoy() {
        return Err(WorldError::DecoyAction(action.name().to_string()));
    }
    if action.is_tool() && !o.p_tool.contains_key(action.name()) && !o.unexecuted.contains(action.name()) {
        return Err(WorldError::UnknownTool(action.name().to_string()));
    }
    if o.deterministic {
        let dir = o.realized_dir(&instance.id);
        let tool = if action.is_tool() { o.realized_tool(&instance.id, action.name()) } else { None };
        return Ok((dir, tool));
    }
    let dir = rng.gen::<f64>() < o.p_dir;
    let tool = match action.kind() {
        ActionKind::Tool if !o.unexecuted.contains(action.name()) => Some(rng.gen::<f64>() < o.p_tool[action.name()]),
        _ => None,
    };
    Ok((dir, tool))
}

/// The correctness-maximizing route using realized bits: Direct when it is
/// right, else the lowest-index tool that is right, else Direct.
pub fn oracle_action(instance: &TaskInstance, actions: &ActionSpace) -> Result<ActionId, WorldError> {
    let o = &instance.outcome;
    if !o.deterministic {
        return Err(WorldError::RequiresDeterministicWorld);
    }
    if o.realized_dir(&instance.id) {
        return Ok(ActionId::direct());
    }
    Ok(actions
        .tools()
        .find(|t| o.realized_tool(&instance.id, t.name()) == Some(true))
        .cloned()
        .unwrap_or_else(ActionId::direct))
}

pub const WORLD_FORMAT: &str = "audiorouter-world";
pub const WORLD_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct WorldFile {
    format: String,
    version: u32,
    spec: WorldSpec,
    layout: FeatureLayout,
    instances: Vec<WorldRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WorldRecord {
    #[serde(flatten)]
    instance: TaskInstance,
    annotation: Annotation,
    bits: Option<RealizedBits>,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct RealizedBits {
    direct: bool,
    tools: BTreeMap<String, Option<bool>>,
}

fn realized(inst: &TaskInstance) -> Option<RealizedBits> {
    let o = &inst.outcome;
    o.deterministic.then(|| RealizedBits {
        direct: o.realized_dir(&inst.id),
        tools: o.p_tool.keys().map(|t| (t.clone(), o.realized_tool(&inst.id, t))).collect(),
    })
}

impl World {
    pub fn registry(&self) -> ToolRegistry {
        self.spec.registry().expect("validated at generation")
    }

    pub fn to_text(&self) -> String {
        let file = WorldFile {
            format: WORLD_FORMAT.into(),
            version: WORLD_VERSION,
            spec: self.spec.clone(),
            layout: self.layout.clone(),
            instances: self
                .dataset
                .instances
                .iter()
                .zip(&self.annotations)
                .map(|(i, a)| WorldRecord { instance: i.clone(), annotation: a.clone(), bits: realized(i) })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("world serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, WorldError> {
        let file: WorldFile = serde_json::from_str(text)?;
        if file.format != WORLD_FORMAT || file.version != WORLD_VERSION {
            return Err(WorldError::Corrupt(format!("unsupported format {} v{}", file.format, file.version)));
        }
        file.spec.validate()?;
        let mut instances = Vec::with_capacity(file.instances.len());
        let mut annotations = Vec::with_capacity(file.instances.len());
        for rec in file.instances {
            if rec.bits != realized(&rec.instance) {
                return Err(WorldError::Corrupt(format!("instance {}: stored bits disagree with outcome spec", rec.instance.id)));
            }
            instances.push(rec.instance);
            annotations.push(rec.annotation);
        }
        let dataset = Dataset::new(file.spec.feature_dim, instances).map_err(|e| WorldError::Corrupt(e.to_string()))?;
        Ok(World { spec: file.spec, layout: file.layout, annotations, dataset })
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
