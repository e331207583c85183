//! Command implementations behind the `audiorouter` binary.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 training or runtime
//! failure, 4 missing artifact (checkpoint, config, data file).
//!
//! Every flag can also be set through the environment with the
//! `AUDIOROUTER_` prefix (`AUDIOROUTER_SEED`, `AUDIOROUTER_WORKERS`,
//! `AUDIOROUTER_OUT`, `AUDIOROUTER_CONFIG`).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::eval::{self, Comparison, Metrics, RouterStrategy, HOLDOUT_FRACTION};
use crate::grpo::{self, GrpoConfig};
use crate::policy::PolicyParams;
use crate::reward::RewardConfig;
use crate::toolbus::{self, ToolRequest};
use crate::traces::{self, FeatureDict};
use crate::types::{ActionSpace, Dataset, ToolRegistry};
use crate::world::{self, SpecOracle, World, WorldSpec};

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        Self { code: 2, message: m.into() }
    }
    pub fn runtime(m: impl Into<String>) -> Self {
        Self { code: 3, message: m.into() }
    }
    pub fn missing(m: impl Into<String>) -> Self {
        Self { code: 4, message: m.into() }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "audiorouter", version, about = "Train and evaluate learned tool routers")]
pub struct Cli {
    /// Worker threads for rollouts and evaluation; outputs do not depend on it.
    #[arg(long, global = true, env = "AUDIOROUTER_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world from a spec file (or a named preset).
    WorldGen {
        /// World spec document.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// `separable` or `no_effect`, used when no spec file is given.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, env = "AUDIOROUTER_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "AUDIOROUTER_OUT")]
        out: PathBuf,
    },
    /// Warm-up plus GRPO training; writes checkpoint, log, metrics and run header.
    Train(RunArgs),
    /// Evaluate one routing strategy on the held-out split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate several strategies side by side.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Held-out accuracy as a function of training-set size (CSV).
    Curve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        budgets: Vec<usize>,
    },
    /// Export a world's realized outcome bits as a trace file.
    ExportTraces {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, env = "AUDIOROUTER_OUT")]
        out: PathBuf,
    },
    /// Invoke a tool (`tool <name> <audio>`) or parse a call (`tool parse <text>`).
    Tool {
        name: String,
        arg: String,
        /// Tool registry manifest; defaults to the built-in audio tool kit.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, env = "AUDIOROUTER_CONFIG")]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, env = "AUDIOROUTER_SEED")]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, env = "AUDIOROUTER_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RouterMode {
    #[default]
    Multimodal,
    TextOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    World(PathBuf),
    WorldSpec(WorldSpec),
    Traces { path: PathBuf, feature_dict: PathBuf, manifest: Option<PathBuf> },
}

fn default_temperature() -> f64 {
    1.0
}

/// Experiment configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default)]
    pub grpo: GrpoConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub router_mode: RouterMode,
    #[serde(default)]
    pub decoy_count: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::missing(format!("config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.data {
            DataSource::World(p) => fix(p),
            DataSource::Traces { path, feature_dict, manifest } => {
                fix(path);
                fix(feature_dict);
                if let Some(m) = manifest {
                    fix(m);
                }
            }
            DataSource::WorldSpec(_) => {}
        }
        if let Some(o) = &mut cfg.output_dir {
            fix(o);
        }
        Ok(cfg)
    }
}

/// Everything a command needs once the data source is resolved.
pub struct Experiment {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub registry: ToolRegistry,
    pub keywords: Vec<(usize, String)>,
    pub audio_features: Vec<usize>,
    pub actions: ActionSpace,
}

impl Experiment {
    pub fn from_config(mut config: RunConfig) -> CliResult<Self> {
        config.grpo.seed = config.seed;
        config.grpo.validate().map_err(|e| CliError::usage(e.to_string()))?;
        if !(config.temperature > 0.0 && config.temperature.is_finite()) {
            return Err(CliError::usage("temperature: must be positive"));
        }
        let (dataset, registry, keywords, audio_features) = match &config.data {
            DataSource::World(p) => {
                if !p.exists() {
                    return Err(CliError::missing(format!("world file {} not found", p.display())));
                }
                let w = World::load(p).map_err(|e| CliError::usage(e.to_string()))?;
                world_parts(w)
            }
            DataSource::WorldSpec(spec) => {
                let w = world::generate_world(spec).map_err(|e| CliError::usage(e.to_string()))?;
                world_parts(w)
            }
            DataSource::Traces { path, feature_dict, manifest } => {
                for p in [path, feature_dict] {
                    if !p.exists() {
                        return Err(CliError::missing(format!("{} not found", p.display())));
                    }
                }
                let registry = match manifest {
                    Some(m) => toolbus::load_manifest(m).map_err(|e| CliError::usage(e.to_string()))?,
                    None => ToolRegistry::audio_toolkit(),
                };
                let dict = FeatureDict::load(feature_dict).map_err(|e| CliError::usage(e.to_string()))?;
                let (dataset, report) =
                    traces::load_traces(path, &dict, &registry, false).map_err(|e| CliError::usage(e.to_string()))?;
                for e in &report.errors {
                    eprintln!("{}:{}: {}", path.display(), e.line, e.message);
                }
                let keywords = dict
                    .features
                    .iter()
                    .filter_map(|(name, &i)| {
                        let tool = name.strip_prefix("kw:")?;
                        registry.contains(tool).then(|| (i, tool.to_string()))
                    })
                    .collect();
                let audio = dict.audio_indices();
                (dataset, registry, keywords, audio)
            }
        };
        let actions = ActionSpace::new(&registry, config.decoy_count);
        Ok(Self { config, dataset, registry, keywords, audio_features, actions })
    }

    pub fn initial_params(&self) -> PolicyParams {
        let p = PolicyParams::zeros(self.dataset.feature_dim, self.actions.clone()).with_temperature(self.config.temperature);
        match self.config.router_mode {
            RouterMode::Multimodal => p,
            RouterMode::TextOnly => p.with_mask(self.audio_features.iter().copied()),
        }
    }

    pub fn splits(&self) -> (Dataset, Dataset) {
        self.dataset.split_holdout(HOLDOUT_FRACTION)
    }

    pub fn train_on(&self, data: &Dataset) -> CliResult<(PolicyParams, grpo::TrainingLog)> {
        grpo::train(data, &self.initial_params(), &self.config.grpo, &self.config.reward, &SpecOracle)
            .map_err(|e| CliError::runtime(e.to_string()))
    }

    pub fn strategy(&self, name: &str, checkpoint: Option<&Path>) -> CliResult<RouterStrategy> {
        Ok(match name {
            "random" => RouterStrategy::Random { seed: self.config.seed },
            "always_direct" => RouterStrategy::AlwaysDirect,
            "keyword_heuristic" => RouterStrategy::KeywordHeuristic { keywords: self.keywords.clone() },
            "oracle" => RouterStrategy::Oracle,
            "learned" => {
                let path = checkpoint.ok_or_else(|| CliError::missing("strategy `learned` needs --checkpoint"))?;
                if !path.exists() {
                    return Err(CliError::missing(format!("checkpoint {} not found", path.display())));
                }
                let p = PolicyParams::load(path).map_err(|e| CliError::usage(e.to_string()))?;
                if p.actions() != &self.actions || p.feature_dim() != self.dataset.feature_dim {
                    return Err(CliError::usage("checkpoint does not match the configured action space"));
                }
                RouterStrategy::Learned(p)
            }
            other => match other.strip_prefix("always_tool:") {
                Some(t) if self.registry.contains(t) => RouterStrategy::AlwaysTool(t.to_string()),
                Some(t) => return Err(CliError::usage(format!("unknown tool `{t}`"))),
                None => return Err(CliError::usage(format!("unknown strategy `{other}`"))),
            },
        })
    }
}

fn world_parts(w: World) -> (Dataset, ToolRegistry, Vec<(usize, String)>, Vec<usize>) {
    let registry = w.registry();
    let keywords = w.layout.keywords.iter().map(|(t, i)| (*i, t.clone())).collect();
    let audio = w.layout.audio_features();
    (w.dataset, registry, keywords, audio)
}

fn write(path: &Path, content: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        }
    }
    fs::write(path, content).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn load_run(args: &RunArgs) -> CliResult<(Experiment, PathBuf)> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((Experiment::from_config(cfg)?, out))
}

#[derive(Serialize)]
struct RunHeader<'a> {
    seed: u64,
    router_mode: RouterMode,
    masked_features: Vec<usize>,
    actions: Vec<String>,
    train_instances: usize,
    holdout_instances: usize,
    grpo: &'a GrpoConfig,
    reward: &'a RewardConfig,
}

pub fn cmd_world_gen(spec: Option<&Path>, preset: Option<&str>, seed: Option<u64>, out: &Path) -> CliResult<String> {
    let mut spec: WorldSpec = match (spec, preset) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::missing(format!("spec {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("spec {}: {e}", p.display())))?
        }
        (None, Some("separable")) => WorldSpec::separable(seed.unwrap_or(7)),
        (None, Some("no_effect")) => WorldSpec::no_effect(seed.unwrap_or(7)),
        (None, Some(other)) => return Err(CliError::usage(format!("unknown preset `{other}`"))),
        (None, None) => return Err(CliError::usage("world-gen needs --spec or --preset")),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let w = world::generate_world(&spec).map_err(|e| CliError::usage(e.to_string()))?;
    write(out, &w.to_text())?;
    let actions = ActionSpace::new(&w.registry(), 0);
    let oracle = eval::evaluate(&RouterStrategy::Oracle, &w.dataset, &actions);
    let direct = eval::evaluate(&RouterStrategy::AlwaysDirect, &w.dataset, &actions);
    let mut s = format!("instances: {}\n", w.dataset.len());
    if let (Ok(o), Ok(d)) = (oracle, direct) {
        s += &format!("oracle accuracy: {:.4}\nalways_direct accuracy: {:.4}\n", o.accuracy, d.accuracy);
    }
    Ok(s)
}

pub fn cmd_train(args: &RunArgs) -> CliResult<String> {
    let (exp, out) = load_run(args)?;
    let (train, holdout) = exp.splits();
    if train.is_empty() || holdout.is_empty() {
        return Err(CliError::usage("dataset too small for a train/held-out split"));
    }
    let (params, log) = exp.train_on(&train)?;
    let metrics = eval::evaluate(&RouterStrategy::Learned(params.clone()), &holdout, &exp.actions)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let header = RunHeader {
        seed: exp.config.seed,
        router_mode: exp.config.router_mode,
        masked_features: (0..params.feature_dim()).filter(|&i| params.feature_mask()[i]).collect(),
        actions: exp.actions.actions().iter().map(|a| a.token()).collect(),
        train_instances: train.len(),
        holdout_instances: holdout.len(),
        grpo: &exp.config.grpo,
        reward: &exp.config.reward,
    };
    write(&out.join("run.json"), &json(&header))?;
    write(&out.join("policy.json"), &params.checkpoint_text())?;
    write(&out.join("train_log.jsonl"), &log.to_jsonl())?;
    write(&out.join("metrics.json"), &json(&metrics))?;
    Ok(format!(
        "router_mode: {:?}\nheld-out accuracy: {:.4}\ntool_rate: {:.4}\nwrote {}\n",
        exp.config.router_mode,
        metrics.accuracy,
        metrics.tool_rate,
        out.display()
    ))
}

fn eval_label(name: &str) -> String {
    name.replace(':', "_")
}

pub fn cmd_eval(args: &RunArgs, strategy: &str, checkpoint: Option<&Path>) -> CliResult<String> {
    let (exp, out) = load_run(args)?;
    let s = exp.strategy(strategy, checkpoint)?;
    let (_, holdout) = exp.splits();
    let m: Metrics = eval::evaluate(&s, &holdout, &exp.actions).map_err(|e| CliError::runtime(e.to_string()))?;
    let text = json(&m);
    write(&out.join(format!("eval_{}.json", eval_label(strategy))), &text)?;
    Ok(text)
}

pub fn cmd_compare(args: &RunArgs, names: &[String], checkpoint: Option<&Path>) -> CliResult<String> {
    let (exp, out) = load_run(args)?;
    if names.len() < 2 {
        return Err(CliError::usage("compare needs at least two strategies"));
    }
    let strategies = names
        .iter()
        .map(|n| exp.strategy(n, checkpoint).map(|s| (n.clone(), s)))
        .collect::<CliResult<Vec<_>>>()?;
    let (_, holdout) = exp.splits();
    let c: Comparison = eval::compare(&strategies, &holdout, &exp.actions).map_err(|e| CliError::runtime(e.to_string()))?;
    write(&out.join("compare.json"), &json(&c))?;
    write(&out.join("compare.csv"), &c.to_csv())?;
    Ok(c.table())
}

pub fn cmd_curve(args: &RunArgs, budgets: &[usize]) -> CliResult<String> {
    let (exp, out) = load_run(args)?;
    let points = eval::data_efficiency_curve(
        |d| exp.train_on(d).map(|(p, _)| p).map_err(|e| e.message),
        &exp.initial_params(),
        &exp.dataset,
        budgets,
    )
    .map_err(|e| match e {
        eval::EvalError::InvalidBudgets(m) => CliError::usage(m),
        other => CliError::runtime(other.to_string()),
    })?;
    let csv = eval::curve_csv(&points);
    write(&out.join("curve.csv"), &csv)?;
    Ok(csv)
}

pub fn cmd_export_traces(world_path: &Path, out: &Path) -> CliResult<String> {
    if !world_path.exists() {
        return Err(CliError::missing(format!("world file {} not found", world_path.display())));
    }
    let w = World::load(world_path).map_err(|e| CliError::usage(e.to_string()))?;
    let text = traces::traces_text(&w.dataset).map_err(|e| CliError::usage(e.to_string()))?;
    write(out, &text)?;
    let mut dict = FeatureDict::new(w.dataset.feature_dim);
    for (c, i) in &w.layout.capabilities {
        dict.features.insert(format!("audio:cap:{c}"), *i);
        dict.audio.push(format!("audio:cap:{c}"));
    }
    for (t, i) in &w.layout.keywords {
        dict.features.insert(format!("kw:{t}"), *i);
    }
    for (c, i) in &w.layout.categories {
        dict.features.insert(format!("cat:{c}"), *i);
    }
    for (n, i) in w.layout.distractors.iter().enumerate() {
        dict.features.insert(format!("audio:distractor_{n}"), *i);
        dict.audio.push(format!("audio:distractor_{n}"));
    }
    let dict_path = out.with_extension("features.json");
    write(&dict_path, &(serde_json::to_string_pretty(&dict).expect("dict serializes") + "\n"))?;
    write(&out.with_extension("manifest.json"), &toolbus::manifest_text(&w.registry()))?;
    Ok(format!("exported {} records\n", w.dataset.len()))
}

pub fn cmd_tool(name: &str, arg: &str, manifest: Option<&Path>) -> CliResult<String> {
    let registry = match manifest {
        Some(m) => toolbus::load_manifest(m).map_err(|e| CliError::usage(e.to_string()))?,
        None => ToolRegistry::audio_toolkit(),
    };
    if name == "parse" {
        return toolbus::parse_tool_call(arg, &registry)
            .map(|a| format!("{a}\n"))
            .map_err(|e| CliError::usage(e.to_string()));
    }
    let res = toolbus::invoke(&registry, name, &ToolRequest::with_audio(arg)).map_err(|e| CliError::usage(e.to_string()))?;
    Ok(serde_json::to_string(&res).expect("envelope serializes") + "\n")
}

fn dispatch(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::WorldGen { spec, preset, seed, out } => cmd_world_gen(spec.as_deref(), preset.as_deref(), *seed, out),
        Command::Train(run) => cmd_train(run),
        Command::Eval { run, strategy, checkpoint } => cmd_eval(run, strategy, checkpoint.as_deref()),
        Command::Compare { run, strategies, checkpoint } => cmd_compare(run, strategies, checkpoint.as_deref()),
        Command::Curve { run, budgets } => cmd_curve(run, budgets),
        Command::ExportTraces { world, out } => cmd_export_traces(world, out),
        Command::Tool { name, arg, manifest } => cmd_tool(name, arg, manifest.as_deref()),
    }
}

/// Parses `args`, runs the command on a pool of `--workers` threads, prints
/// the result and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_requires_seed_and_one_source() {
        let no_seed = r#"{"data":{"world_spec":null}}"#;
        assert!(serde_json::from_str::<RunConfig>(no_seed).is_err());
        let two = r#"{"data":{"world":"a.json","traces":{"path":"t","feature_dict":"d"}},"seed":1}"#;
        assert!(serde_json::from_str::<RunConfig>(two).is_err());
        let ok = r#"{"data":{"world":"a.json"},"seed":1}"#;
        let cfg: RunConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(cfg.router_mode, RouterMode::Multimodal);
        assert_eq!(cfg.grpo, GrpoConfig::default());
    }

    #[test]
    fn strategy_names() {
        let cfg = RunConfig {
            data: DataSource::WorldSpec(WorldSpec { num_instances: 20, ..WorldSpec::separable(1) }),
            grpo: GrpoConfig::default(),
            reward: RewardConfig::default(),
            router_mode: RouterMode::TextOnly,
            decoy_count: 0,
            temperature: 1.0,
            output_dir: None,
            seed: 1,
        };
        let exp = Experiment::from_config(cfg).unwrap();
        for n in ["random", "always_direct", "keyword_heuristic", "oracle", "always_tool:transcribe"] {
            assert!(exp.strategy(n, None).is_ok(), "{n}");
        }
        assert_eq!(exp.strategy("bogus", None).unwrap_err().code, 2);
        assert_eq!(exp.strategy("always_tool:nosuch", None).unwrap_err().code, 2);
        assert_eq!(exp.strategy("learned", None).unwrap_err().code, 4);
        assert_eq!(exp.strategy("learned", Some(Path::new("/nonexistent/p.json"))).unwrap_err().code, 4);
        let masked = exp.initial_params();
        assert!(exp.audio_features.iter().all(|&i| masked.feature_mask()[i]));
    }
}
