//! Routing strategies, metrics and comparisons over deterministic datasets.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::PolicyParams;
use crate::rng;
use crate::types::{ActionId, ActionKind, ActionSpace, Dataset, TaskInstance};
use crate::world::{oracle_action, WorldError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("evaluation requires deterministic outcomes")]
    RequiresDeterministicWorld,
    #[error("tool `{0}` is not in the action space")]
    UnknownTool(String),
    #[error("compare needs at least two strategies")]
    TooFewStrategies,
    #[error("learned policy action space differs from the evaluation action space")]
    ActionSpaceMismatch,
    #[error("invalid budgets: {0}")]
    InvalidBudgets(String),
    #[error("training failed: {0}")]
    Training(String),
}

impl From<WorldError> for EvalError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::RequiresDeterministicWorld => EvalError::RequiresDeterministicWorld,
            WorldError::UnknownTool(t) => EvalError::UnknownTool(t),
            other => EvalError::Training(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RouterStrategy {
    /// Uniform over Direct and the registered tools; decoys are never drawn.
    Random { seed: u64 },
    AlwaysDirect,
    AlwaysTool(String),
    /// Calls the tool whose keyword feature is active (first in list order),
    /// otherwise answers directly.
    KeywordHeuristic { keywords: Vec<(usize, String)> },
    Oracle,
    Learned(PolicyParams),
}

impl RouterStrategy {
    pub fn label(&self) -> String {
        match self {
            RouterStrategy::Random { .. } => "random".into(),
            RouterStrategy::AlwaysDirect => "always_direct".into(),
            RouterStrategy::AlwaysTool(t) => format!("always_tool:{t}"),
            RouterStrategy::KeywordHeuristic { .. } => "keyword_heuristic".into(),
            RouterStrategy::Oracle => "oracle".into(),
            RouterStrategy::Learned(_) => "learned".into(),
        }
    }
}

const EVAL_STREAM: u64 = 0x6576_616c;

pub fn route<R: Rng + ?Sized>(
    strategy: &RouterStrategy,
    instance: &TaskInstance,
    actions: &ActionSpace,
    rng: &mut R,
) -> Result<ActionId, EvalError> {
    Ok(match strategy {
        RouterStrategy::Random { .. } => {
            let valid: Vec<&ActionId> = actions.actions().iter().filter(|a| !a.is_decoy()).collect();
            valid[rng.gen_range(0..valid.len())].clone()
        }
        RouterStrategy::AlwaysDirect => ActionId::direct(),
        RouterStrategy::AlwaysTool(t) => {
            let a = ActionId::tool(t.as_str());
            if actions.index_of(&a).is_none() {
                return Err(EvalError::UnknownTool(t.clone()));
            }
            a
        }
        RouterStrategy::KeywordHeuristic { keywords } => keywords
            .iter()
            .find(|(f, _)| instance.features.binary_search(f).is_ok())
            .map(|(_, t)| ActionId::tool(t.as_str()))
            .unwrap_or_else(ActionId::direct),
        RouterStrategy::Oracle => oracle_action(instance, actions)?,
        RouterStrategy::Learned(p) => {
            if p.actions() != actions {
                return Err(EvalError::ActionSpaceMismatch);
            }
            p.greedy_action(instance)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub instances: usize,
    pub accuracy: f64,
    pub tool_rate: f64,
    /// Share of tool calls that turned a wrong direct answer into a right
    /// one; 1.0 when no tool was called.
    pub tool_precision: f64,
    /// Share of instances with a strictly beneficial tool on which the router
    /// called one; 1.0 when no instance has one.
    pub tool_recall: f64,
    /// Mean of `acc_chosen - acc_dir`.
    pub net_gain: f64,
    pub per_category: BTreeMap<String, f64>,
}

struct InstanceOutcome {
    category: String,
    acc_dir: bool,
    acc_chosen: bool,
    tool_called: bool,
    beneficial_call: bool,
    beneficial_exists: bool,
}

fn score(instance: &TaskInstance, action: &ActionId, actions: &ActionSpace) -> InstanceOutcome {
    let o = &instance.outcome;
    let id = &instance.id;
    let acc_dir = o.realized_dir(id);
    let beneficial = |t: &str| !acc_dir && o.realized_tool(id, t) == Some(true);
    let (acc_chosen, beneficial_call) = match action.kind() {
        ActionKind::Direct => (acc_dir, false),
        // a tool that fails to run leaves the reasoner on its own
        ActionKind::Tool => (o.realized_tool(id, action.name()).unwrap_or(acc_dir), beneficial(action.name())),
        ActionKind::Decoy => (false, false),
    };
    InstanceOutcome {
        category: instance.category.clone(),
        acc_dir,
        acc_chosen,
        tool_called: action.is_tool(),
        beneficial_call,
        beneficial_exists: actions.tools().any(|t| beneficial(t.name())),
    }
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(strategy: &RouterStrategy, dataset: &Dataset, actions: &ActionSpace) -> Result<Metrics, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if dataset.instances.iter().any(|i| !i.outcome.deterministic) {
        return Err(EvalError::RequiresDeterministicWorld);
    }
    let seed = match strategy {
        RouterStrategy::Random { seed } => *seed,
        _ => 0,
    };
    let outcomes = dataset
        .instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut r = rng::stream(seed, &[EVAL_STREAM, i as u64]);
            route(strategy, inst, actions, &mut r).map(|a| score(inst, &a, actions))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = outcomes.len();
    let correct = outcomes.iter().filter(|o| o.acc_chosen).count();
    let dir_correct = outcomes.iter().filter(|o| o.acc_dir).count();
    let calls = outcomes.iter().filter(|o| o.tool_called).count();
    let good_calls = outcomes.iter().filter(|o| o.tool_called && o.beneficial_call).count();
    let helpable = outcomes.iter().filter(|o| o.beneficial_exists).count();
    let helped = outcomes.iter().filter(|o| o.beneficial_exists && o.beneficial_call).count();

    let mut per_cat: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for o in &outcomes {
        let e = per_cat.entry(o.category.clone()).or_default();
        e.0 += o.acc_chosen as usize;
        e.1 += 1;
    }

    Ok(Metrics {
        instances: n,
        accuracy: correct as f64 / n as f64,
        tool_rate: calls as f64 / n as f64,
        tool_precision: ratio(good_calls, calls, 1.0),
        tool_recall: ratio(helped, helpable, 1.0),
        net_gain: (correct as f64 - dir_correct as f64) / n as f64,
        per_category: per_cat.into_iter().map(|(k, (c, t))| (k, c as f64 / t as f64)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub a: String,
    pub b: String,
    /// `accuracy(a) - accuracy(b)`
    pub accuracy_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub deltas: Vec<PairDelta>,
}

impl Comparison {
    /// Plain-text table, rows in input order.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24} {:>9} {:>9} {:>9} {:>9} {:>9}", "strategy", "accuracy", "tool_rate", "precision", "recall", "net_gain");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{:<24} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                r.strategy, m.accuracy, m.tool_rate, m.tool_precision, m.tool_recall, m.net_gain
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("strategy,accuracy,tool_rate,tool_precision,tool_recall,net_gain\n");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(s, "{},{},{},{},{},{}", r.strategy, m.accuracy, m.tool_rate, m.tool_precision, m.tool_recall, m.net_gain);
        }
        s
    }
}

pub fn compare(
    strategies: &[(String, RouterStrategy)],
    dataset: &Dataset,
    actions: &ActionSpace,
) -> Result<Comparison, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if strategies.len() < 2 {
        return Err(EvalError::TooFewStrategies);
    }
    let rows = strategies
        .iter()
        .map(|(label, s)| evaluate(s, dataset, actions).map(|metrics| ComparisonRow { strategy: label.clone(), metrics }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut deltas = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            deltas.push(PairDelta {
                a: rows[i].strategy.clone(),
                b: rows[j].strategy.clone(),
                accuracy_delta: rows[i].metrics.accuracy - rows[j].metrics.accuracy,
            });
        }
    }
    Ok(Comparison { rows, deltas })
}

/// Fraction of a dataset held out (the tail, by position) for evaluation.
pub const HOLDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: usize,
    pub accuracy: f64,
    pub tool_rate: f64,
    pub tool_precision: f64,
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("budget,accuracy,tool_rate,tool_precision\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", p.budget, p.accuracy, p.tool_rate, p.tool_precision);
    }
    s
}

/// Accuracy against training-set size. For each budget a fresh router is
/// trained on the first `budget` instances of the training split and scored
/// greedily on the held-out tail. Budget 0 scores `untrained`.
pub fn data_efficiency_curve<F>(
    train_fn: F,
    untrained: &PolicyParams,
    dataset: &Dataset,
    budgets: &[usize],
) -> Result<Vec<CurvePoint>, EvalError>
where
    F: Fn(&Dataset) -> Result<PolicyParams, String>,
{
    let (train_split, holdout) = dataset.split_holdout(HOLDOUT_FRACTION);
    if holdout.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::InvalidBudgets("budgets must be ascending".into()));
    }
    if let Some(b) = budgets.iter().find(|&&b| b > train_split.len()) {
        return Err(EvalError::InvalidBudgets(format!("budget {b} exceeds training split of {}", train_split.len())));
    }
    budgets
        .iter()
        .map(|&budget| {
            let params = if budget == 0 {
                untrained.clone()
            } else {
                train_fn(&train_split.prefix(budget)).map_err(EvalError::Training)?
            };
            let m = evaluate(&RouterStrategy::Learned(params), &holdout, untrained.actions())?;
            Ok(CurvePoint { budget, accuracy: m.accuracy, tool_rate: m.tool_rate, tool_precision: m.tool_precision })
        })
        .collect()
}
