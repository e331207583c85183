//! Group-relative policy optimization for single-step routing decisions.
//!
//! For each instance the current policy samples a group of `G` actions. Each
//! action is scored, rewards are normalized within the group, and the policy
//! ascends the clipped surrogate
//!
//! ```text
//! J = 1/G * sum_i min(rho_i * A_i, clip(rho_i, 1 - eps, 1 + eps) * A_i) - beta * KL(pi || pi_ref)
//! ```
//!
//! with `rho_i = pi(a_i) / pi_behavior(a_i)`. The KL term is computed exactly
//! over the discrete action set, and the gradient is analytic for the
//! linear-softmax policy.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::PolicyParams;
use crate::reward::{format_reward, relative_outcome_reward, RewardConfig};
use crate::rng;
use crate::types::{Dataset, Rollout, TaskInstance};
use crate::world::{OutcomeOracle, WorldError};

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("invalid grpo config: {0}")]
    InvalidConfig(String),
    #[error("no batches to update on")]
    EmptyBatch,
    #[error("non-finite gradient entry at row {row}, action {action}")]
    NonFiniteGradient { row: usize, action: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("outcome oracle failed: {0}")]
    Oracle(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub std_guard: f64,
    /// Groups averaged into one update during the main stage.
    pub batch_groups: usize,
    pub warmup_steps: usize,
    pub warmup_learning_rate: f64,
    /// Groups per warm-up step.
    pub warmup_batch: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_eps: 0.2,
            kl_beta: 0.01,
            learning_rate: 0.05,
            epochs: 1,
            std_guard: 1e-8,
            batch_groups: 1,
            warmup_steps: 50,
            warmup_learning_rate: 1.5,
            warmup_batch: 8,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    /// Step size used for language-model-scale routers (LoRA fine-tuning);
    /// far too small for the linear scorer.
    pub const LM_SCALE_LEARNING_RATE: f64 = 5e-5;

    pub fn lm_scale() -> Self {
        Self { learning_rate: Self::LM_SCALE_LEARNING_RATE, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: &str| Err(GrpoError::InvalidConfig(m.to_string()));
        if self.group_size < 2 {
            return bad("group_size must be >= 2");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return bad("kl_beta must be >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.warmup_learning_rate > 0.0 && self.warmup_learning_rate.is_finite()) {
            return bad("warmup_learning_rate must be > 0");
        }
        if !(self.std_guard > 0.0) {
            return bad("std_guard must be > 0");
        }
        if self.batch_groups == 0 || self.warmup_batch == 0 {
            return bad("batch_groups and warmup_batch must be >= 1");
        }
        Ok(())
    }
}

/// Group-normalized advantages `(r - mean) / std` using the sample standard
/// deviation. Groups whose std falls below `std_guard` get all zeros.
pub fn compute_advantages(rewards: &[f64], std_guard: f64) -> Vec<f64> {
    let n = rewards.len();
    if n < 2 {
        return vec![0.0; n];
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        // let the gradient check report it instead of silently zeroing the group
        return vec![f64::NAN; n];
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    if !(std >= std_guard) {
        return vec![0.0; n];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

fn kl_of(p: &[f64], logp: &[f64], logr: &[f64]) -> f64 {
    p.iter()
        .zip(logp.iter().zip(logr))
        .map(|(&pi, (&lp, &lr))| if pi > 0.0 { pi * (lp - lr) } else { 0.0 })
        .sum::<f64>()
        .max(0.0)
}

/// `KL(pi || pi_ref)` over the full action set for one instance.
pub fn exact_kl(params: &PolicyParams, reference: &PolicyParams, instance: &TaskInstance) -> f64 {
    let logp = params.log_probs(instance);
    let logr = reference.log_probs(instance);
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    kl_of(&p, &logp, &logr)
}

/// `G` rollouts of one instance under one behavior snapshot.
#[derive(Debug, Clone)]
pub struct GroupBatch<'a> {
    pub instance: &'a TaskInstance,
    pub rollouts: Vec<Rollout>,
}

impl GroupBatch<'_> {
    fn action_indices(&self, params: &PolicyParams) -> Vec<usize> {
        self.rollouts
            .iter()
            .map(|r| params.actions().index_of(&r.action).expect("rollout action belongs to the policy's action space"))
            .collect()
    }
}

/// Surrogate value and its gradient with respect to the logits.
fn surrogate_and_logit_grad(
    group: &GroupBatch<'_>,
    params: &PolicyParams,
    reference: &PolicyParams,
    cfg: &GrpoConfig,
) -> (f64, Vec<f64>) {
    let logp = params.log_probs(group.instance);
    let logr = reference.log_probs(group.instance);
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let rewards: Vec<f64> = group.rollouts.iter().map(|r| r.reward).collect();
    let adv = compute_advantages(&rewards, cfg.std_guard);
    let g = group.rollouts.len() as f64;
    let idx = group.action_indices(params);

    let mut value = 0.0;
    let mut grad = vec![0.0; p.len()];
    for ((&a, r), &adv_i) in idx.iter().zip(&group.rollouts).zip(&adv) {
        let rho = (logp[a] - r.behavior_logprob).exp();
        if !adv_i.is_finite() {
            grad.iter_mut().for_each(|x| *x = f64::NAN);
            continue;
        }
        let unclipped = rho * adv_i;
        let clipped = rho.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv_i;
        if unclipped <= clipped {
            value += unclipped / g;
            // d(rho)/dz_b = rho * (1[a = b] - p_b)
            let w = adv_i * rho / g;
            for (b, gb) in grad.iter_mut().enumerate() {
                *gb += w * (if a == b { 1.0 } else { 0.0 } - p[b]);
            }
        } else {
            value += clipped / g;
        }
    }

    let kl = kl_of(&p, &logp, &logr);
    value -= cfg.kl_beta * kl;
    for b in 0..p.len() {
        // dKL/dz_b = p_b * (log p_b - log r_b - KL)
        grad[b] -= cfg.kl_beta * p[b] * (logp[b] - logr[b] - kl);
    }
    (value, grad)
}

pub fn surrogate_objective(
    group: &GroupBatch<'_>,
    params: &PolicyParams,
    reference: &PolicyParams,
    cfg: &GrpoConfig,
) -> f64 {
    surrogate_and_logit_grad(group, params, reference, cfg).0
}

/// Mean surrogate over batches and its gradient with respect to the weights
/// (row-major, same layout as [`PolicyParams::weights`]).
pub fn surrogate_gradient(
    batches: &[GroupBatch<'_>],
    params: &PolicyParams,
    reference: &PolicyParams,
    cfg: &GrpoConfig,
) -> (f64, Vec<f64>) {
    let a = params.num_actions();
    let per_group: Vec<(f64, Vec<f64>)> = batches
        .par_iter()
        .map(|g| surrogate_and_logit_grad(g, params, reference, cfg))
        .collect();
    let n = batches.len().max(1) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; params.weights().len()];
    for (group, (v, zgrad)) in batches.iter().zip(&per_group) {
        value += v / n;
        let scale = 1.0 / (n * params.temperature());
        for row in params.active_rows(group.instance) {
            for (gw, gz) in grad[row * a..(row + 1) * a].iter_mut().zip(zgrad) {
                *gw += gz * scale;
            }
        }
    }
    (value, grad)
}

fn ascent_step(
    batches: &[GroupBatch<'_>],
    params: &PolicyParams,
    reference: &PolicyParams,
    cfg: &GrpoConfig,
    lr: f64,
) -> Result<PolicyParams, GrpoError> {
    if batches.is_empty() {
        return Err(GrpoError::EmptyBatch);
    }
    let (_, grad) = surrogate_gradient(batches, params, reference, cfg);
    let a = params.num_actions();
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(GrpoError::NonFiniteGradient { row: i / a, action: i % a });
    }
    let mut next = params.clone();
    for (w, g) in next.weights_mut().iter_mut().zip(&grad) {
        *w += lr * g;
    }
    Ok(next)
}

/// One gradient-ascent step on the mean surrogate objective.
pub fn grpo_update(
    batches: &[GroupBatch<'_>],
    params: &PolicyParams,
    reference: &PolicyParams,
    cfg: &GrpoConfig,
) -> Result<PolicyParams, GrpoError> {
    ascent_step(batches, params, reference, cfg, cfg.learning_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Grpo,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub phase: Phase,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub tool_rate: f64,
    pub decoy_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("log record serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }
}

const WARMUP_STREAM: u64 = 0x7761_726d;
const EPOCH_STREAM: u64 = 0x6570_6f63;
const GROUP_STREAM: u64 = 0x6772_6f75;

fn summarize(step: usize, phase: Phase, groups: &[GroupBatch<'_>], params: &PolicyParams, reference: &PolicyParams) -> LogRecord {
    let n: usize = groups.iter().map(|g| g.rollouts.len()).sum();
    let rollouts = groups.iter().flat_map(|g| &g.rollouts);
    let mean_reward = rollouts.clone().map(|r| r.reward).sum::<f64>() / n as f64;
    let tool_rate = rollouts.clone().filter(|r| r.action.is_tool()).count() as f64 / n as f64;
    let decoy_rate = rollouts.filter(|r| r.action.is_decoy()).count() as f64 / n as f64;
    let mean_kl = groups.iter().map(|g| exact_kl(params, reference, g.instance)).sum::<f64>() / groups.len() as f64;
    LogRecord { step, phase, mean_reward, mean_kl, tool_rate, decoy_rate }
}

/// Format-reward warm-up: the only signal is whether the sampled route is
/// executable, so decoy calls are suppressed before outcome-based training.
/// Outcome specifications are never consulted.
pub fn warmup_format(
    params: &PolicyParams,
    instances: &[TaskInstance],
    cfg: &GrpoConfig,
    reward_cfg: &RewardConfig,
) -> Result<(PolicyParams, Vec<LogRecord>), GrpoError> {
    cfg.validate()?;
    if instances.is_empty() || cfg.warmup_steps == 0 {
        return Ok((params.clone(), Vec::new()));
    }
    let reference = params.clone();
    let mut current = params.clone();
    let mut log = Vec::with_capacity(cfg.warmup_steps);
    for step in 0..cfg.warmup_steps {
        let mut pick = rng::stream(cfg.seed, &[WARMUP_STREAM, step as u64]);
        let chosen: Vec<&TaskInstance> =
            (0..cfg.warmup_batch).map(|_| instances.choose(&mut pick).expect("nonempty")).collect();
        let groups: Vec<GroupBatch<'_>> = chosen
            .par_iter()
            .enumerate()
            .map(|(j, inst)| {
                let mut r = rng::stream(cfg.seed, &[WARMUP_STREAM, step as u64, j as u64]);
                let rollouts = (0..cfg.group_size)
                    .map(|_| {
                        let (action, lp) = current.sample_action(inst, &mut r);
                        Rollout {
                            instance_id: inst.id.clone(),
                            reward: format_reward(reward_cfg, &action),
                            action,
                            acc_dir: None,
                            acc_tool: None,
                            behavior_logprob: lp,
                        }
                    })
                    .collect();
                GroupBatch { instance: inst, rollouts }
            })
            .collect();
        log.push(summarize(step, Phase::Warmup, &groups, &current, &reference));
        current = ascent_step(&groups, &current, &reference, cfg, cfg.warmup_learning_rate)?;
    }
    Ok((current, log))
}

fn rollout_group<'a>(
    inst: &'a TaskInstance,
    params: &PolicyParams,
    cfg: &GrpoConfig,
    reward_cfg: &RewardConfig,
    oracle: &dyn OutcomeOracle,
    stream: &[u64],
) -> Result<GroupBatch<'a>, GrpoError> {
    let mut r = rng::stream(cfg.seed, stream);
    let mut rollouts = Vec::with_capacity(cfg.group_size);
    for _ in 0..cfg.group_size {
        let (action, lp) = params.sample_action(inst, &mut r);
        let (acc_dir, acc_tool) = if action.is_decoy() {
            (None, None)
        } else {
            match oracle.outcome(inst, &action, &mut r) {
                Ok((d, t)) => (Some(d), t),
                // tool faults become the execution-failure branch
                Err(_) if action.is_tool() => {
                    let (d, _) = oracle.outcome(inst, &crate::types::ActionId::direct(), &mut r)?;
                    (Some(d), None)
                }
                Err(e) => return Err(e.into()),
            }
        };
        let reward = match acc_dir {
            Some(d) => relative_outcome_reward(reward_cfg, &action, d, acc_tool),
            None => format_reward(reward_cfg, &action),
        };
        rollouts.push(Rollout { instance_id: inst.id.clone(), action, acc_dir, acc_tool, reward, behavior_logprob: lp });
    }
    Ok(GroupBatch { instance: inst, rollouts })
}

/// Warm-up followed by `epochs` passes of GRPO over `dataset`.
///
/// `initial` fixes the action space, temperature and feature mask. The KL
/// reference is the post-warm-up snapshot. Results are identical for any
/// rayon pool size.
pub fn train(
    dataset: &Dataset,
    initial: &PolicyParams,
    cfg: &GrpoConfig,
    reward_cfg: &RewardConfig,
    oracle: &dyn OutcomeOracle,
) -> Result<(PolicyParams, TrainingLog), GrpoError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(GrpoError::EmptyDataset);
    }
    let (mut params, mut records) = warmup_format(initial, &dataset.instances, cfg, reward_cfg)?;
    let reference = params.clone();
    let mut step = records.len();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[EPOCH_STREAM, epoch as u64]));
        for chunk in order.chunks(cfg.batch_groups) {
            let groups = chunk
                .par_iter()
                .map(|&i| {
                    rollout_group(&dataset.instances[i], &params, cfg, reward_cfg, oracle, &[GROUP_STREAM, epoch as u64, i as u64])
                })
                .collect::<Result<Vec<_>, _>>()?;
            records.push(summarize(step, Phase::Grpo, &groups, &params, &reference));
            params = grpo_update(&groups, &params, &reference, cfg)?;
            step += 1;
        }
    }
    Ok((params, TrainingLog { records }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ActionId, ActionSpace, OutcomeSpec, ToolRegistry, ToolSpec};
    use rand::Rng;

    fn space(k: usize, d: usize) -> ActionSpace {
        let reg = ToolRegistry::from_specs((0..k).map(|i| ToolSpec::simulated(&format!("t{i}"), &[]))).unwrap();
        ActionSpace::new(&reg, d)
    }

    fn inst(id: &str, features: Vec<usize>) -> TaskInstance {
        TaskInstance {
            id: id.into(),
            category: "music".into(),
            features,
            option_count: 4,
            outcome: OutcomeSpec {
                p_dir: 0.5,
                p_tool: Default::default(),
                unexecuted: Default::default(),
                deterministic: true,
                seed_salt: 0,
            },
        }
    }

    #[test]
    fn constant_group_has_zero_advantages() {
        assert_eq!(compute_advantages(&[1.0; 4], 1e-8), vec![0.0; 4]);
    }

    #[test]
    fn two_point_group_uses_sample_std() {
        // mean 0, sample std = sqrt(50)
        let a = compute_advantages(&[5.0, -5.0], 1e-8);
        let want = 5.0 / 50f64.sqrt();
        assert!((a[0] - want).abs() < 1e-15 && (a[1] + want).abs() < 1e-15);
    }

    #[test]
    fn advantages_are_centered() {
        let a = compute_advantages(&[-0.1, -0.1, 5.0, -5.0], 1e-8);
        assert!(a.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn kl_closed_form() {
        // two actions, no features: bias logits give the distributions
        let mut p = PolicyParams::zeros(0, space(1, 0));
        let mut r = PolicyParams::zeros(0, space(1, 0));
        r.set_weight(0, 1, 3f64.ln());
        let i = inst("x", vec![]);
        let want = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((exact_kl(&p, &r, &i) - want).abs() < 1e-12);
        assert!((want - 0.14384).abs() < 1e-5);
        assert_eq!(exact_kl(&r, &r, &i), 0.0);
        p.set_weight(0, 0, 0.3);
        assert!(exact_kl(&p, &r, &i) > 0.0);
    }

    fn group<'a>(i: &'a TaskInstance, behavior: &PolicyParams, seed: u64, rewards: &[f64]) -> GroupBatch<'a> {
        let mut r = rng::stream(seed, &[]);
        let rollouts = rewards
            .iter()
            .map(|&rw| {
                let (action, lp) = behavior.sample_action(i, &mut r);
                Rollout { instance_id: i.id.clone(), action, acc_dir: None, acc_tool: None, reward: rw, behavior_logprob: lp }
            })
            .collect();
        GroupBatch { instance: i, rollouts }
    }

    #[test]
    fn surrogate_with_zero_advantages_is_minus_beta_kl() {
        let mut p = PolicyParams::zeros(2, space(2, 0));
        p.set_weight(0, 1, 0.7);
        let r = PolicyParams::zeros(2, space(2, 0));
        let i = inst("x", vec![0]);
        let g = group(&i, &p, 1, &[1.0, 1.0, 1.0]);
        let cfg = GrpoConfig::default();
        let v = surrogate_objective(&g, &p, &r, &cfg);
        assert!((v + cfg.kl_beta * exact_kl(&p, &r, &i)).abs() < 1e-15);
        let g0 = group(&i, &r, 1, &[1.0, 1.0, 1.0]);
        assert_eq!(surrogate_objective(&g0, &r, &r, &cfg), 0.0);
    }

    /// Straightforward re-evaluation of the surrogate from its definition.
    fn surrogate_oracle(g: &GroupBatch<'_>, p: &PolicyParams, r: &PolicyParams, cfg: &GrpoConfig) -> f64 {
        let dist = p.action_distribution(g.instance);
        let refd = r.action_distribution(g.instance);
        let rewards: Vec<f64> = g.rollouts.iter().map(|x| x.reward).collect();
        let n = rewards.len() as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let sd = (rewards.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut total = 0.0;
        for ro in &g.rollouts {
            let a = if sd < cfg.std_guard { 0.0 } else { (ro.reward - mean) / sd };
            let idx = p.actions().index_of(&ro.action).unwrap();
            let ratio = dist[idx] / ro.behavior_logprob.exp();
            let c = ratio.max(1.0 - cfg.clip_eps).min(1.0 + cfg.clip_eps);
            total += (ratio * a).min(c * a);
        }
        let kl: f64 = dist.iter().zip(&refd).map(|(p, q)| p * (p / q).ln()).sum();
        total / n - cfg.kl_beta * kl
    }

    #[test]
    fn surrogate_matches_reference_evaluation() {
        let mut rng_w = rng::stream(42, &[]);
        let i = inst("x", vec![0, 2]);
        let mut behavior = PolicyParams::zeros(3, space(2, 0));
        let mut cur = behavior.clone();
        let mut reference = behavior.clone();
        for p in [&mut behavior, &mut cur, &mut reference] {
            for w in p.weights_mut() {
                *w = rng_w.gen_range(-0.5..0.5);
            }
        }
        let g = group(&i, &behavior, 3, &[5.0, -0.1, -1.0, 1.0]);
        let cfg = GrpoConfig::default();
        let v = surrogate_objective(&g, &cur, &reference, &cfg);
        assert!((v - surrogate_oracle(&g, &cur, &reference, &cfg)).abs() < 1e-12);
    }

    #[test]
    fn zero_signal_update_is_identity() {
        let p = PolicyParams::zeros(3, space(3, 0));
        let i = inst("x", vec![1]);
        let g = group(&i, &p, 1, &[1.0; 8]);
        let cfg = GrpoConfig { kl_beta: 0.0, ..GrpoConfig::default() };
        assert_eq!(grpo_update(&[g], &p, &p, &cfg).unwrap(), p);
    }

    #[test]
    fn positive_advantage_raises_probability() {
        let p = PolicyParams::zeros(3, space(3, 0));
        let i = inst("x", vec![1]);
        let mut g = group(&i, &p, 1, &[0.0; 4]);
        g.rollouts[0].action = ActionId::tool("t1");
        g.rollouts[0].behavior_logprob = p.log_probs(&i)[2];
        g.rollouts[0].reward = 5.0;
        let next = grpo_update(&[g], &p, &p, &GrpoConfig::default()).unwrap();
        assert!(next.action_distribution(&i)[2] > p.action_distribution(&i)[2]);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let p = PolicyParams::zeros(1, space(1, 0));
        assert!(matches!(grpo_update(&[], &p, &p, &GrpoConfig::default()), Err(GrpoError::EmptyBatch)));
    }

    #[test]
    fn non_finite_reward_is_reported() {
        let p = PolicyParams::zeros(1, space(1, 0));
        let i = inst("x", vec![0]);
        let g = group(&i, &p, 1, &[f64::INFINITY, 0.0, 1.0]);
        assert!(matches!(grpo_update(&[g], &p, &p, &GrpoConfig::default()), Err(GrpoError::NonFiniteGradient { .. })));
    }

    #[test]
    fn warmup_without_decoys_is_identity() {
        let p = PolicyParams::zeros(3, space(3, 0));
        let insts = vec![inst("a", vec![0]), inst("b", vec![1, 2])];
        let (out, log) = warmup_format(&p, &insts, &GrpoConfig::default(), &RewardConfig::default()).unwrap();
        assert_eq!(out, p);
        assert_eq!(log.len(), 50);
    }

    #[test]
    fn config_validation() {
        assert!(GrpoConfig::default().validate().is_ok());
        assert!(GrpoConfig { group_size: 1, ..Default::default() }.validate().is_err());
        assert!(GrpoConfig { clip_eps: 1.0, ..Default::default() }.validate().is_err());
        assert!(GrpoConfig { kl_beta: -0.1, ..Default::default() }.validate().is_err());
        assert!(GrpoConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!(GrpoConfig::lm_scale().learning_rate, 5e-5);
    }

    #[test]
    fn log_round_trip() {
        let log = TrainingLog {
            records: vec![LogRecord { step: 0, phase: Phase::Grpo, mean_reward: -0.1, mean_kl: 0.0, tool_rate: 0.5, decoy_rate: 0.125 }],
        };
        assert_eq!(TrainingLog::from_jsonl(&log.to_jsonl()).unwrap(), log);
    }
}
