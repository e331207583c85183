//! Relative-outcome reward and the warm-up format reward.
//!
//! A tool call is scored against the direct answer on the same instance:
//!
//! | action | acc_dir | acc_tool | reward |
//! |--------|---------|----------|--------|
//! | tool   | 0       | 1        | +5.0   |
//! | tool   | 1       | 0        | -5.0   |
//! | tool   | d       | d        | -0.1   |
//! | tool   | any     | failed   |  0.0   |
//! | direct | 1       | -        | +1.0   |
//! | direct | 0       | -        | -1.0   |
//! | decoy  | any     | -        | -1.0   |

use serde::{Deserialize, Serialize};

use crate::types::{ActionId, ActionKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub tool_gain: f64,
    pub tool_harm: f64,
    pub redundancy_penalty: f64,
    /// Tool invoked but produced no result.
    pub otherwise_value: f64,
    pub dir_correct: f64,
    pub dir_wrong: f64,
    pub format_ok: f64,
    pub format_bad: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            tool_gain: 5.0,
            tool_harm: -5.0,
            redundancy_penalty: -0.1,
            otherwise_value: 0.0,
            dir_correct: 1.0,
            dir_wrong: -1.0,
            format_ok: 1.0,
            format_bad: -1.0,
        }
    }
}

/// Reward for one routed decision. `acc_tool = None` on a tool action means
/// the tool did not execute.
pub fn relative_outcome_reward(
    cfg: &RewardConfig,
    action: &ActionId,
    acc_dir: bool,
    acc_tool: Option<bool>,
) -> f64 {
    match action.kind() {
        ActionKind::Direct => {
            if acc_dir {
                cfg.dir_correct
            } else {
                cfg.dir_wrong
            }
        }
        ActionKind::Tool => match (acc_dir, acc_tool) {
            (_, None) => cfg.otherwise_value,
            (false, Some(true)) => cfg.tool_gain,
            (true, Some(false)) => cfg.tool_harm,
            (_, Some(_)) => cfg.redundancy_penalty,
        },
        ActionKind::Decoy => cfg.format_bad,
    }
}

/// Warm-up reward: any executable route is well-formed, decoys are not.
pub fn format_reward(cfg: &RewardConfig, action: &ActionId) -> f64 {
    if action.is_decoy() {
        cfg.format_bad
    } else {
        cfg.format_ok
    }
}
