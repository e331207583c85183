//! Linear-softmax routing policy over the full action space.
//!
//! `logit[a] = (bias[a] + sum over active, unmasked features i of W[i][a]) / temperature`

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ActionId, ActionSpace, TaskInstance};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid checkpoint: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    feature_dim: usize,
    actions: ActionSpace,
    /// Row-major `(feature_dim + 1) x actions.len()`; the last row is the bias.
    weights: Vec<f64>,
    temperature: f64,
    /// `true` marks a feature whose row is ignored (text-only routing).
    feature_mask: Vec<bool>,
}

impl PolicyParams {
    pub fn zeros(feature_dim: usize, actions: ActionSpace) -> Self {
        let a = actions.len();
        Self {
            feature_dim,
            actions,
            weights: vec![0.0; (feature_dim + 1) * a],
            temperature: 1.0,
            feature_mask: vec![false; feature_dim],
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        assert!(temperature > 0.0 && temperature.is_finite(), "temperature must be positive");
        self.temperature = temperature;
        self
    }

    /// Masks the given feature indices (out-of-range indices are ignored).
    pub fn with_mask(mut self, masked: impl IntoIterator<Item = usize>) -> Self {
        for i in masked {
            if i < self.feature_dim {
                self.feature_mask[i] = true;
            }
        }
        self
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn feature_mask(&self) -> &[bool] {
        &self.feature_mask
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Row index of the bias.
    pub fn bias_row(&self) -> usize {
        self.feature_dim
    }

    pub fn weight(&self, row: usize, action: usize) -> f64 {
        self.weights[row * self.num_actions() + action]
    }

    pub fn set_weight(&mut self, row: usize, action: usize, value: f64) {
        let a = self.num_actions();
        self.weights[row * a + action] = value;
    }

    /// Rows that contribute to this instance's logits: the active unmasked
    /// features followed by the bias row.
    pub fn active_rows<'a>(&'a self, instance: &'a TaskInstance) -> impl Iterator<Item = usize> + 'a {
        instance
            .features
            .iter()
            .copied()
            .filter(|&i| i < self.feature_dim && !self.feature_mask[i])
            .chain(std::iter::once(self.feature_dim))
    }

    pub fn logits(&self, instance: &TaskInstance) -> Vec<f64> {
        let a = self.num_actions();
        let mut z = vec![0.0; a];
        for row in self.active_rows(instance) {
            let w = &self.weights[row * a..(row + 1) * a];
            z.iter_mut().zip(w).for_each(|(z, w)| *z += w);
        }
        z.iter_mut().for_each(|z| *z /= self.temperature);
        z
    }

    pub fn action_distribution(&self, instance: &TaskInstance) -> Vec<f64> {
        softmax(&self.logits(instance))
    }

    pub fn log_probs(&self, instance: &TaskInstance) -> Vec<f64> {
        log_softmax(&self.logits(instance))
    }

    /// Draws an action and returns it with its log-probability.
    pub fn sample_action<R: Rng + ?Sized>(&self, instance: &TaskInstance, rng: &mut R) -> (ActionId, f64) {
        let idx = self.sample_index(instance, rng);
        let lp = self.log_probs(instance)[idx];
        (self.actions.get(idx).clone(), lp)
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, instance: &TaskInstance, rng: &mut R) -> usize {
        let p = self.action_distribution(instance);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding slack above the cumulative sum
        p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
    }

    /// Argmax of the logits; ties go to the lowest index.
    pub fn greedy_index(&self, instance: &TaskInstance) -> usize {
        argmax_first(&self.logits(instance))
    }

    pub fn greedy_action(&self, instance: &TaskInstance) -> ActionId {
        self.actions.get(self.greedy_index(instance)).clone()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            feature_dim: self.feature_dim,
            actions: self.actions.actions().to_vec(),
            temperature: self.temperature,
            masked_features: (0..self.feature_dim).filter(|&i| self.feature_mask[i]).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, PolicyError> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(PolicyError::Invalid(format!("unsupported format {} v{}", ck.format, ck.version)));
        }
        let actions = ActionSpace::from_actions(ck.actions).map_err(|e| PolicyError::Invalid(e.to_string()))?;
        if ck.weights.len() != (ck.feature_dim + 1) * actions.len() {
            return Err(PolicyError::Invalid("weight count does not match shape".into()));
        }
        if !(ck.temperature > 0.0 && ck.temperature.is_finite()) {
            return Err(PolicyError::Invalid("temperature must be positive".into()));
        }
        if ck.weights.iter().any(|w| !w.is_finite()) {
            return Err(PolicyError::Invalid("non-finite weight".into()));
        }
        if ck.masked_features.iter().any(|&i| i >= ck.feature_dim) {
            return Err(PolicyError::Invalid("masked feature out of range".into()));
        }
        let mut p = PolicyParams::zeros(ck.feature_dim, actions)
            .with_temperature(ck.temperature)
            .with_mask(ck.masked_features);
        p.weights = ck.weights;
        Ok(p)
    }

    /// Serialized checkpoint text. Floats use shortest round-trip notation,
    /// so `load(save(p)) == p` exactly.
    pub fn checkpoint_text(&self) -> String {
        let mut s = serde_json::to_string(&self.to_checkpoint()).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        fs::write(path, self.checkpoint_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = fs::read_to_string(path)?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

pub const CHECKPOINT_FORMAT: &str = "audiorouter-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk policy checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub feature_dim: usize,
    pub actions: Vec<ActionId>,
    pub temperature: f64,
    pub masked_features: Vec<usize>,
    /// Row-major, bias row last.
    pub weights: Vec<f64>,
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn argmax_first(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}
