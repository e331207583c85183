//! Learned tool routing for audio question answering.
//!
//! A router decides, per task instance, whether the frozen reasoner should
//! answer directly or first call one of `K` external audio tools. The router
//! is trained with group-relative policy optimization against a reward that
//! compares the tool-augmented outcome with the direct outcome on the same
//! instance, so a tool call only pays off when it changes a wrong answer into
//! a right one.
//!
//! Module map:
//!
//! - [`types`]: tasks, actions, tool specs, registry, rollouts
//! - [`reward`]: relative-outcome reward and the warm-up format reward
//! - [`policy`]: linear-softmax routing policy and checkpoint format
//! - [`grpo`]: advantages, exact KL, clipped surrogate, updates, training loop
//! - [`world`]: synthetic task populations and the correctness oracle
//! - [`toolbus`]: `<tool_call>` syntax, result envelope, tool dispatch
//! - [`dsp`]: native tempo / pitch / centroid / segment analysis over WAV
//! - [`eval`]: baseline routers, metrics, comparisons, data-efficiency curves
//! - [`traces`]: line-delimited trace ingestion and export
//! - [`cli`]: command implementations behind the `audiorouter` binary
//!
//! The `examples/` directory of this crate holds one runnable program per
//! capability; start with `cargo run --example train_separable`.

pub mod cli;
pub mod dsp;
pub mod eval;
pub mod grpo;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod toolbus;
pub mod traces;
pub mod types;
pub mod world;

pub use grpo::{train, GrpoConfig, TrainingLog};
pub use policy::PolicyParams;
pub use reward::RewardConfig;
pub use types::{ActionId, ActionKind, ActionSpace, Dataset, OutcomeSpec, TaskInstance, ToolRegistry, ToolSpec};
pub use world::{World, WorldSpec};
