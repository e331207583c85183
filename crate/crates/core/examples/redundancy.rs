//! In a world where tools never change the answer, the -0.1 redundancy
//! penalty teaches the router to stop calling them.

use audiorouter::eval::{self, RouterStrategy};
use audiorouter::world::{generate_world, SpecOracle};
use audiorouter::{train, ActionSpace, GrpoConfig, PolicyParams, RewardConfig, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec::no_effect(7))?;
    let actions = ActionSpace::new(&world.registry(), 0);
    let init = PolicyParams::zeros(world.dataset.feature_dim, actions.clone());
    let before = eval::evaluate(&RouterStrategy::Random { seed: 1 }, &world.dataset, &actions)?;
    let (p, log) = train(&world.dataset, &init, &GrpoConfig::default(), &RewardConfig::default(), &SpecOracle)?;
    for r in log.records.iter().step_by(100) {
        println!("step {:>5} {:?} reward {:+.3} tool_rate {:.3} kl {:.4}", r.step, r.phase, r.mean_reward, r.tool_rate, r.mean_kl);
    }
    let after = eval::evaluate(&RouterStrategy::Learned(p), &world.dataset, &actions)?;
    println!("tool rate: uniform routing {:.3}, trained {:.3}", before.tool_rate, after.tool_rate);
    Ok(())
}
