//! Held-out accuracy as a function of the number of training instances.

use audiorouter::eval;
use audiorouter::world::{generate_world, SpecOracle};
use audiorouter::{train, ActionSpace, GrpoConfig, PolicyParams, RewardConfig, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec::separable(7))?;
    let actions = ActionSpace::new(&world.registry(), 0);
    let init = PolicyParams::zeros(world.dataset.feature_dim, actions);
    let cfg = GrpoConfig { seed: 7, ..GrpoConfig::default() };
    let points = eval::data_efficiency_curve(
        |d| train(d, &init, &cfg, &RewardConfig::default(), &SpecOracle).map(|(p, _)| p).map_err(|e| e.to_string()),
        &init,
        &world.dataset,
        &[0, 25, 50, 100, 200, 400, 800, 1600],
    )?;
    print!("{}", eval::curve_csv(&points));
    Ok(())
}
