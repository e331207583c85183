//! Format-reward warm-up with four decoy tool names in the action space:
//! decoy probability mass before and during warm-up.

use audiorouter::grpo::warmup_format;
use audiorouter::world::generate_world;
use audiorouter::{ActionSpace, GrpoConfig, PolicyParams, RewardConfig, TaskInstance, WorldSpec};

fn decoy_mass(p: &PolicyParams, instances: &[TaskInstance]) -> f64 {
    let decoys: Vec<usize> = (0..p.num_actions()).filter(|&i| p.actions().get(i).is_decoy()).collect();
    instances
        .iter()
        .map(|i| {
            let d = p.action_distribution(i);
            decoys.iter().map(|&k| d[k]).sum::<f64>()
        })
        .sum::<f64>()
        / instances.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec { num_instances: 100, ..WorldSpec::separable(8) })?;
    let actions = ActionSpace::new(&world.registry(), 4);
    println!("actions: {}", actions.actions().iter().map(|a| a.token()).collect::<Vec<_>>().join(" "));
    let init = PolicyParams::zeros(world.dataset.feature_dim, actions);
    let insts = &world.dataset.instances;
    println!("step  decoy_mass");
    println!("{:>4}  {:.4}", 0, decoy_mass(&init, insts));
    for steps in [5, 10, 20, 35, 50] {
        let cfg = GrpoConfig { warmup_steps: steps, ..GrpoConfig::default() };
        let (p, _) = warmup_format(&init, insts, &cfg, &RewardConfig::default())?;
        println!("{steps:>4}  {:.4}", decoy_mass(&p, insts));
    }
    Ok(())
}
