//! Train a router on the seeded separable world and compare it with the
//! baselines, in-sample and on the held-out tail.
//!
//! cargo run --release --example train_separable -- [seed] [learning_rate] [batch_groups]

use audiorouter::eval::{self, RouterStrategy};
use audiorouter::world::{generate_world, SpecOracle};
use audiorouter::{train, ActionSpace, GrpoConfig, PolicyParams, RewardConfig, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed = args.first().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let mut cfg = GrpoConfig { seed, ..GrpoConfig::default() };
    if let Some(lr) = args.get(1) {
        cfg.learning_rate = lr.parse()?;
    }
    if let Some(b) = args.get(2) {
        cfg.batch_groups = b.parse()?;
    }

    let world = generate_world(&WorldSpec::separable(seed))?;
    let actions = ActionSpace::new(&world.registry(), 0);
    let init = PolicyParams::zeros(world.dataset.feature_dim, actions.clone());
    let t = std::time::Instant::now();
    let (params, log) = train(&world.dataset, &init, &cfg, &RewardConfig::default(), &SpecOracle)?;
    println!("trained {} steps in {:.2?}", log.records.len(), t.elapsed());

    let keywords = world.layout.keywords.iter().map(|(t, i)| (*i, t.clone())).collect();
    let strategies = [
        ("learned", RouterStrategy::Learned(params.clone())),
        ("oracle", RouterStrategy::Oracle),
        ("always_direct", RouterStrategy::AlwaysDirect),
        ("keyword_heuristic", RouterStrategy::KeywordHeuristic { keywords }),
        ("random", RouterStrategy::Random { seed }),
    ]
    .map(|(n, s)| (n.to_string(), s));

    println!("-- all {} instances", world.dataset.len());
    print!("{}", eval::compare(&strategies, &world.dataset, &actions)?.table());

    // a separate run on the training split only, scored on the held-out tail
    let (tr, ho) = world.dataset.split_holdout(eval::HOLDOUT_FRACTION);
    let (held, _) = train(&tr, &init, &cfg, &RewardConfig::default(), &SpecOracle)?;
    let mut strategies = strategies;
    strategies[0].1 = RouterStrategy::Learned(held);
    println!("-- held-out {} instances", ho.len());
    print!("{}", eval::compare(&strategies, &ho, &actions)?.table());
    Ok(())
}
