//! Multimodal versus text-only routing on the separable world, next to the
//! baseline strategies. The text-only router has the audio-derived
//! capability indicators masked and ends up no better than keyword matching.

use audiorouter::eval::{self, RouterStrategy, HOLDOUT_FRACTION};
use audiorouter::world::{generate_world, SpecOracle};
use audiorouter::{train, ActionSpace, GrpoConfig, PolicyParams, RewardConfig, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec::separable(7))?;
    let actions = ActionSpace::new(&world.registry(), 0);
    let (tr, ho) = world.dataset.split_holdout(HOLDOUT_FRACTION);
    let cfg = GrpoConfig { seed: 7, ..GrpoConfig::default() };

    let multimodal = PolicyParams::zeros(world.dataset.feature_dim, actions.clone());
    let text_only = multimodal.clone().with_mask(world.layout.audio_features());
    let (mm, _) = train(&tr, &multimodal, &cfg, &RewardConfig::default(), &SpecOracle)?;
    let (txt, _) = train(&tr, &text_only, &cfg, &RewardConfig::default(), &SpecOracle)?;

    let keywords = world.layout.keywords.iter().map(|(t, i)| (*i, t.clone())).collect();
    let strategies = vec![
        ("multimodal".to_string(), RouterStrategy::Learned(mm)),
        ("text_only".to_string(), RouterStrategy::Learned(txt)),
        ("keyword_heuristic".to_string(), RouterStrategy::KeywordHeuristic { keywords }),
        ("always_direct".to_string(), RouterStrategy::AlwaysDirect),
        ("random".to_string(), RouterStrategy::Random { seed: 7 }),
        ("oracle".to_string(), RouterStrategy::Oracle),
    ];
    let cmp = eval::compare(&strategies, &ho, &actions)?;
    print!("{}", cmp.table());
    println!();
    for d in cmp.deltas.iter().filter(|d| d.a == "multimodal") {
        println!("multimodal - {:<18} {:+.4}", d.b, d.accuracy_delta);
    }
    Ok(())
}
