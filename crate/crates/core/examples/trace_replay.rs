//! Logged per-action correctness records instead of a synthetic oracle:
//! export a world as traces, reload them through a feature dictionary, train
//! and evaluate on the replay.

use audiorouter::eval::{self, RouterStrategy, HOLDOUT_FRACTION};
use audiorouter::traces::{self, FeatureDict};
use audiorouter::world::{generate_world, SpecOracle};
use audiorouter::{train, ActionSpace, GrpoConfig, PolicyParams, RewardConfig, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = generate_world(&WorldSpec { num_instances: 1500, ..WorldSpec::separable(11) })?;
    let dir = tempfile_dir()?;
    let path = dir.join("traces.jsonl");
    traces::save_traces(&world.dataset, &path)?;
    let text = std::fs::read_to_string(&path)?;
    println!("{} records, first: {}", text.lines().count(), text.lines().next().unwrap_or(""));

    // a broken line is reported and skipped, the rest still loads
    let damaged = format!("{text}{{\"id\": \"oops\"}}\n");
    std::fs::write(&path, damaged)?;
    let dict = FeatureDict::new(world.dataset.feature_dim);
    let registry = world.registry();
    let (data, report) = traces::load_traces(&path, &dict, &registry, false)?;
    println!("loaded {}, skipped {:?}", report.loaded, report.errors);

    let actions = ActionSpace::new(&registry, 0);
    let (tr, ho) = data.split_holdout(HOLDOUT_FRACTION);
    let init = PolicyParams::zeros(data.feature_dim, actions.clone());
    let (p, log) = train(&tr, &init, &GrpoConfig::default(), &RewardConfig::default(), &SpecOracle)?;
    let m = eval::evaluate(&RouterStrategy::Learned(p), &ho, &actions)?;
    let o = eval::evaluate(&RouterStrategy::Oracle, &ho, &actions)?;
    println!("{} updates; held-out accuracy {:.4} (oracle {:.4})", log.records.len(), m.accuracy, o.accuracy);
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join(format!("audiorouter-traces-{}", std::process::id()));
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
