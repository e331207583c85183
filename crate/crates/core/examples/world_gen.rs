//! Generate a world, save and reload it, and summarize what the generator
//! planted: keyword bias, boundary temptations and the oracle gap.

use audiorouter::eval::{self, RouterStrategy};
use audiorouter::world::{generate_world, World};
use audiorouter::{ActionSpace, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = WorldSpec::separable(7);
    let world = generate_world(&spec)?;
    let path = std::env::temp_dir().join("audiorouter-world.json");
    world.save(&path)?;
    let back = World::load(&path)?;
    assert_eq!(back, world);
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    println!("layout: {:?}", world.layout);

    let n = world.annotations.len() as f64;
    let biased = world.annotations.iter().filter(|a| a.keyword_biased).count() as f64;
    let boundary = world.annotations.iter().filter(|a| a.boundary).count() as f64;
    println!("keyword-biased {:.3}, boundary temptations {:.3}", biased / n, boundary / n);

    let actions = ActionSpace::new(&world.registry(), 0);
    for (label, s) in [("oracle", RouterStrategy::Oracle), ("always_direct", RouterStrategy::AlwaysDirect)] {
        let m = eval::evaluate(&s, &world.dataset, &actions)?;
        println!("{label:<14} accuracy {:.4} per category {:?}", m.accuracy, m.per_category);
    }
    let inst = &world.dataset.instances[0];
    println!("first instance: {}", serde_json::to_string(inst)?);
    Ok(())
}
