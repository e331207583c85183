//! The relative-outcome reward for every (route, outcome) combination, and
//! what group normalization turns a few typical groups into.

use audiorouter::grpo::compute_advantages;
use audiorouter::reward::{format_reward, relative_outcome_reward};
use audiorouter::{ActionId, RewardConfig};

fn main() {
    let cfg = RewardConfig::default();
    let tool = ActionId::tool("transcribe");
    println!("{:<22} {:>8} {:>9} {:>8}", "route", "acc_dir", "acc_tool", "reward");
    for (d, t) in [(false, Some(true)), (true, Some(false)), (true, Some(true)), (false, Some(false)), (true, None)] {
        let shown = t.map_or("failed".to_string(), |b| (b as u8).to_string());
        println!("{:<22} {:>8} {:>9} {:>8}", tool.to_string(), d as u8, shown, relative_outcome_reward(&cfg, &tool, d, t));
    }
    for d in [true, false] {
        println!("{:<22} {:>8} {:>9} {:>8}", "Direct", d as u8, "-", relative_outcome_reward(&cfg, &ActionId::direct(), d, None));
    }
    println!("{:<22} {:>8} {:>9} {:>8}", "Decoy(sing_along)", "-", "-", format_reward(&cfg, &ActionId::decoy("sing_along")));

    println!();
    for group in [vec![5.0, -5.0], vec![-0.1; 4], vec![5.0, -0.1, -0.1, 1.0, -1.0, -0.1, -0.1, -1.0]] {
        let adv: Vec<String> = compute_advantages(&group, 1e-8).iter().map(|a| format!("{a:+.3}")).collect();
        println!("{group:?} -> [{}]", adv.join(", "));
    }
}
