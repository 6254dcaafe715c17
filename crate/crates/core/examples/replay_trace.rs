//! Records an episode trace, replays its actions in a fresh environment and
//! checks that the two traces agree slot for slot.

use lstsim::beacon::StakeConfig;
use lstsim::cli::{read_trace, replay};
use lstsim::env::{Env, EnvConfig};
use lstsim::reward::RewardWeights;
use lstsim::strategy::{episode_seed, Policy, PolicyKind};

fn main() -> lstsim::Result<()> {
    let stakes = StakeConfig::new(0.3, 0.2)?;
    let cfg = EnvConfig::new(stakes).with_epochs(4);
    let seed = episode_seed(77, 0);
    let policy = Policy::baseline(PolicyKind::SelfishMixing, RewardWeights::GRIEFING);
    let mut env = Env::new(cfg, seed)?.with_trace();
    while env.next_decision().is_some() {
        env.step(policy.act(env.state())?)?;
    }
    let path = std::env::temp_dir().join("lstsim_replay_example.jsonl");
    let mut text = String::new();
    for r in env.trace().unwrap_or_default() {
        text += &serde_json::to_string(r)?;
        text.push('\n');
    }
    std::fs::write(&path, text)?;

    let recorded = read_trace(&path)?;
    let replayed = replay(cfg, seed, &recorded, &path)?;
    let missed = recorded.iter().filter(|r| r.action == Some(0)).count();
    println!("{} slots recorded, {missed} deliberate misses", recorded.len());
    println!("replay identical: {}", recorded == replayed);
    Ok(())
}
