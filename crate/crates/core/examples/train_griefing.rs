//! Trains a small griefing policy, round-trips it through a file, and
//! evaluates it next to the planner it started from.

use lstsim::beacon::StakeConfig;
use lstsim::env::EnvConfig;
use lstsim::reward::RewardWeights;
use lstsim::strategy::{evaluate, train, Policy, PolicyKind, TrainConfig};

fn main() -> lstsim::Result<()> {
    let stakes = StakeConfig::new(0.25, 0.2)?;
    let mut cfg = TrainConfig::new(RewardWeights::GRIEFING, stakes, 400_000, 11);
    cfg.optimizer.validation_episodes = 500;
    let out = train(&cfg)?;
    for r in &out.log {
        println!(
            "iteration {:>2}  steps {:>7}  mean {:+.3}  best {:+.3}",
            r.iteration, r.steps, r.mean_reward, r.best_reward
        );
    }
    println!("validation reward {:+.3}", out.validation_reward);
    for (kind, r) in &out.baseline_rewards {
        println!("  baseline {:<15} {r:+.3}", kind.name());
    }

    let dir = std::env::temp_dir().join("lstsim_train_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("policy.toml");
    out.policy.save(&path)?;
    let policy = Policy::load(&path)?;
    println!("saved to {}", path.display());

    let env = EnvConfig::new(stakes).with_epochs(6);
    let planner = Policy::baseline(PolicyKind::MixingForking, RewardWeights::GRIEFING).with_stakes(stakes);
    for (name, p) in [("trained", &policy), ("planner", &planner)] {
        let m = evaluate(p, &env, 2000, 99)?;
        println!(
            "{name:<8} victim loss {:+.4}  adversary loss {:+.4}",
            m.victim_loss.unwrap_or(0.0),
            m.adversary_loss
        );
    }
    Ok(())
}
