//! Compares the baseline policies at a 20/20 stake split.

use lstsim::beacon::StakeConfig;
use lstsim::env::EnvConfig;
use lstsim::reward::RewardWeights;
use lstsim::strategy::{evaluate, Policy, PolicyKind};

fn main() -> lstsim::Result<()> {
    let stakes = StakeConfig::new(0.2, 0.2)?;
    let cfg = EnvConfig::new(stakes).with_epochs(6);
    println!("objective          policy           share   victim   chain quality");
    for (name, w) in [
        ("self-optimization", RewardWeights::SELF_OPTIMIZATION),
        ("griefing", RewardWeights::GRIEFING),
    ] {
        for kind in PolicyKind::BASELINES {
            let p = Policy::baseline(kind, w).with_stakes(stakes);
            let m = evaluate(&p, &cfg, 2000, 1)?;
            println!(
                "{name:<18} {:<15} {:.4}  {:+.4}  {:.4}",
                kind.name(),
                m.adversary_share(),
                m.victim_loss.unwrap_or(0.0),
                m.chain_quality_impact
            );
        }
    }
    Ok(())
}
