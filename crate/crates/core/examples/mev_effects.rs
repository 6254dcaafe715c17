//! Evaluates the planner with MEV rewards switched on, over a few arrival
//! probabilities and bonus sizes.

use lstsim::beacon::StakeConfig;
use lstsim::env::{EnvConfig, MevConfig};
use lstsim::reward::RewardWeights;
use lstsim::strategy::{evaluate, Policy, PolicyKind};

fn main() -> lstsim::Result<()> {
    let stakes = StakeConfig::new(0.2, 0.2)?;
    let policy = Policy::baseline(PolicyKind::MixingForking, RewardWeights::SELF_OPTIMIZATION).with_stakes(stakes);
    println!("delta  bonus  sacrificed  displaced  value gain");
    for delta in [0.05, 0.2] {
        for bonus in [1.0, 10.0] {
            let mev = MevConfig::new(delta, bonus, MevConfig::DEFAULT_CAPACITY)?;
            let cfg = EnvConfig::new(stakes).with_mev(mev).with_epochs(2);
            let m = evaluate(&policy, &cfg, 3000, 5)?;
            println!(
                "{delta:>5} {bonus:>6} {:>11.5} {:>10.5} {:>+11.4}",
                m.sacrificed_fraction,
                m.displaced_fraction,
                m.adversary_value_gain(&stakes)
            );
        }
    }
    Ok(())
}
