//! Finds an epoch that ends in a run of adversary slots and lists the
//! best reveal/miss pattern for each objective.

use lstsim::beacon::StakeConfig;
use lstsim::env::{Env, EnvConfig};
use lstsim::oracle::{enumerate_tail, pure_tail_len, TailObjective};
use lstsim::reward::RewardWeights;

fn main() -> lstsim::Result<()> {
    let stakes = StakeConfig::new(0.3, 0.2)?;
    let cfg = EnvConfig::new(stakes).with_epochs(2);
    for seed in 0..500u64 {
        let mut env = Env::new(cfg, seed)?;
        while env.next_decision().is_some() {
            let state = env.state();
            match pure_tail_len(state) {
                Some(len) if len >= 3 => {
                    println!("seed {seed}: {len} adversary slots close epoch {}", state.epoch);
                    for (name, w) in [
                        ("self-optimization", RewardWeights::SELF_OPTIMIZATION),
                        ("griefing", RewardWeights::GRIEFING),
                    ] {
                        let plan = enumerate_tail(state, &TailObjective::for_weights(&w))?;
                        let pattern: String =
                            plan.reveal.iter().map(|r| if *r { 'R' } else { 'm' }).collect();
                        println!(
                            "  {name:<18} pattern {pattern}  next epoch A={} T={}  misses {}",
                            plan.next_adversary, plan.next_target, plan.misses
                        );
                    }
                    return Ok(());
                }
                _ => {
                    env.step(1)?;
                }
            }
        }
    }
    println!("no long tail found");
    Ok(())
}
