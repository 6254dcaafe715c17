use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::beacon::{Group, SLOTS_PER_EPOCH};
use crate::env::{Env, EnvConfig};
use crate::error::{Error, Result};
use crate::reward::{
    allocation_losses, chain_quality_impact, epoch_reward, epoch_reward_mev, AttackMetrics,
    EpochSummary,
};

use super::Policy;

/// Seed of episode `k` under a root seed: the first output of the ChaCha
/// stream `k` keyed by `root`.
pub fn episode_seed(root: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(k);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub summaries: Vec<EpochSummary>,
    pub reward: f64,
}

/// Plays one episode with greedy actions.
pub fn run_episode(policy: &Policy, cfg: &EnvConfig, seed: u64) -> Result<EpisodeOutcome> {
    let mut env = Env::new(*cfg, seed)?;
    while env.next_decision().is_some() {
        let a = policy.act(env.state())?;
        env.step(a)?;
    }
    let summaries = env.summaries().to_vec();
    let w = &policy.weights;
    let reward = summaries
        .iter()
        .map(|s| {
            if cfg.mev.enabled {
                epoch_reward_mev(w, s)
            } else {
                epoch_reward(w, s)
            }
        })
        .sum();
    Ok(EpisodeOutcome { summaries, reward })
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `n_episodes` seeded episodes in parallel and aggregates metrics.
/// Results depend only on `(policy, cfg, n_episodes, seed)`.
pub fn evaluate(
    policy: &Policy,
    cfg: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<AttackMetrics> {
    if n_episodes == 0 {
        return Err(Error::usage("evaluation needs at least one episode"));
    }
    cfg.validate()?;
    let outcomes: Vec<EpisodeOutcome> = (0..n_episodes as u64)
        .into_par_iter()
        .map(|k| run_episode(policy, cfg, episode_seed(seed, k)))
        .collect::<Result<_>>()?;
    Ok(aggregate(&outcomes, cfg))
}

/// Per-episode rewards of `n_episodes` seeded episodes, in episode order.
/// Two policies evaluated with the same seed face the same episodes.
pub fn episode_rewards(
    policy: &Policy,
    cfg: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_episodes == 0 {
        return Err(Error::usage("evaluation needs at least one episode"));
    }
    cfg.validate()?;
    (0..n_episodes as u64)
        .into_par_iter()
        .map(|k| run_episode(policy, cfg, episode_seed(seed, k)).map(|o| o.reward))
        .collect()
}

pub(crate) fn aggregate(outcomes: &[EpisodeOutcome], cfg: &EnvConfig) -> AttackMetrics {
    let a = Group::Adversary.index();
    let t = Group::Target.index();
    let mut adv = Vec::new();
    let mut tgt = Vec::new();
    let (mut sacrificed, mut displaced, mut slots) = (0u64, 0u64, 0u64);
    let (mut value_a, mut value_t, mut dv_a, mut dv_t) = (0.0, 0.0, 0.0, 0.0);
    let (mut value_all, mut canonical_all) = (0.0, 0u64);
    for o in outcomes {
        for s in &o.summaries {
            adv.push(s.next_assigned[a] as f64);
            tgt.push(s.next_assigned[t] as f64);
            sacrificed += s.counts.total_sacrificed() as u64;
            displaced += s.counts.total_displaced() as u64;
            slots += SLOTS_PER_EPOCH as u64;
            value_a += s.canonical_value[a];
            value_t += s.canonical_value[t];
            dv_a += s.value_delta_adversary;
            dv_t += s.value_delta_target;
            value_all += s.canonical_value.iter().sum::<f64>();
            canonical_all += s.counts.total_canonical() as u64;
        }
    }
    let epochs = adv.len();
    let rewards: Vec<f64> = outcomes.iter().map(|o| o.reward).collect();
    let (ma, sa) = mean_se(&adv);
    let (mt, st) = mean_se(&tgt);
    let (mr, sr) = mean_se(&rewards);
    let (victim, adversary) = match allocation_losses(ma, mt, &cfg.stakes) {
        Ok((v, a)) => (Some(v), a),
        Err(_) => (
            None,
            crate::reward::relative_loss(ma, cfg.stakes.adversary()).unwrap_or(0.0),
        ),
    };
    let cq = chain_quality_impact(sacrificed, displaced, slots);
    let ne = epochs.max(1) as f64;
    AttackMetrics {
        victim_loss: victim,
        adversary_loss: adversary,
        chain_quality_impact: cq.total(),
        sacrificed_fraction: cq.sacrificed,
        displaced_fraction: cq.displaced,
        mean_adversary_slots: ma,
        mean_target_slots: mt,
        se_adversary_slots: sa,
        se_target_slots: st,
        mean_episode_reward: mr,
        se_episode_reward: sr,
        mean_adversary_value: value_a / ne,
        mean_target_value: value_t / ne,
        mean_value_delta_adversary: dv_a / ne,
        mean_value_delta_target: dv_t / ne,
        mean_block_value: if canonical_all > 0 {
            value_all / canonical_all as f64
        } else {
            1.0
        },
        episodes: outcomes.len(),
        realized_epochs: epochs,
    }
}
