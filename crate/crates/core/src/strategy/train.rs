//! Cross-entropy search over the learned policy's parameters.
//!
//! Each iteration samples a population around the current mean, scores every
//! candidate on the same batch of episode seeds, and refits the mean and
//! spread to the elite. The search starts from the planner parameterization.
//! After the budget is spent, every retained candidate is compared with the
//! planner start on a held out validation batch. A candidate replaces the planner only if its
//! paired per-episode improvement exceeds two standard errors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::beacon::{StakeConfig, SLOTS_PER_EPOCH};
use crate::env::{EnvConfig, MevConfig};
use crate::error::{Error, Result};
use crate::oracle::DEFAULT_TAIL_CAP;
use crate::reward::RewardWeights;

use super::evaluate::{episode_rewards, episode_seed, evaluate};
use super::policy::{Policy, PolicyKind, LEARNED_PARAMS};

/// Parameter indices that only matter when MEV values are observed.
const MEV_PARAMS: [usize; 6] = [8, 9, 10, 16, 17, 18];

const VALIDATION_STREAM: u64 = u64::MAX;

/// Paired standard errors by which a candidate must beat the planner start.
const SIGNIFICANCE: f64 = 2.0;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemSettings {
    pub population: usize,
    pub elite: usize,
    /// Episodes per candidate per iteration.
    pub episodes: usize,
    pub init_sigma: f64,
    pub min_sigma: f64,
    /// Weight of the new elite statistics in the mean and spread update.
    pub smoothing: f64,
    pub validation_episodes: usize,
}

impl Default for CemSettings {
    fn default() -> Self {
        CemSettings {
            population: 16,
            elite: 4,
            episodes: 200,
            init_sigma: 0.5,
            min_sigma: 0.02,
            smoothing: 0.7,
            validation_episodes: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub weights: RewardWeights,
    pub stakes: StakeConfig,
    #[serde(default)]
    pub mev: MevConfig,
    /// Episode length in epochs, counting the realization epoch.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Environment slots the search may simulate, summed over seeds.
    pub budget: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub optimizer: CemSettings,
    #[serde(default = "default_cap")]
    pub tail_cap: usize,
}

fn default_epochs() -> usize {
    2
}

fn default_cap() -> usize {
    DEFAULT_TAIL_CAP
}

impl TrainConfig {
    pub fn new(weights: RewardWeights, stakes: StakeConfig, budget: u64, seed: u64) -> Self {
        TrainConfig {
            weights,
            stakes,
            mev: MevConfig::disabled(),
            epochs: default_epochs(),
            budget,
            seeds: vec![seed],
            optimizer: CemSettings::default(),
            tail_cap: DEFAULT_TAIL_CAP,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig::new(self.stakes)
            .with_mev(self.mev)
            .with_epochs(self.epochs)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.env_config().validate()?;
        if self.budget == 0 {
            return Err(Error::param("budget", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::param("seeds", "at least one seed is required"));
        }
        let o = &self.optimizer;
        if o.population == 0 || o.elite == 0 || o.elite > o.population {
            return Err(Error::param("optimizer.elite", "need 1 <= elite <= population"));
        }
        if o.episodes == 0 || o.validation_episodes == 0 {
            return Err(Error::param("optimizer.episodes", "must be positive"));
        }
        if !(o.init_sigma >= 0.0 && o.min_sigma >= 0.0) {
            return Err(Error::param("optimizer.init_sigma", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&o.smoothing) {
            return Err(Error::param("optimizer.smoothing", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub seed: u64,
    pub iteration: usize,
    pub steps: u64,
    pub mean_reward: f64,
    pub best_reward: f64,
    pub victim_loss: Option<f64>,
    pub adversary_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub log: Vec<TrainLogRecord>,
    /// Set when the returned policy scored below a baseline on validation.
    pub below_baseline: bool,
    /// True when no iteration could run within the budget.
    pub budget_exhausted: bool,
    pub validation_reward: f64,
    pub baseline_rewards: Vec<(PolicyKind, f64)>,
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let env = cfg.env_config();
    let o = cfg.optimizer;
    let steps_per_episode = (env.acting_epochs() * SLOTS_PER_EPOCH) as u64;
    let per_iteration = (o.population * o.episodes) as u64 * steps_per_episode;
    let per_seed_budget = cfg.budget / cfg.seeds.len() as u64;
    let iterations = (per_seed_budget / per_iteration) as usize;

    let make = |params: Vec<f64>| -> Result<Policy> {
        let mut p = Policy::learned(cfg.weights, params)?;
        p.tail_cap = cfg.tail_cap;
        Ok(p)
    };

    let mut active = [true; LEARNED_PARAMS];
    if !cfg.mev.enabled {
        for i in MEV_PARAMS {
            active[i] = false;
        }
    }

    let mut candidates = vec![Policy::planner_params(), Policy::honest_params()];
    let mut log = Vec::new();
    for &seed in &cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mean = Policy::planner_params();
        let mut sigma: Vec<f64> = active
            .iter()
            .map(|a| if *a { o.init_sigma } else { 0.0 })
            .collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut steps = 0u64;
        for it in 0..iterations {
            let batch_seed = episode_seed(seed, it as u64);
            let mut scored = Vec::with_capacity(o.population);
            for c in 0..o.population {
                let theta: Vec<f64> = if c == 0 {
                    mean.clone()
                } else {
                    mean.iter()
                        .zip(&sigma)
                        .map(|(m, s)| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            m + s * z
                        })
                        .collect()
                };
                let metrics = evaluate(&make(theta.clone())?, &env, o.episodes, batch_seed)?;
                scored.push((metrics, theta));
            }
            steps += per_iteration;
            scored.sort_by(|a, b| {
                b.0.mean_episode_reward
                    .partial_cmp(&a.0.mean_episode_reward)
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mean_reward = scored.iter().map(|s| s.0.mean_episode_reward).sum::<f64>()
                / scored.len() as f64;
            let top = &scored[0];
            log.push(TrainLogRecord {
                seed,
                iteration: it,
                steps,
                mean_reward,
                best_reward: top.0.mean_episode_reward,
                victim_loss: top.0.victim_loss,
                adversary_loss: top.0.adversary_loss,
            });
            log::info!(
                "seed {seed} iteration {it}: mean reward {mean_reward:.4}, best {:.4}",
                top.0.mean_episode_reward
            );
            if best
                .as_ref()
                .is_none_or(|(r, _)| top.0.mean_episode_reward > *r)
            {
                best = Some((top.0.mean_episode_reward, top.1.clone()));
            }
            let elite = &scored[..o.elite];
            for k in 0..LEARNED_PARAMS {
                if !active[k] {
                    continue;
                }
                let m = elite.iter().map(|e| e.1[k]).sum::<f64>() / o.elite as f64;
                let v = elite.iter().map(|e| (e.1[k] - m).powi(2)).sum::<f64>() / o.elite as f64;
                mean[k] = (1.0 - o.smoothing) * mean[k] + o.smoothing * m;
                sigma[k] = ((1.0 - o.smoothing) * sigma[k] + o.smoothing * v.sqrt()).max(o.min_sigma);
            }
        }
        if iterations > 0 {
            candidates.push(mean);
            if let Some((_, b)) = best {
                candidates.push(b);
            }
        }
    }

    let validation_seed = episode_seed(cfg.seeds[0], VALIDATION_STREAM);
    let n_val = o.validation_episodes;
    let reference = make(candidates[0].clone())?;
    let ref_rewards = episode_rewards(&reference, &env, n_val, validation_seed)?;
    let mut chosen = (mean(&ref_rewards), 0.0, reference);
    for c in candidates.into_iter().skip(1) {
        let p = make(c)?;
        let r = episode_rewards(&p, &env, n_val, validation_seed)?;
        let diff: Vec<f64> = r.iter().zip(&ref_rewards).map(|(a, b)| a - b).collect();
        let (d, se) = (mean(&diff), std_error(&diff));
        if d > SIGNIFICANCE * se && d > chosen.1 {
            chosen = (mean(&r), d, p);
        }
    }
    let (validation_reward, _, policy) = chosen;

    let mut baseline_rewards = Vec::new();
    for kind in PolicyKind::BASELINES {
        let mut b = Policy::baseline(kind, cfg.weights);
        b.tail_cap = cfg.tail_cap;
        let r = evaluate(&b, &env, o.validation_episodes, validation_seed)?.mean_episode_reward;
        baseline_rewards.push((kind, r));
    }
    let best_baseline = baseline_rewards
        .iter()
        .map(|(_, r)| *r)
        .fold(f64::NEG_INFINITY, f64::max);
    let below_baseline = validation_reward < best_baseline;
    if below_baseline {
        log::warn!(
            "learned policy reward {validation_reward:.4} is below the best baseline {best_baseline:.4}"
        );
    }
    if iterations == 0 {
        log::warn!("budget of {} slots allows no search iteration", cfg.budget);
    }
    Ok(TrainOutcome {
        policy: policy.with_stakes(cfg.stakes),
        log,
        below_baseline,
        budget_exhausted: iterations == 0,
        validation_reward,
        baseline_rewards,
    })
}
