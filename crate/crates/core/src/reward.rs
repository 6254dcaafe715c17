//! Epoch rewards and attack metrics.
//!
//! `L_tail` is the run of adversary slots closing epoch `e + 1`. Adversary
//! losses count every adversary-assigned slot of epoch `e` whose block never
//! became canonical, whatever the cause; target losses count
//! target blocks displaced by an adversarial fork. Value deltas credit the
//! full value of a displaced block to the adversary and debit it from the
//! displaced group; sacrificed adversary blocks debit their value.

use serde::{Deserialize, Serialize};

use crate::beacon::{Group, StakeConfig, SLOTS_PER_EPOCH};
use crate::error::{Error, Result};
use crate::oracle::OracleEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub beta: f64,
    pub omega: f64,
    pub gamma: f64,
}

impl RewardWeights {
    /// Self-optimization preset.
    pub const SELF_OPTIMIZATION: RewardWeights = RewardWeights {
        beta: 1.0,
        omega: 0.0,
        gamma: 0.5,
    };

    /// Pure-griefing preset.
    pub const GRIEFING: RewardWeights = RewardWeights {
        beta: 0.0,
        omega: 5.0,
        gamma: 1.5,
    };

    pub fn new(beta: f64, omega: f64, gamma: f64) -> Result<Self> {
        let w = RewardWeights { beta, omega, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("omega", self.omega), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "weights must be finite and non-negative"));
            }
        }
        if self.beta == 0.0 && self.omega == 0.0 && self.gamma == 0.0 {
            return Err(Error::param("beta", "at least one weight must be positive"));
        }
        Ok(())
    }

    /// True when the objective values harm to the target more than own gain.
    pub fn is_griefing(&self) -> bool {
        self.omega > 0.0 && self.beta == 0.0
    }
}

/// Per-group slot outcome counts for one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub canonical: [u32; 3],
    pub sacrificed: [u32; 3],
    pub displaced: [u32; 3],
}

impl GroupCounts {
    pub fn canonical(&self, g: Group) -> u32 {
        self.canonical[g.index()]
    }
    pub fn sacrificed(&self, g: Group) -> u32 {
        self.sacrificed[g.index()]
    }
    pub fn displaced(&self, g: Group) -> u32 {
        self.displaced[g.index()]
    }
    pub fn total_sacrificed(&self) -> u32 {
        self.sacrificed.iter().sum()
    }
    pub fn total_displaced(&self) -> u32 {
        self.displaced.iter().sum()
    }
    pub fn total_canonical(&self) -> u32 {
        self.canonical.iter().sum()
    }
}

/// Everything the reward and metrics need about one finished epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: u64,
    /// Allocation of epoch `e + 1`. The mix is final at the boundary, so
    /// these are the exact slot counts of the next schedule.
    pub expected_next: OracleEstimate,
    pub loss_adversary: u32,
    pub loss_target: u32,
    pub tail_control: u32,
    pub value_delta_adversary: f64,
    pub value_delta_target: f64,
    pub counts: GroupCounts,
    /// Value of canonical blocks per group.
    pub canonical_value: [f64; 3],
    /// Slots of epoch `e` assigned per group.
    pub assigned: [u32; 3],
    /// Slots of epoch `e + 1` assigned per group.
    pub next_assigned: [u32; 3],
}

pub fn epoch_reward(w: &RewardWeights, s: &EpochSummary) -> f64 {
    w.beta * (s.expected_next.adversary - s.loss_adversary as f64)
        - w.omega * (s.expected_next.target - s.loss_target as f64)
        + w.gamma * s.tail_control as f64
}

pub fn epoch_reward_mev(w: &RewardWeights, s: &EpochSummary) -> f64 {
    w.beta * (s.expected_next.adversary + s.value_delta_adversary)
        - w.omega * (s.expected_next.target + s.value_delta_target)
        + w.gamma * s.tail_control as f64
}

/// Relative deviation of a realized allocation from `32 * alpha`.
pub fn relative_loss(realized_slots: f64, alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::UndefinedMetric(
            "relative loss of a zero-stake group".into(),
        ));
    }
    let ideal = SLOTS_PER_EPOCH as f64 * alpha;
    Ok((realized_slots - ideal) / ideal)
}

/// `(victim_loss, adversary_loss)` from mean realized slot counts.
pub fn allocation_losses(
    adversary_slots: f64,
    target_slots: f64,
    stakes: &StakeConfig,
) -> Result<(f64, f64)> {
    Ok((
        relative_loss(target_slots, stakes.target())?,
        relative_loss(adversary_slots, stakes.adversary())?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainQuality {
    pub sacrificed: f64,
    pub displaced: f64,
}

impl ChainQuality {
    pub fn total(&self) -> f64 {
        self.sacrificed + self.displaced
    }
}

/// Fraction of slots whose block was sacrificed or fork-displaced.
pub fn chain_quality_impact(sacrificed: u64, displaced: u64, total_slots: u64) -> ChainQuality {
    if total_slots == 0 {
        return ChainQuality {
            sacrificed: 0.0,
            displaced: 0.0,
        };
    }
    let n = total_slots as f64;
    ChainQuality {
        sacrificed: sacrificed as f64 / n,
        displaced: displaced as f64 / n,
    }
}

/// Aggregated evaluation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub victim_loss: Option<f64>,
    pub adversary_loss: f64,
    pub chain_quality_impact: f64,
    pub sacrificed_fraction: f64,
    pub displaced_fraction: f64,
    pub mean_adversary_slots: f64,
    pub mean_target_slots: f64,
    pub se_adversary_slots: f64,
    pub se_target_slots: f64,
    pub mean_episode_reward: f64,
    pub se_episode_reward: f64,
    /// Realized canonical value per acting epoch, adversary and target.
    pub mean_adversary_value: f64,
    pub mean_target_value: f64,
    /// Per acting epoch value deltas (fork gains, sacrifice losses).
    pub mean_value_delta_adversary: f64,
    pub mean_value_delta_target: f64,
    /// Mean value of a canonical block over the evaluation.
    pub mean_block_value: f64,
    pub episodes: usize,
    pub realized_epochs: usize,
}

impl AttackMetrics {
    pub fn adversary_share(&self) -> f64 {
        self.mean_adversary_slots / SLOTS_PER_EPOCH as f64
    }

    /// Adversary value per epoch relative to the stake-proportional
    /// expectation `32 α_A v̄`, minus one.
    pub fn adversary_value_gain(&self, stakes: &StakeConfig) -> f64 {
        let v = self.mean_block_value;
        let ideal = SLOTS_PER_EPOCH as f64 * stakes.adversary() * v;
        (self.mean_adversary_slots * v + self.mean_value_delta_adversary) / ideal - 1.0
    }

    /// Target value per epoch relative to `32 α_T v̄`, minus one. Undefined
    /// without target stake.
    pub fn target_value_change(&self, stakes: &StakeConfig) -> Option<f64> {
        let v = self.mean_block_value;
        let ideal = SLOTS_PER_EPOCH as f64 * stakes.target() * v;
        (ideal > 0.0).then(|| (self.mean_target_slots * v + self.mean_value_delta_target) / ideal - 1.0)
    }
}
