//! Leader election: the running randomness mix and stake-weighted proposer
//! scheduling.
//!
//! The mix is an XOR accumulator over SHA-256 digests of proposer reveals.
//! A schedule for epoch `e + 1` is a pure function of the mix at the end of
//! epoch `e`, the stake split, and the epoch index. Every slot draws a value
//! in `[0, 1)` from `SHA-256(mix || epoch || slot)` and picks its group by
//! inverse CDF over (adversary, target, honest), in that order.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SLOTS_PER_EPOCH: usize = 32;

/// Hash used everywhere in the beacon. Recorded in result metadata.
pub const HASH_NAME: &str = "sha256";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Adversary,
    Target,
    Honest,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Adversary, Group::Target, Group::Honest];

    pub fn index(self) -> usize {
        match self {
            Group::Adversary => 0,
            Group::Target => 1,
            Group::Honest => 2,
        }
    }

    fn tag(self) -> u8 {
        self.index() as u8
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Adversary => "adversary",
            Group::Target => "target",
            Group::Honest => "honest",
        })
    }
}

/// Relative stake of the adversary and the target pool. The residual honest
/// stake is implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStakes", into = "RawStakes")]
pub struct StakeConfig {
    alpha_adversary: f64,
    alpha_target: f64,
}

#[derive(Serialize, Deserialize)]
struct RawStakes {
    alpha_adversary: f64,
    alpha_target: f64,
}

impl TryFrom<RawStakes> for StakeConfig {
    type Error = Error;
    fn try_from(raw: RawStakes) -> Result<Self> {
        StakeConfig::new(raw.alpha_adversary, raw.alpha_target)
    }
}

impl From<StakeConfig> for RawStakes {
    fn from(s: StakeConfig) -> Self {
        RawStakes {
            alpha_adversary: s.alpha_adversary,
            alpha_target: s.alpha_target,
        }
    }
}

impl StakeConfig {
    pub fn new(alpha_adversary: f64, alpha_target: f64) -> Result<Self> {
        if !(alpha_adversary > 0.0 && alpha_adversary < 1.0) {
            return Err(Error::param("alpha_adversary", "must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&alpha_target) {
            return Err(Error::param("alpha_target", "must lie in [0, 1)"));
        }
        if alpha_adversary + alpha_target >= 1.0 {
            return Err(Error::param(
                "alpha_target",
                "alpha_adversary + alpha_target must be < 1",
            ));
        }
        Ok(StakeConfig {
            alpha_adversary,
            alpha_target,
        })
    }

    pub fn adversary(&self) -> f64 {
        self.alpha_adversary
    }

    pub fn target(&self) -> f64 {
        self.alpha_target
    }

    pub fn honest(&self) -> f64 {
        1.0 - self.alpha_adversary - self.alpha_target
    }

    pub fn of(&self, group: Group) -> f64 {
        match group {
            Group::Adversary => self.adversary(),
            Group::Target => self.target(),
            Group::Honest => self.honest(),
        }
    }

    /// Group selected by a uniform draw `u` in `[0, 1)`.
    pub fn select(&self, u: f64) -> Group {
        if u < self.alpha_adversary {
            Group::Adversary
        } else if u < self.alpha_adversary + self.alpha_target {
            Group::Target
        } else {
            Group::Honest
        }
    }
}

fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// 256-bit randomness accumulator.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandaoMix(pub [u8; 32]);

impl fmt::Debug for RandaoMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RandaoMix({})", hex(&self.0[..8]))
    }
}

impl RandaoMix {
    /// Genesis mix of an episode.
    pub fn genesis(seed: u64) -> Self {
        RandaoMix(sha256(&[b"genesis", &seed.to_le_bytes()]))
    }

    pub fn xor_digest(&mut self, digest: &RevealDigest) {
        for (m, d) in self.0.iter_mut().zip(digest.0.iter()) {
            *m ^= d;
        }
    }
}

/// A proposer's reveal, derived from `(seed, group, epoch, slot)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Reveal(pub [u8; 32]);

impl fmt::Debug for Reveal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Reveal({})", hex(&self.0[..8]))
    }
}

/// `H(reveal)`, the quantity actually XORed into the mix.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RevealDigest(pub [u8; 32]);

impl Reveal {
    pub fn derive(seed: u64, group: Group, epoch: u64, slot: u64) -> Self {
        Reveal(sha256(&[
            b"reveal",
            &seed.to_le_bytes(),
            &[group.tag()],
            &epoch.to_le_bytes(),
            &slot.to_le_bytes(),
        ]))
    }

    pub fn digest(&self) -> RevealDigest {
        RevealDigest(sha256(&[&self.0]))
    }
}

/// `mix ⊕ H(reveal)`. Applying the same reveal twice restores the mix.
pub fn mix_update(mix: RandaoMix, reveal: &Reveal) -> RandaoMix {
    let mut out = mix;
    out.xor_digest(&reveal.digest());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposerSchedule {
    pub epoch: u64,
    pub assignments: [Group; SLOTS_PER_EPOCH],
}

impl ProposerSchedule {
    pub fn count(&self, group: Group) -> usize {
        self.assignments.iter().filter(|g| **g == group).count()
    }

    /// Length of the run of adversary slots closing the epoch.
    pub fn adversary_tail(&self) -> usize {
        self.assignments
            .iter()
            .rev()
            .take_while(|g| **g == Group::Adversary)
            .count()
    }

    pub fn group_at(&self, slot_in_epoch: usize) -> Group {
        self.assignments[slot_in_epoch]
    }
}

/// Uniform value in `[0, 1)` for one slot of the schedule.
pub fn slot_uniform(mix: &RandaoMix, epoch: u64, slot_in_epoch: usize) -> f64 {
    let h = sha256(&[&mix.0, &epoch.to_le_bytes(), &(slot_in_epoch as u64).to_le_bytes()]);
    let mut word = [0u8; 8];
    word.copy_from_slice(&h[..8]);
    (u64::from_le_bytes(word) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn draw_schedule(mix: &RandaoMix, stakes: &StakeConfig, epoch: u64) -> ProposerSchedule {
    let mut assignments = [Group::Honest; SLOTS_PER_EPOCH];
    for (i, a) in assignments.iter_mut().enumerate() {
        *a = stakes.select(slot_uniform(mix, epoch, i));
    }
    ProposerSchedule { epoch, assignments }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
