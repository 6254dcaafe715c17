//! Counterfactual allocation oracles and exhaustive tail enumeration.
//!
//! An oracle applies a hypothetical action at the current decision, lets
//! every later adversary slot of the epoch propose honestly, and reports the
//! resulting next-epoch allocation. While any honest or target reveal is
//! still to come the mix will be re-randomized, so the estimate is the
//! stake-proportional `(32 α_A, 32 α_T)`; otherwise the next schedule is
//! computed exactly.

use serde::{Deserialize, Serialize};

use crate::beacon::{draw_schedule, Group, ProposerSchedule, RandaoMix, SLOTS_PER_EPOCH};
use crate::env::{ChainState, DecisionKind};
use crate::error::{Error, Result};
use crate::reward::RewardWeights;

pub const DEFAULT_TAIL_CAP: usize = 12;

/// Expected next-epoch slot counts for the adversary and the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub adversary: f64,
    pub target: f64,
}

impl OracleEstimate {
    fn from_schedule(s: &ProposerSchedule) -> Self {
        OracleEstimate {
            adversary: s.count(Group::Adversary) as f64,
            target: s.count(Group::Target) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothetical {
    Prop,
    Skip,
    Fork,
}

pub fn stake_proportional(state: &ChainState) -> OracleEstimate {
    let n = SLOTS_PER_EPOCH as f64;
    OracleEstimate {
        adversary: n * state.stakes.adversary(),
        target: n * state.stakes.target(),
    }
}

/// Mix at the epoch boundary if `hyp` is taken now and the rest of the
/// adversary tail proposes honestly.
fn hypothetical_mix(state: &ChainState, hyp: Hypothetical) -> RandaoMix {
    let i = state.slot_in_epoch;
    let mut mix = state.mix_pending;
    let publish_branch = |mix: &mut RandaoMix| {
        if let Some(b) = &state.branch {
            for &j in b.withheld.iter().chain(b.public.iter()) {
                mix.xor_digest(state.digest(j));
            }
        }
    };
    match (state.decision, hyp) {
        (Some(DecisionKind::Proposal), Hypothetical::Prop) => mix.xor_digest(state.digest(i)),
        (Some(DecisionKind::Proposal), Hypothetical::Skip) => {}
        (Some(DecisionKind::Proposal), Hypothetical::Fork) => {
            publish_branch(&mut mix);
            mix.xor_digest(state.digest(i));
        }
        (Some(DecisionKind::Fork), Hypothetical::Fork) => publish_branch(&mut mix),
        _ => {}
    }
    for j in i + 1..SLOTS_PER_EPOCH {
        mix.xor_digest(state.digest(j));
    }
    mix
}

pub fn counterfactual(state: &ChainState, hyp: Hypothetical) -> Result<OracleEstimate> {
    if state.decision.is_none() {
        return Err(Error::usage("oracle queried outside an adversary decision point"));
    }
    if hyp == Hypothetical::Fork && !state.branch_active() {
        return Err(Error::usage("fork hypothetical requires an active branch"));
    }
    if state.honest_reveal_pending() {
        return Ok(stake_proportional(state));
    }
    let mix = hypothetical_mix(state, hyp);
    let next = draw_schedule(&mix, &state.stakes, state.epoch + 1);
    Ok(OracleEstimate::from_schedule(&next))
}

/// Objective scored over a candidate next schedule and the number of
/// blocks the pattern misses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailObjective {
    /// Adversary slots in `e + 1` minus blocks missed.
    AdversaryNet,
    /// Negated target slots in `e + 1`.
    SuppressTarget,
    /// The epoch reward restricted to what the tail controls.
    Weighted(RewardWeights),
}

impl TailObjective {
    pub fn score(&self, next: &ProposerSchedule, misses: usize) -> f64 {
        let a = next.count(Group::Adversary) as f64;
        let t = next.count(Group::Target) as f64;
        match self {
            TailObjective::AdversaryNet => a - misses as f64,
            TailObjective::SuppressTarget => -t,
            TailObjective::Weighted(w) => {
                w.beta * (a - misses as f64) - w.omega * t + w.gamma * next.adversary_tail() as f64
            }
        }
    }

    pub fn for_weights(w: &RewardWeights) -> Self {
        TailObjective::Weighted(*w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPlan {
    /// One flag per remaining adversary slot, current slot first:
    /// `true` reveals (proposes), `false` misses.
    pub reveal: Vec<bool>,
    pub objective: f64,
    pub misses: usize,
    pub next_adversary: usize,
    pub next_target: usize,
}

impl TailPlan {
    /// Action for the current slot: 1 to propose, 0 to miss.
    pub fn first_action(&self) -> u8 {
        match self.reveal.first() {
            Some(false) => 0,
            _ => 1,
        }
    }
}

/// Length of the pure adversary tail starting at the current slot, or
/// `None` if an honest reveal is still pending.
pub fn pure_tail_len(state: &ChainState) -> Option<usize> {
    if state.decision != Some(DecisionKind::Proposal) || state.honest_reveal_pending() {
        None
    } else {
        Some(SLOTS_PER_EPOCH - state.slot_in_epoch)
    }
}

pub fn enumerate_tail(state: &ChainState, objective: &TailObjective) -> Result<TailPlan> {
    enumerate_tail_with(state, DEFAULT_TAIL_CAP, |s, m| objective.score(s, m))
}

/// Scores every reveal/miss pattern over the remaining adversary tail.
///
/// Any private branch is treated as abandoned. Ties go to fewer misses, then
/// to the lexicographically smallest reveal vector (`false < true`).
pub fn enumerate_tail_with<F>(state: &ChainState, cap: usize, objective: F) -> Result<TailPlan>
where
    F: Fn(&ProposerSchedule, usize) -> f64,
{
    pure_tail_len(state).ok_or_else(|| {
        Error::usage("tail enumeration needs a proposal decision with no honest reveal pending")
    })?;
    enumerate_from(state, state.mix_pending, state.slot_in_epoch, cap, |s, r| {
        objective(s, r.iter().filter(|x| !**x).count())
    })
}

/// Enumerates reveal patterns for slots `from..32` of the current epoch
/// starting from `base`. The caller guarantees those slots all belong to the
/// adversary. The objective sees the resulting next schedule and the pattern.
pub fn enumerate_from<F>(
    state: &ChainState,
    base: RandaoMix,
    from: usize,
    cap: usize,
    objective: F,
) -> Result<TailPlan>
where
    F: Fn(&ProposerSchedule, &[bool]) -> f64,
{
    let t = SLOTS_PER_EPOCH.saturating_sub(from);
    if t > cap {
        return Err(Error::TailTooLong { len: t, cap });
    }
    let mut best: Option<(f64, usize, Vec<bool>, ProposerSchedule)> = None;
    for pattern in 0u32..(1u32 << t) {
        let mut mix = base;
        let reveal: Vec<bool> = (0..t).map(|k| pattern >> k & 1 == 1).collect();
        for (k, r) in reveal.iter().enumerate() {
            if *r {
                mix.xor_digest(state.digest(from + k));
            }
        }
        let misses = reveal.iter().filter(|r| !**r).count();
        let next = draw_schedule(&mix, &state.stakes, state.epoch + 1);
        let score = objective(&next, &reveal);
        let better = match &best {
            None => true,
            Some((bs, bm, br, _)) => {
                score > *bs || (score == *bs && (misses < *bm || (misses == *bm && reveal < *br)))
            }
        };
        if better {
            best = Some((score, misses, reveal, next));
        }
    }
    let (objective, misses, reveal, next) = best.expect("at least the empty pattern");
    Ok(TailPlan {
        reveal,
        objective,
        misses,
        next_adversary: next.count(Group::Adversary),
        next_target: next.count(Group::Target),
    })
}
