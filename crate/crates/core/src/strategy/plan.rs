//! Lookahead features shared by the heuristic and learned policies.
//!
//! For each action the planner estimates its reward consequence under the
//! policy's weights. When no honest reveal is pending the estimate includes
//! the best continuation over the remaining adversary tail; otherwise it only
//! counts immediate gains and losses, since the mix will be re-randomized.

use crate::beacon::{Group, ProposerSchedule, RandaoMix, SLOTS_PER_EPOCH};
use crate::env::{fork_inequality, legal_actions, ActionMask, ChainState, DecisionKind};
use crate::error::{Error, Result};
use crate::oracle::enumerate_from;
use crate::reward::RewardWeights;

use super::{observe, Observation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionContext {
    pub kind: DecisionKind,
    pub obs: Observation,
    pub mask: ActionMask,
    /// Planner estimate per action in reward units. Entries of illegal
    /// actions are zero.
    pub plan: [f64; 3],
    /// No honest or target reveal remains in the epoch after this slot.
    pub pure_tail: bool,
    /// Hiding now leads to a feasible fork against the next public block,
    /// or a fork is legal right now.
    pub fork_reachable: bool,
    /// The contested public block (next one for a proposal) is the target's.
    pub contest_target: bool,
}

struct Scorer<'a> {
    w: &'a RewardWeights,
    mev: bool,
    bonus: f64,
}

impl Scorer<'_> {
    fn schedule(&self, next: &ProposerSchedule) -> f64 {
        self.w.beta * next.count(Group::Adversary) as f64
            - self.w.omega * next.count(Group::Target) as f64
            + self.w.gamma * next.adversary_tail() as f64
    }

    /// Value forgone by the misses in `reveal`, simulating pool consumption
    /// from `pending` without arrivals.
    fn miss_cost(&self, reveal: &[bool], pending: u32) -> f64 {
        let mut p = pending;
        let mut cost = 0.0;
        for r in reveal {
            let hot = self.mev && p > 0;
            if *r {
                if hot {
                    p -= 1;
                }
            } else {
                cost += if hot { 1.0 + self.bonus } else { 1.0 };
            }
        }
        cost
    }

    /// Best continuation from `base` over slots `from..32`.
    fn continuation(
        &self,
        state: &ChainState,
        base: RandaoMix,
        from: usize,
        pending: u32,
        cap: usize,
    ) -> Result<f64> {
        let beta = self.w.beta;
        match enumerate_from(state, base, from, cap, |s, r| {
            self.schedule(s) - beta * self.miss_cost(r, pending)
        }) {
            Ok(plan) => Ok(plan.objective),
            Err(Error::TailTooLong { .. }) => {
                let mut mix = base;
                for j in from..SLOTS_PER_EPOCH {
                    mix.xor_digest(state.digest(j));
                }
                let next = crate::beacon::draw_schedule(&mix, &state.stakes, state.epoch + 1);
                Ok(self.schedule(&next))
            }
            Err(e) => Err(e),
        }
    }
}

fn next_public_slot(state: &ChainState, i: usize) -> Option<usize> {
    (i + 1..SLOTS_PER_EPOCH).find(|&j| state.schedule_current.group_at(j) != Group::Adversary)
}

/// Builds the observation and planner features at the pending decision.
pub fn decision_context(
    state: &ChainState,
    weights: &RewardWeights,
    cap: usize,
) -> Result<DecisionContext> {
    let kind = state
        .decision
        .ok_or_else(|| Error::usage("no adversary decision pending"))?;
    let mev = state.mev_config.enabled;
    let obs = observe(state, mev)?;
    let mask = legal_actions(state)?;
    let sc = Scorer {
        w: weights,
        mev,
        bonus: state.mev_config.bonus,
    };
    let w = weights;
    let i = state.slot_in_epoch;
    let pure_tail = !state.honest_reveal_pending();
    let pending = state.mev.pending;
    let v_cur = state.value_current();

    let mut plan = [0.0; 3];
    let fork_reachable;
    let contest_target;
    match kind {
        DecisionKind::Proposal => {
            if pure_tail {
                let after = if mev && pending > 0 { pending - 1 } else { pending };
                let mut revealed = state.mix_pending;
                revealed.xor_digest(state.digest(i));
                plan[1] = sc.continuation(state, revealed, i + 1, after, cap)?;
                plan[0] = sc.continuation(state, state.mix_pending, i + 1, pending, cap)?
                    - w.beta * v_cur;
                plan[2] = plan[0];
                fork_reachable = false;
                contest_target = false;
            } else {
                let j = next_public_slot(state, i).expect("a public slot follows");
                let start = state.branch.as_ref().map_or(i, |b| b.start);
                fork_reachable =
                    fork_inequality(state.stakes.adversary(), j + 1 - start, 1, state.boost);
                contest_target = state.schedule_current.group_at(j) == Group::Target;
                plan[0] = -w.beta * v_cur;
                plan[1] = -w.beta * state.value_private();
                plan[2] = if fork_reachable {
                    let hidden = (j - i) as u32;
                    let v_j = if mev && pending > hidden {
                        1.0 + sc.bonus
                    } else {
                        1.0
                    };
                    let mut gain = if contest_target { w.omega * v_j } else { 0.0 };
                    if mev {
                        gain += w.beta * v_j;
                    }
                    gain
                } else {
                    -w.beta * (state.value_private() + v_cur)
                };
            }
        }
        DecisionKind::Fork => {
            let b = state.branch.as_ref().expect("fork decisions carry a branch");
            fork_reachable = mask.legal[2];
            contest_target = b
                .public
                .iter()
                .any(|&j| state.records[j].group == Group::Target);
            let target_value: f64 = b
                .public
                .iter()
                .filter(|&&j| state.records[j].group == Group::Target)
                .map(|&j| if mev { state.records[j].value } else { 1.0 })
                .sum();
            let mut fork_gain = w.omega * target_value;
            if mev {
                fork_gain += w.beta * state.value_public();
            }
            plan[1] = -w.beta * state.value_private();
            if fork_reachable {
                plan[2] = fork_gain;
            }
            if pure_tail {
                plan[1] += sc.continuation(state, state.mix_pending, i + 1, pending, cap)?;
                if fork_reachable {
                    let mut mix = state.mix_pending;
                    let mut restored = pending;
                    for &j in b.withheld.iter().chain(b.public.iter()) {
                        mix.xor_digest(state.digest(j));
                    }
                    for &j in &b.public {
                        if state.records[j].carries_mev {
                            restored = (restored + 1).min(state.mev_config.capacity);
                        }
                    }
                    plan[2] += sc.continuation(state, mix, i + 1, restored, cap)?;
                }
            }
        }
    }
    Ok(DecisionContext {
        kind,
        obs,
        mask,
        plan,
        pure_tail,
        fork_reachable,
        contest_target,
    })
}
