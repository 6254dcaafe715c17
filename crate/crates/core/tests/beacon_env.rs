use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lstsim::beacon::{
    draw_schedule, mix_update, slot_uniform, Group, RandaoMix, Reveal, StakeConfig, SLOTS_PER_EPOCH,
};
use lstsim::env::{Action, DecisionKind, Env, EnvConfig, MevConfig};
use lstsim::Error;

fn stakes() -> impl Strategy<Value = StakeConfig> {
    (0.01f64..0.5, 0.0f64..0.49).prop_map(|(a, t)| StakeConfig::new(a, t).unwrap())
}

/// Plays an episode choosing uniformly among legal actions.
fn random_episode(cfg: EnvConfig, seed: u64, action_seed: u64) -> Env {
    let mut env = Env::new(cfg, seed).unwrap().with_trace();
    let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
    while env.next_decision().is_some() {
        let legal: Vec<Action> = env.legal_actions().unwrap().legal_actions().collect();
        let a = legal[rng.random_range(0..legal.len())];
        env.step(a as u8).unwrap();
    }
    env
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_is_a_partition_of_the_epoch(seed in any::<u64>(), epoch in 0u64..1000, s in stakes()) {
        let mix = RandaoMix::genesis(seed);
        let sched = draw_schedule(&mix, &s, epoch);
        let total: usize = [Group::Adversary, Group::Target, Group::Honest]
            .iter()
            .map(|g| sched.count(*g))
            .sum();
        prop_assert_eq!(total, SLOTS_PER_EPOCH);
        for i in 0..SLOTS_PER_EPOCH {
            prop_assert_eq!(sched.group_at(i), s.select(slot_uniform(&mix, epoch, i)));
        }
        prop_assert_eq!(sched, draw_schedule(&mix, &s, epoch));
    }

    #[test]
    fn slot_uniform_stays_in_unit_interval(seed in any::<u64>(), epoch in any::<u64>(), slot in 0usize..SLOTS_PER_EPOCH) {
        let u = slot_uniform(&RandaoMix::genesis(seed), epoch, slot);
        prop_assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn mix_updates_commute(seed in any::<u64>(), e in 0u64..100, i in 0u64..32, j in 0u64..32) {
        let mix = RandaoMix::genesis(seed);
        let r1 = Reveal::derive(seed, Group::Adversary, e, i);
        let r2 = Reveal::derive(seed, Group::Honest, e, j);
        prop_assert_eq!(mix_update(mix_update(mix, &r1), &r2), mix_update(mix_update(mix, &r2), &r1));
    }

    #[test]
    fn every_slot_ends_in_exactly_one_outcome(
        seed in any::<u64>(),
        action_seed in any::<u64>(),
        alpha_a in 0.05f64..0.45,
        alpha_t in 0.0f64..0.4,
        mev in any::<bool>(),
    ) {
        let mut cfg = EnvConfig::new(StakeConfig::new(alpha_a, alpha_t).unwrap()).with_epochs(3);
        if mev {
            cfg = cfg.with_mev(MevConfig::new(0.1, 5.0, 3).unwrap());
        }
        let env = random_episode(cfg, seed, action_seed);
        prop_assert!(env.is_done());
        prop_assert_eq!(env.summaries().len(), cfg.acting_epochs());
        for s in env.summaries() {
            prop_assert_eq!(s.assigned.iter().sum::<u32>() as usize, SLOTS_PER_EPOCH);
            prop_assert_eq!(s.next_assigned.iter().sum::<u32>() as usize, SLOTS_PER_EPOCH);
            for g in 0..3 {
                let c = &s.counts;
                prop_assert_eq!(c.canonical[g] + c.sacrificed[g] + c.displaced[g], s.assigned[g]);
            }
            let a = Group::Adversary.index();
            let t = Group::Target.index();
            prop_assert_eq!(s.loss_adversary, s.assigned[a] - s.counts.canonical[a]);
            prop_assert_eq!(s.loss_target, s.counts.displaced[t]);
            prop_assert_eq!(s.counts.sacrificed[t], 0);
            prop_assert!(s.tail_control <= s.next_assigned[a]);
        }
    }

    #[test]
    fn episodes_are_reproducible(seed in any::<u64>(), action_seed in any::<u64>()) {
        let cfg = EnvConfig::new(StakeConfig::new(0.3, 0.2).unwrap()).with_epochs(2);
        let a = random_episode(cfg, seed, action_seed);
        let b = random_episode(cfg, seed, action_seed);
        prop_assert_eq!(a.summaries(), b.summaries());
        prop_assert_eq!(a.trace(), b.trace());
    }

    #[test]
    fn honest_play_sacrifices_and_displaces_nothing(seed in any::<u64>(), s in stakes()) {
        let mut env = Env::new(EnvConfig::new(s).with_epochs(2), seed).unwrap();
        while let Some(kind) = env.next_decision() {
            prop_assert_eq!(kind, DecisionKind::Proposal);
            env.step(Action::Honest as u8).unwrap();
        }
        for sm in env.summaries() {
            prop_assert_eq!(sm.counts.total_sacrificed() + sm.counts.total_displaced(), 0);
        }
    }
}

#[test]
fn illegal_action_is_rejected() {
    let cfg = EnvConfig::new(StakeConfig::new(0.3, 0.2).unwrap()).with_epochs(2);
    let mut env = Env::new(cfg, 11).unwrap();
    let mut saw_violation = false;
    while let Some(kind) = env.next_decision() {
        if kind == DecisionKind::Proposal {
            env.step(Action::Manipulate as u8).unwrap();
            continue;
        }
        let before = env.state().global_slot();
        assert!(matches!(env.step(Action::Miss as u8), Err(Error::MaskViolation { .. })));
        assert_eq!(env.state().global_slot(), before);
        saw_violation = true;
        env.step(Action::Honest as u8).unwrap();
    }
    assert!(saw_violation);
    assert!(matches!(env.step(1), Err(Error::Usage(_))));
}

#[test]
fn out_of_range_action_is_usage_error() {
    let cfg = EnvConfig::new(StakeConfig::new(0.5, 0.0).unwrap()).with_epochs(2);
    let mut env = Env::new(cfg, 3).unwrap();
    env.next_decision().unwrap();
    assert!(matches!(env.step(7), Err(Error::Usage(_))));
}
