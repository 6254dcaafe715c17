//! Episode state machine with private branches, forks against the public
//! chain, and an MEV opportunity pool.
//!
//! The adversary is consulted at two kinds of decision point:
//!
//! * [`DecisionKind::Proposal`]: its own proposal slot. `0` misses the slot,
//!   `1` proposes on the public head (abandoning any private branch), `2`
//!   builds the block privately (starting or extending a branch).
//! * [`DecisionKind::Fork`]: right after an honest block lands on the public
//!   chain while a branch exists. `1` abandons the branch, `2` publishes it and
//!   displaces the competing public segment, legal only when
//!   [`fork_feasible`] holds.
//!
//! Honest and target proposers act automatically. Branches never cross an
//! epoch boundary: a branch still private when the epoch closes is abandoned
//! before the mix is finalized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beacon::{
    draw_schedule, Group, ProposerSchedule, RandaoMix, Reveal, RevealDigest, StakeConfig,
    SLOTS_PER_EPOCH,
};
use crate::error::{Error, Result};
use crate::oracle::OracleEstimate;
use crate::reward::{EpochSummary, GroupCounts};

/// Default proposer boost, in units of one slot's committee weight.
pub const DEFAULT_BOOST: f64 = 0.4;

const FEASIBILITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MevConfig {
    pub enabled: bool,
    /// Per-slot arrival probability of a high-value opportunity.
    pub arrival_prob: f64,
    /// Extra value of a block that consumes an opportunity.
    pub bonus: f64,
    pub capacity: u32,
}

impl Default for MevConfig {
    fn default() -> Self {
        MevConfig::disabled()
    }
}

impl MevConfig {
    pub const DEFAULT_CAPACITY: u32 = 3;

    pub fn disabled() -> Self {
        MevConfig {
            enabled: false,
            arrival_prob: 0.0,
            bonus: 0.0,
            capacity: Self::DEFAULT_CAPACITY,
        }
    }

    pub fn new(arrival_prob: f64, bonus: f64, capacity: u32) -> Result<Self> {
        let cfg = MevConfig {
            enabled: true,
            arrival_prob,
            bonus,
            capacity,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.arrival_prob) {
            return Err(Error::param("arrival_prob", "must lie in [0, 1]"));
        }
        if self.enabled && !(self.bonus > 0.0) {
            return Err(Error::param("bonus", "must be positive when MEV is enabled"));
        }
        if self.capacity < 1 {
            return Err(Error::param("capacity", "must be at least 1"));
        }
        Ok(())
    }
}

/// Pending high-value opportunities, `0 ..= capacity`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MevPool {
    pub pending: u32,
}

impl MevPool {
    /// Value a block produced now would carry, without consuming anything.
    pub fn peek_value(&self, cfg: &MevConfig) -> f64 {
        if cfg.enabled && self.pending > 0 {
            1.0 + cfg.bonus
        } else {
            1.0
        }
    }

    /// Produces a block: returns its value and whether it consumed an
    /// opportunity.
    pub fn consume(&mut self, cfg: &MevConfig) -> (f64, bool) {
        if cfg.enabled && self.pending > 0 {
            self.pending -= 1;
            (1.0 + cfg.bonus, true)
        } else {
            (1.0, false)
        }
    }

    /// Returns a displaced block's opportunity. `false` when the pool is full
    /// and the opportunity is dropped.
    pub fn restore(&mut self, cfg: &MevConfig) -> bool {
        if self.pending < cfg.capacity {
            self.pending += 1;
            true
        } else {
            false
        }
    }
}

/// One slot of Bernoulli arrivals, clamped at capacity.
pub fn advance_mev<R: Rng + ?Sized>(pool: MevPool, cfg: &MevConfig, rng: &mut R) -> MevPool {
    if !cfg.enabled {
        return pool;
    }
    let arrived = rng.random_bool(cfg.arrival_prob);
    MevPool {
        pending: (pool.pending + arrived as u32).min(cfg.capacity),
    }
}

/// Value of the next canonical block and the pool after it consumes.
pub fn block_value(pool: MevPool, cfg: &MevConfig) -> (f64, MevPool) {
    let mut p = pool;
    let (v, _) = p.consume(cfg);
    (v, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Miss = 0,
    Honest = 1,
    Manipulate = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Miss, Action::Honest, Action::Manipulate];

    pub fn from_index(a: u8) -> Result<Action> {
        match a {
            0 => Ok(Action::Miss),
            1 => Ok(Action::Honest),
            2 => Ok(Action::Manipulate),
            _ => Err(Error::usage(format!("action {a} outside {{0, 1, 2}}"))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask {
    pub legal: [bool; 3],
}

impl ActionMask {
    pub fn allows(&self, a: Action) -> bool {
        self.legal[a.index()]
    }

    pub fn legal_actions(&self) -> impl Iterator<Item = Action> + '_ {
        Action::ALL.into_iter().filter(|a| self.allows(*a))
    }
}

impl std::fmt::Display for ActionMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let legal: Vec<String> = self.legal_actions().map(|a| a.index().to_string()).collect();
        write!(f, "{{{}}}", legal.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionKind {
    Proposal,
    Fork,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotStatus {
    Unresolved,
    Canonical,
    Missed,
    Withheld,
    Abandoned,
    Displaced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub group: Group,
    pub status: SlotStatus,
    pub value: f64,
    pub carries_mev: bool,
    pub action: Option<u8>,
    pub fork_action: Option<u8>,
}

/// A private adversary branch and the public blocks competing with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Slot index within the epoch where withholding began.
    pub start: usize,
    pub withheld: Vec<usize>,
    pub public: Vec<usize>,
    pub value_private: f64,
    pub value_public: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub stakes: StakeConfig,
    pub mev: MevConfig,
    pub boost: f64,
    /// Epochs per episode counting the final realization epoch: the adversary
    /// acts in `epochs - 1` epochs and the schedule of the last is measured.
    pub epochs: usize,
}

impl EnvConfig {
    pub fn new(stakes: StakeConfig) -> Self {
        EnvConfig {
            stakes,
            mev: MevConfig::disabled(),
            boost: DEFAULT_BOOST,
            epochs: 2,
        }
    }

    pub fn with_mev(mut self, mev: MevConfig) -> Self {
        self.mev = mev;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_boost(mut self, boost: f64) -> Self {
        self.boost = boost;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.mev.validate()?;
        if self.epochs < 2 {
            return Err(Error::param("epochs", "an episode needs at least 2 epochs"));
        }
        if !(self.boost >= 0.0) {
            return Err(Error::param("boost", "must be non-negative"));
        }
        Ok(())
    }

    pub fn acting_epochs(&self) -> usize {
        self.epochs - 1
    }
}

/// Full environment state at a point in the episode.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub seed: u64,
    pub stakes: StakeConfig,
    pub mev_config: MevConfig,
    pub boost: f64,
    pub epoch: u64,
    pub slot_in_epoch: usize,
    pub schedule_current: ProposerSchedule,
    pub schedule_next: Option<ProposerSchedule>,
    pub mix_pending: RandaoMix,
    pub branch: Option<Branch>,
    pub mev: MevPool,
    pub records: Vec<SlotRecord>,
    pub counters: GroupCounts,
    pub value_delta: [f64; 3],
    pub decision: Option<DecisionKind>,
    digests: [RevealDigest; SLOTS_PER_EPOCH],
}

impl ChainState {
    pub fn global_slot(&self) -> u64 {
        self.epoch * SLOTS_PER_EPOCH as u64 + self.slot_in_epoch as u64
    }

    pub fn branch_active(&self) -> bool {
        self.branch.is_some()
    }

    pub fn withheld_count(&self) -> usize {
        self.branch.as_ref().map_or(0, |b| b.withheld.len())
    }

    pub fn public_competing_count(&self) -> usize {
        self.branch.as_ref().map_or(0, |b| b.public.len())
    }

    /// Slots elapsed since the branch started, measured at the current
    /// decision: the start of this slot for a proposal, the start of the
    /// next slot for a fork decision.
    pub fn withheld_span(&self) -> usize {
        let now = match self.decision {
            Some(DecisionKind::Fork) => self.slot_in_epoch + 1,
            _ => self.slot_in_epoch,
        };
        self.branch.as_ref().map_or(0, |b| now - b.start)
    }

    pub fn value_private(&self) -> f64 {
        self.branch.as_ref().map_or(0.0, |b| b.value_private)
    }

    pub fn value_public(&self) -> f64 {
        self.branch.as_ref().map_or(0.0, |b| b.value_public)
    }

    /// Value of a block produced at the current slot right now.
    pub fn value_current(&self) -> f64 {
        self.mev.peek_value(&self.mev_config)
    }

    pub fn digest(&self, slot_in_epoch: usize) -> &RevealDigest {
        &self.digests[slot_in_epoch]
    }

    /// Slots after the current one in this epoch still to be proposed by a
    /// non-adversary group.
    pub fn honest_reveal_pending(&self) -> bool {
        self.schedule_current.assignments[self.slot_in_epoch + 1..]
            .iter()
            .any(|g| *g != Group::Adversary)
    }

    fn reset_epoch(&mut self) {
        let epoch = self.epoch;
        let seed = self.seed;
        for (i, d) in self.digests.iter_mut().enumerate() {
            let g = self.schedule_current.assignments[i];
            *d = Reveal::derive(seed, g, epoch, epoch * SLOTS_PER_EPOCH as u64 + i as u64).digest();
        }
        self.records = self
            .schedule_current
            .assignments
            .iter()
            .map(|g| SlotRecord {
                group: *g,
                status: SlotStatus::Unresolved,
                value: 0.0,
                carries_mev: false,
                action: None,
                fork_action: None,
            })
            .collect();
        self.counters = GroupCounts::default();
        self.value_delta = [0.0; 3];
        self.schedule_next = None;
    }
}

/// `α · span ≥ (1 − α) · h + boost`, in per-slot committee-weight units.
pub fn fork_feasible(state: &ChainState, boost: f64) -> Result<bool> {
    if !state.branch_active() {
        return Err(Error::usage("fork feasibility queried without an active branch"));
    }
    Ok(fork_inequality(
        state.stakes.adversary(),
        state.withheld_span(),
        state.public_competing_count(),
        boost,
    ))
}

pub fn fork_inequality(alpha: f64, span: usize, public: usize, boost: f64) -> bool {
    alpha * span as f64 + FEASIBILITY_EPS >= (1.0 - alpha) * public as f64 + boost
}

pub fn legal_actions(state: &ChainState) -> Result<ActionMask> {
    match state.decision {
        None => Err(Error::usage("no adversary decision pending at this slot")),
        Some(DecisionKind::Proposal) => Ok(ActionMask {
            legal: [true, true, true],
        }),
        Some(DecisionKind::Fork) => Ok(ActionMask {
            legal: [false, true, fork_feasible(state, state.boost)?],
        }),
    }
}

/// What happened while resolving one decision.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotEvents {
    pub sacrificed: u32,
    pub displaced: u32,
    pub published: u32,
    pub completed_epochs: Vec<EpochSummary>,
}

/// One line of the episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: u64,
    pub group: Group,
    pub action: Option<u8>,
    pub fork_action: Option<u8>,
    pub canonical: bool,
    pub displaced: bool,
    pub value: f64,
}

/// Cumulative MEV bookkeeping over an episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MevLedger {
    pub admitted: u64,
    pub dropped: u64,
    pub finalized_canonical: u64,
}

#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    state: ChainState,
    rng: ChaCha8Rng,
    summaries: Vec<EpochSummary>,
    trace: Option<Vec<TraceRecord>>,
    ledger: MevLedger,
    done: bool,
}

impl Env {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let genesis = RandaoMix::genesis(seed);
        let schedule = draw_schedule(&genesis, &cfg.stakes, 0);
        Ok(Self::from_parts(cfg, seed, genesis, schedule))
    }

    /// Starts an episode from an explicit mix and first-epoch schedule.
    pub fn from_parts(cfg: EnvConfig, seed: u64, mix: RandaoMix, schedule: ProposerSchedule) -> Self {
        let mut state = ChainState {
            seed,
            stakes: cfg.stakes,
            mev_config: cfg.mev,
            boost: cfg.boost,
            epoch: schedule.epoch,
            slot_in_epoch: 0,
            schedule_current: schedule,
            schedule_next: None,
            mix_pending: mix,
            branch: None,
            mev: MevPool::default(),
            records: Vec::new(),
            counters: GroupCounts::default(),
            value_delta: [0.0; 3],
            decision: None,
            digests: [RevealDigest([0; 32]); SLOTS_PER_EPOCH],
        };
        state.reset_epoch();
        Env {
            cfg,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x4d45_565f_504f_4f4c),
            summaries: Vec::new(),
            trace: None,
            ledger: MevLedger::default(),
            done: false,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn summaries(&self) -> &[EpochSummary] {
        &self.summaries
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    pub fn legal_actions(&self) -> Result<ActionMask> {
        legal_actions(&self.state)
    }

    /// Runs automatic slots until the adversary must decide. Returns `None`
    /// once the episode is over.
    pub fn next_decision(&mut self) -> Option<DecisionKind> {
        let mut sink = Vec::new();
        self.advance(&mut sink)
    }

    fn advance(&mut self, completed: &mut Vec<EpochSummary>) -> Option<DecisionKind> {
        loop {
            if self.done {
                return None;
            }
            if let Some(d) = self.state.decision {
                return Some(d);
            }
            let i = self.state.slot_in_epoch;
            let group = self.state.schedule_current.group_at(i);
            if group == Group::Adversary {
                self.state.decision = Some(DecisionKind::Proposal);
                return Some(DecisionKind::Proposal);
            }
            self.produce_public_block(i);
            self.arrivals();
            if let Some(b) = self.state.branch.as_mut() {
                b.public.push(i);
                b.value_public += self.state.records[i].value;
                self.state.decision = Some(DecisionKind::Fork);
                return Some(DecisionKind::Fork);
            }
            if let Some(s) = self.next_slot() {
                completed.push(s);
            }
        }
    }

    /// Applies an adversary action at the pending decision point.
    pub fn step(&mut self, action: u8) -> Result<SlotEvents> {
        let kind = self
            .state
            .decision
            .ok_or_else(|| Error::usage("step called with no pending decision"))?;
        let a = Action::from_index(action)?;
        let mask = self.legal_actions()?;
        if !mask.allows(a) {
            return Err(Error::MaskViolation {
                action,
                mask: mask.to_string(),
            });
        }
        let mut ev = SlotEvents::default();
        let i = self.state.slot_in_epoch;
        match kind {
            DecisionKind::Proposal => {
                self.state.records[i].action = Some(action);
                match a {
                    Action::Miss => {
                        let v = self.state.value_current();
                        let rec = &mut self.state.records[i];
                        rec.status = SlotStatus::Missed;
                        rec.value = v;
                        self.state.counters.sacrificed[Group::Adversary.index()] += 1;
                        self.state.value_delta[Group::Adversary.index()] -= v;
                        ev.sacrificed += 1;
                    }
                    Action::Honest => {
                        ev.sacrificed += self.abandon_branch();
                        self.produce_public_block(i);
                    }
                    Action::Manipulate => {
                        let (v, mev) = self.state.mev.consume(&self.state.mev_config);
                        let rec = &mut self.state.records[i];
                        rec.status = SlotStatus::Withheld;
                        rec.value = v;
                        rec.carries_mev = mev;
                        let b = self.state.branch.get_or_insert_with(|| Branch {
                            start: i,
                            withheld: Vec::new(),
                            public: Vec::new(),
                            value_private: 0.0,
                            value_public: 0.0,
                        });
                        b.withheld.push(i);
                        b.value_private += v;
                    }
                }
                self.arrivals();
            }
            DecisionKind::Fork => {
                self.state.records[i].fork_action = Some(action);
                match a {
                    Action::Honest => ev.sacrificed += self.abandon_branch(),
                    Action::Manipulate => {
                        let (published, displaced) = self.execute_fork();
                        ev.published += published;
                        ev.displaced += displaced;
                    }
                    Action::Miss => unreachable!("masked"),
                }
            }
        }
        self.state.decision = None;
        if let Some(s) = self.next_slot() {
            ev.completed_epochs.push(s);
        }
        let mut more = Vec::new();
        self.advance(&mut more);
        ev.completed_epochs.extend(more);
        Ok(ev)
    }

    fn produce_public_block(&mut self, i: usize) {
        let (v, mev) = self.state.mev.consume(&self.state.mev_config);
        let d = *self.state.digest(i);
        self.state.mix_pending.xor_digest(&d);
        let rec = &mut self.state.records[i];
        rec.status = SlotStatus::Canonical;
        rec.value = v;
        rec.carries_mev = mev;
        self.state.counters.canonical[rec.group.index()] += 1;
    }

    fn arrivals(&mut self) {
        if !self.state.mev_config.enabled {
            return;
        }
        let before = self.state.mev.pending;
        self.state.mev = advance_mev(self.state.mev, &self.state.mev_config, &mut self.rng);
        self.ledger.admitted += (self.state.mev.pending - before) as u64;
    }

    fn return_opportunity(&mut self) {
        if !self.state.mev.restore(&self.state.mev_config) {
            self.ledger.dropped += 1;
        }
    }

    /// Discards the private branch. Returns the number of blocks lost.
    fn abandon_branch(&mut self) -> u32 {
        let Some(b) = self.state.branch.take() else {
            return 0;
        };
        for &j in &b.withheld {
            let rec = &mut self.state.records[j];
            rec.status = SlotStatus::Abandoned;
            let mev = rec.carries_mev;
            self.state.counters.sacrificed[Group::Adversary.index()] += 1;
            self.state.value_delta[Group::Adversary.index()] -= rec.value;
            if mev {
                self.return_opportunity();
            }
        }
        b.withheld.len() as u32
    }

    fn execute_fork(&mut self) -> (u32, u32) {
        let b = self.state.branch.take().expect("fork requires a branch");
        for &j in &b.public {
            let d = *self.state.digest(j);
            self.state.mix_pending.xor_digest(&d);
            let rec = &mut self.state.records[j];
            rec.status = SlotStatus::Displaced;
            let g = rec.group.index();
            let (v, mev) = (rec.value, rec.carries_mev);
            self.state.counters.canonical[g] -= 1;
            self.state.counters.displaced[g] += 1;
            self.state.value_delta[Group::Adversary.index()] += v;
            self.state.value_delta[g] -= v;
            if mev {
                self.return_opportunity();
            }
        }
        for &j in &b.withheld {
            let d = *self.state.digest(j);
            self.state.mix_pending.xor_digest(&d);
            self.state.records[j].status = SlotStatus::Canonical;
            self.state.counters.canonical[Group::Adversary.index()] += 1;
        }
        (b.withheld.len() as u32, b.public.len() as u32)
    }

    fn next_slot(&mut self) -> Option<EpochSummary> {
        self.state.slot_in_epoch += 1;
        if self.state.slot_in_epoch < SLOTS_PER_EPOCH {
            return None;
        }
        Some(self.close_epoch())
    }

    fn close_epoch(&mut self) -> EpochSummary {
        self.abandon_branch();
        let st = &mut self.state;
        let next = draw_schedule(&st.mix_pending, &st.stakes, st.epoch + 1);
        st.schedule_next = Some(next);

        let mut canonical_value = [0.0; 3];
        let mut assigned = [0u32; 3];
        for r in &st.records {
            assigned[r.group.index()] += 1;
            if r.status == SlotStatus::Canonical {
                canonical_value[r.group.index()] += r.value;
                if r.carries_mev {
                    self.ledger.finalized_canonical += 1;
                }
            }
        }
        let mut next_assigned = [0u32; 3];
        for g in next.assignments {
            next_assigned[g.index()] += 1;
        }
        let c = st.counters;
        let a = Group::Adversary;
        let t = Group::Target;
        let summary = EpochSummary {
            epoch: st.epoch,
            expected_next: OracleEstimate {
                adversary: next_assigned[a.index()] as f64,
                target: next_assigned[t.index()] as f64,
            },
            loss_adversary: c.sacrificed(a) + c.displaced(a),
            loss_target: c.displaced(t),
            tail_control: next.adversary_tail() as u32,
            value_delta_adversary: st.value_delta[a.index()],
            value_delta_target: st.value_delta[t.index()],
            counts: c,
            canonical_value,
            assigned,
            next_assigned,
        };

        if let Some(trace) = self.trace.as_mut() {
            let base = st.epoch * SLOTS_PER_EPOCH as u64;
            trace.extend(st.records.iter().enumerate().map(|(i, r)| TraceRecord {
                slot: base + i as u64,
                group: r.group,
                action: r.action,
                fork_action: r.fork_action,
                canonical: r.status == SlotStatus::Canonical,
                displaced: r.status == SlotStatus::Displaced,
                value: r.value,
            }));
        }

        self.summaries.push(summary.clone());
        if self.summaries.len() >= self.cfg.acting_epochs() {
            self.done = true;
        } else {
            let st = &mut self.state;
            st.epoch += 1;
            st.slot_in_epoch = 0;
            st.schedule_current = next;
            st.reset_epoch();
        }
        summary
    }

    /// Cumulative MEV bookkeeping, plus the number of opportunities carried
    /// by canonical or withheld blocks of the unfinished epoch.
    pub fn mev_ledger(&self) -> (MevLedger, u64) {
        let live: u64 = if self.done {
            0
        } else {
            self.state
                .records
                .iter()
                .filter(|r| {
                    r.carries_mev
                        && matches!(r.status, SlotStatus::Canonical | SlotStatus::Withheld)
                })
                .count() as u64
        };
        (self.ledger, live)
    }
}
