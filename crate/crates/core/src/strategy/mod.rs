//! Adversary policies with their evaluation and training.

mod evaluate;
mod plan;
mod policy;
mod train;

pub use evaluate::{episode_rewards, episode_seed, evaluate, run_episode, EpisodeOutcome};
pub use plan::{decision_context, DecisionContext};
pub use policy::{Policy, PolicyKind, LEARNED_PARAMS, POLICY_FORMAT_VERSION};
pub use train::{train, CemSettings, TrainConfig, TrainLogRecord, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::env::ChainState;
use crate::error::Result;
use crate::oracle::{counterfactual, Hypothetical, OracleEstimate};

/// What a policy sees at a decision point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub branch: bool,
    pub prop: OracleEstimate,
    pub skip: OracleEstimate,
    /// Equal to `prop` when no branch exists.
    pub fork: OracleEstimate,
    /// `(V_priv, V_pub, V_cur)` when MEV is modelled.
    pub mev: Option<[f64; 3]>,
}

impl Observation {
    pub fn len(&self) -> usize {
        if self.mev.is_some() {
            10
        } else {
            7
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.branch as u8 as f64,
            self.prop.adversary,
            self.prop.target,
            self.skip.adversary,
            self.skip.target,
            self.fork.adversary,
            self.fork.target,
        ];
        if let Some(m) = self.mev {
            v.extend_from_slice(&m);
        }
        v
    }

    /// Oracle pair associated with an action index: skip for `0`, prop for
    /// `1`, fork for `2`.
    pub fn pair(&self, action: usize) -> OracleEstimate {
        match action {
            0 => self.skip,
            1 => self.prop,
            _ => self.fork,
        }
    }
}

/// Encodes the state at a decision point.
pub fn observe(state: &ChainState, mev_enabled: bool) -> Result<Observation> {
    let prop = counterfactual(state, Hypothetical::Prop)?;
    let skip = counterfactual(state, Hypothetical::Skip)?;
    let fork = if state.branch_active() {
        counterfactual(state, Hypothetical::Fork)?
    } else {
        prop
    };
    Ok(Observation {
        branch: state.branch_active(),
        prop,
        skip,
        fork,
        mev: mev_enabled.then(|| {
            [
                state.value_private(),
                state.value_public(),
                state.value_current(),
            ]
        }),
    })
}
