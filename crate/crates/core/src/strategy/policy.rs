use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beacon::StakeConfig;
use crate::env::{ChainState, DecisionKind};
use crate::error::{Error, Result};
use crate::oracle::{
    counterfactual, enumerate_tail_with, pure_tail_len, Hypothetical, TailObjective, DEFAULT_TAIL_CAP,
};
use crate::reward::RewardWeights;

use super::plan::{decision_context, DecisionContext};

pub const POLICY_FORMAT_VERSION: u32 = 1;

/// Length of the learned parameter vector: three shared oracle/planner
/// weights, then eight context weights for action `0` and eight for `2`.
/// Action `1` is the reference with a zero score offset.
pub const LEARNED_PARAMS: usize = 19;

const CONTEXT_LEN: usize = 8;

/// Tie-break order when scores are equal.
const PREFERENCE: [usize; 3] = [1, 2, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Honest,
    SelfishMixing,
    MixingForking,
    Learned,
}

impl PolicyKind {
    pub const BASELINES: [PolicyKind; 3] = [
        PolicyKind::Honest,
        PolicyKind::SelfishMixing,
        PolicyKind::MixingForking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Honest => "honest",
            PolicyKind::SelfishMixing => "selfish_mixing",
            PolicyKind::MixingForking => "mixing_forking",
            PolicyKind::Learned => "learned",
        }
    }

    /// Note attached to outputs produced by this policy kind.
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::MixingForking => "heuristic approximation of mixing with forking",
            _ => "",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "honest" => Ok(PolicyKind::Honest),
            "selfish_mixing" => Ok(PolicyKind::SelfishMixing),
            "mixing_forking" => Ok(PolicyKind::MixingForking),
            "learned" => Ok(PolicyKind::Learned),
            other => Err(Error::usage(format!("unknown policy kind `{other}`"))),
        }
    }
}

/// An adversary policy. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    pub weights: RewardWeights,
    /// Stakes the policy was built for, if any.
    pub stakes: Option<StakeConfig>,
    pub tail_cap: usize,
    pub params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format: String,
    version: u32,
    kind: PolicyKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    label: String,
    tail_cap: usize,
    weights: RewardWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stakes: Option<StakeConfig>,
    params: Vec<f64>,
}

const FORMAT_TAG: &str = "lstsim-policy";

impl Policy {
    pub fn baseline(kind: PolicyKind, weights: RewardWeights) -> Self {
        Policy {
            kind,
            weights,
            stakes: None,
            tail_cap: DEFAULT_TAIL_CAP,
            params: Vec::new(),
        }
    }

    pub fn honest() -> Self {
        Self::baseline(PolicyKind::Honest, RewardWeights::SELF_OPTIMIZATION)
    }

    pub fn learned(weights: RewardWeights, params: Vec<f64>) -> Result<Self> {
        if params.len() != LEARNED_PARAMS {
            return Err(Error::param(
                "params",
                format!("expected {LEARNED_PARAMS} values, got {}", params.len()),
            ));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("params", "values must be finite"));
        }
        Ok(Policy {
            kind: PolicyKind::Learned,
            weights,
            stakes: None,
            tail_cap: DEFAULT_TAIL_CAP,
            params,
        })
    }

    /// Parameters that reproduce the planner's choices exactly.
    pub fn planner_params() -> Vec<f64> {
        let mut p = vec![0.0; LEARNED_PARAMS];
        p[2] = 1.0;
        p
    }

    /// Parameters under which every action ties, so the policy always
    /// proposes honestly.
    pub fn honest_params() -> Vec<f64> {
        vec![0.0; LEARNED_PARAMS]
    }

    pub fn with_stakes(mut self, stakes: StakeConfig) -> Self {
        self.stakes = Some(stakes);
        self
    }

    fn needs_context(&self) -> bool {
        matches!(self.kind, PolicyKind::MixingForking | PolicyKind::Learned)
    }

    /// Chooses a legal action at the pending decision, greedily.
    pub fn act(&self, state: &ChainState) -> Result<u8> {
        let kind = state
            .decision
            .ok_or_else(|| Error::usage("no adversary decision pending"))?;
        match self.kind {
            PolicyKind::Honest => Ok(1),
            PolicyKind::SelfishMixing => selfish_mixing(state, kind, self.tail_cap),
            _ => {
                debug_assert!(self.needs_context());
                let ctx = decision_context(state, &self.weights, self.tail_cap)?;
                Ok(self.choose(&ctx))
            }
        }
    }

    /// Samples from the masked softmax of the scores (learned) or returns the
    /// greedy action (other kinds).
    pub fn act_sampled<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> Result<u8> {
        if self.kind != PolicyKind::Learned {
            return self.act(state);
        }
        let ctx = decision_context(state, &self.weights, self.tail_cap)?;
        let p = self.action_probabilities(&ctx);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, pa) in p.iter().enumerate() {
            acc += pa;
            if *pa > 0.0 && u < acc {
                return Ok(a as u8);
            }
        }
        Ok(self.choose(&ctx))
    }

    /// Per-action scores from a decision context. Baselines score by the
    /// planner; illegal actions get `-inf`.
    pub fn scores(&self, ctx: &DecisionContext) -> [f64; 3] {
        let mut s = [f64::NEG_INFINITY; 3];
        for a in 0..3 {
            if !ctx.mask.legal[a] {
                continue;
            }
            s[a] = match self.kind {
                PolicyKind::Honest => (a == 1) as u8 as f64,
                PolicyKind::Learned => self.learned_score(ctx, a),
                _ => ctx.plan[a],
            };
        }
        s
    }

    fn learned_score(&self, ctx: &DecisionContext, a: usize) -> f64 {
        let p = &self.params;
        let pair = ctx.obs.pair(a);
        let mut s = p[0] * pair.adversary + p[1] * pair.target + p[2] * ctx.plan[a];
        let theta = match a {
            0 => &p[3..3 + CONTEXT_LEN],
            2 => &p[3 + CONTEXT_LEN..3 + 2 * CONTEXT_LEN],
            _ => return s,
        };
        let m = ctx.obs.mev.unwrap_or([0.0; 3]);
        let x = [
            1.0,
            ctx.obs.branch as u8 as f64,
            ctx.pure_tail as u8 as f64,
            ctx.fork_reachable as u8 as f64,
            ctx.contest_target as u8 as f64,
            m[0],
            m[1],
            m[2],
        ];
        s += theta.iter().zip(x.iter()).map(|(t, v)| t * v).sum::<f64>();
        s
    }

    /// Greedy legal action from a context.
    pub fn choose(&self, ctx: &DecisionContext) -> u8 {
        if self.kind == PolicyKind::SelfishMixing {
            return if ctx.mask.legal[1] { 1 } else { first_legal(ctx) };
        }
        let s = self.scores(ctx);
        let mut best: Option<usize> = None;
        for a in PREFERENCE {
            if !ctx.mask.legal[a] || s[a].is_nan() {
                continue;
            }
            if best.is_none_or(|b| s[a] > s[b]) {
                best = Some(a);
            }
        }
        best.map_or_else(|| first_legal(ctx), |a| a as u8)
    }

    /// Masked softmax over the scores. Illegal actions get probability 0.
    pub fn action_probabilities(&self, ctx: &DecisionContext) -> [f64; 3] {
        let s = self.scores(ctx);
        let max = s
            .iter()
            .zip(ctx.mask.legal)
            .filter(|(v, l)| *l && v.is_finite())
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut p = [0.0; 3];
        if !max.is_finite() {
            p[first_legal(ctx) as usize] = 1.0;
            return p;
        }
        for a in 0..3 {
            if ctx.mask.legal[a] && s[a].is_finite() {
                p[a] = (s[a] - max).exp();
            }
        }
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        p
    }

    pub fn to_text(&self) -> Result<String> {
        let file = PolicyFile {
            format: FORMAT_TAG.into(),
            version: POLICY_FORMAT_VERSION,
            kind: self.kind,
            label: self.kind.label().into(),
            tail_cap: self.tail_cap,
            weights: self.weights,
            stakes: self.stakes,
            params: self.params.clone(),
        };
        toml::to_string(&file).map_err(|e| Error::Statistics(format!("policy encoding: {e}")))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let file: PolicyFile = toml::from_str(text).map_err(|e| Error::Data {
            path: "<policy>".into(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })?;
        if file.format != FORMAT_TAG {
            return Err(Error::Data {
                path: "<policy>".into(),
                line: 1,
                msg: format!("not a policy file (format `{}`)", file.format),
            });
        }
        if file.version != POLICY_FORMAT_VERSION {
            return Err(Error::Data {
                path: "<policy>".into(),
                line: 1,
                msg: format!("unsupported policy version {}", file.version),
            });
        }
        file.weights.validate()?;
        let mut p = match file.kind {
            PolicyKind::Learned => Policy::learned(file.weights, file.params)?,
            k => Policy::baseline(k, file.weights),
        };
        p.tail_cap = file.tail_cap;
        p.stakes = file.stakes;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        Policy::from_text(&text).map_err(|e| match e {
            Error::Data { line, msg, .. } => Error::Data {
                path: path.to_path_buf(),
                line,
                msg,
            },
            other => other,
        })
    }
}

fn first_legal(ctx: &DecisionContext) -> u8 {
    ctx.mask.legal.iter().position(|l| *l).unwrap_or(1) as u8
}

fn selfish_mixing(state: &ChainState, kind: DecisionKind, cap: usize) -> Result<u8> {
    if kind == DecisionKind::Fork {
        return Ok(1);
    }
    match pure_tail_len(state) {
        Some(t) if t <= cap => {
            let obj = TailObjective::AdversaryNet;
            Ok(enumerate_tail_with(state, cap, |s, m| obj.score(s, m))?.first_action())
        }
        Some(_) => {
            let prop = counterfactual(state, Hypothetical::Prop)?.adversary;
            let skip = counterfactual(state, Hypothetical::Skip)?.adversary - 1.0;
            Ok(if skip > prop { 0 } else { 1 })
        }
        None => Ok(1),
    }
}
