//! Command-line front end.
//!
//! Every command merges flag overrides into an optional TOML config and
//! writes its outputs under `--out-dir`, together with a `summary.toml`
//! record that echoes the effective config.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::beacon::StakeConfig;
use crate::calibrate::{self, PoolFiles, DEFAULT_HORIZONS};
use crate::env::{DecisionKind, Env, EnvConfig, MevConfig, TraceRecord};
use crate::error::{Error, Result};
use crate::monetize::{self, BreakEvenSearch, ShortScenario};
use crate::oracle::DEFAULT_TAIL_CAP;
use crate::reward::{AttackMetrics, RewardWeights};
use crate::strategy::{episode_seed, evaluate, train, CemSettings, Policy, PolicyKind, TrainConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "lstsim", version, about = "Liquid staking attack simulation lab")]
pub struct Cli {
    /// TOML file with command settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed. Required by every command that draws random numbers.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for episode and trial execution.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    SelfOptimization,
    Griefing,
}

impl Objective {
    pub fn weights(self) -> RewardWeights {
        match self {
            Objective::SelfOptimization => RewardWeights::SELF_OPTIMIZATION,
            Objective::Griefing => RewardWeights::GRIEFING,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Objective::SelfOptimization => "self_optimization",
            Objective::Griefing => "griefing",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for an adversary policy and save it.
    Train {
        #[arg(long, value_enum)]
        objective: Option<Objective>,
        #[arg(long)]
        alpha_adversary: Option<f64>,
        #[arg(long)]
        alpha_target: Option<f64>,
        /// Environment slots the search may simulate.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Evaluate a saved policy or a baseline.
    Evaluate {
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, value_enum)]
        objective: Option<Objective>,
        #[arg(long)]
        alpha_adversary: Option<f64>,
        #[arg(long)]
        alpha_target: Option<f64>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Write per-slot traces of the first N episodes.
        #[arg(long)]
        trace_episodes: Option<u64>,
    },
    /// Evaluate a policy on every cell of a stake grid.
    Grid {
        #[arg(long, value_enum)]
        objective: Option<Objective>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Sweep MEV arrival probability and bonus for both objectives.
    MevSweep {
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Monte Carlo profit distribution of a leveraged short.
    Monetize {
        /// Calibration preset: coinbase, etherfi or rocketpool.
        #[arg(long)]
        pool: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        break_even: bool,
    },
    /// Estimate return sensitivity to APR from price and APR CSV files.
    Calibrate {
        #[arg(long)]
        lag: Option<usize>,
    },
    /// Replay a recorded episode trace and check that it reproduces.
    ReplayTrace {
        #[arg(long)]
        trace: PathBuf,
        /// Episode index the trace was recorded from.
        #[arg(long)]
        episode: Option<u64>,
    },
}

/// Self-describing output record of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord<C> {
    pub experiment: String,
    pub tool_version: String,
    pub timestamp_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub config: C,
}

impl<C: Serialize> ResultRecord<C> {
    fn new(command: &str, seed: Option<u64>, config: C) -> Self {
        let experiment = match seed {
            Some(s) => format!("{command}-seed{s}"),
            None => command.to_string(),
        };
        ResultRecord {
            experiment,
            tool_version: TOOL_VERSION.into(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            seed,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            config,
        }
    }

    fn metric(&mut self, key: impl Into<String>, v: f64) {
        self.metrics.insert(key.into(), v);
    }

    fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("summary.toml");
        let text = toml::to_string(self).map_err(|e| Error::Statistics(format!("summary encoding: {e}")))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

fn default_objective() -> Objective {
    Objective::SelfOptimization
}

fn default_tail_cap() -> usize {
    DEFAULT_TAIL_CAP
}

fn default_grid_alphas() -> Vec<f64> {
    vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30]
}

fn default_mev_deltas() -> Vec<f64> {
    vec![0.05, 0.10, 0.15, 0.20]
}

fn default_mev_fees() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 10.0]
}

fn both_objectives() -> Vec<Objective> {
    vec![Objective::SelfOptimization, Objective::Griefing]
}

fn default_train_epochs() -> usize {
    2
}

fn default_long_epochs() -> usize {
    6
}

fn default_budget() -> u64 {
    2_000_000
}

fn default_episodes() -> usize {
    10_000
}

fn default_grid_episodes() -> usize {
    2_000
}

fn default_trials() -> usize {
    10_000
}

fn default_benchmark_apr() -> f64 {
    0.03
}

fn default_benchmark_days() -> f64 {
    60.0
}

fn default_capacity() -> u32 {
    MevConfig::DEFAULT_CAPACITY
}

fn default_restarts() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_horizons() -> Vec<u32> {
    DEFAULT_HORIZONS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_objective")]
    pub objective: Objective,
    /// Explicit weights; the objective's preset when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<RewardWeights>,
    pub stakes: StakeConfig,
    #[serde(default)]
    pub mev: MevConfig,
    #[serde(default = "default_train_epochs")]
    pub epochs: usize,
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Independent search restarts, seeded from the root seed.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_tail_cap")]
    pub tail_cap: usize,
    #[serde(default)]
    pub optimizer: CemSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSettings {
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<RewardWeights>,
    pub stakes: StakeConfig,
    #[serde(default)]
    pub mev: MevConfig,
    #[serde(default = "default_long_epochs")]
    pub epochs: usize,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_kind: Option<PolicyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_file: Option<PathBuf>,
    #[serde(default = "default_tail_cap")]
    pub tail_cap: usize,
    #[serde(default)]
    pub trace_episodes: u64,
}

/// Where a sweep gets the policy for each cell. At most one field may be
/// set; a mixing-with-forking baseline is used when none is.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_kind: Option<PolicyKind>,
    /// Directory holding one `policy.toml` per cell subdirectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_dir: Option<PathBuf>,
    /// Train each cell inline with this slot budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_budget: Option<u64>,
}

impl PolicySource {
    fn validate(&self) -> Result<()> {
        let set = self.policy_kind.is_some() as u8
            + self.policy_dir.is_some() as u8
            + self.train_budget.is_some() as u8;
        if set > 1 {
            return Err(Error::usage(
                "set at most one of policy_kind, policy_dir and train_budget",
            ));
        }
        Ok(())
    }

    fn resolved(mut self) -> Self {
        if self.policy_dir.is_none() && self.train_budget.is_none() && self.policy_kind.is_none() {
            self.policy_kind = Some(PolicyKind::MixingForking);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<RewardWeights>,
    #[serde(default = "default_grid_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub mev: MevConfig,
    #[serde(default = "default_long_epochs")]
    pub epochs: usize,
    #[serde(default = "default_grid_episodes")]
    pub episodes: usize,
    #[serde(default = "default_tail_cap")]
    pub tail_cap: usize,
    #[serde(default)]
    pub policy: PolicySource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MevSweepSettings {
    pub stakes: StakeConfig,
    #[serde(default = "default_true")]
    pub mev_enabled: bool,
    #[serde(default = "default_mev_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_mev_fees")]
    pub fees: Vec<f64>,
    #[serde(default = "default_capacity")]
    pub capacity: u32,
    #[serde(default = "both_objectives")]
    pub objectives: Vec<Objective>,
    #[serde(default = "default_train_epochs")]
    pub epochs: usize,
    #[serde(default = "default_grid_episodes")]
    pub episodes: usize,
    #[serde(default = "default_tail_cap")]
    pub tail_cap: usize,
    #[serde(default)]
    pub policy: PolicySource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonetizeSettings {
    /// Calibration preset the scenario starts from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<String>,
    pub scenario: ShortScenario,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub break_even: bool,
    #[serde(default = "default_benchmark_apr")]
    pub benchmark_apr: f64,
    #[serde(default = "default_benchmark_days")]
    pub benchmark_days: f64,
    #[serde(default)]
    pub search: BreakEvenSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSettings {
    pub pools: Vec<PoolFiles>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<u32>,
    /// HAC lag; the automatic rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySettings {
    pub stakes: StakeConfig,
    #[serde(default)]
    pub mev: MevConfig,
    #[serde(default = "default_long_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub episode: u64,
}

fn resolve_weights(objective: Objective, weights: &mut Option<RewardWeights>) -> Result<RewardWeights> {
    let w = weights.unwrap_or_else(|| objective.weights());
    w.validate()?;
    *weights = Some(w);
    Ok(w)
}

fn load_table(path: Option<&Path>) -> Result<toml::Table> {
    match path {
        None => Ok(toml::Table::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::usage(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::usage(format!("config {}: {}", p.display(), e.message())))
        }
    }
}

/// Sets `key` (dotted path) in `table`, creating intermediate tables.
fn set(table: &mut toml::Table, key: &str, value: impl Into<toml::Value>) {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .expect("config section is a table");
    }
    t.insert(last.to_string(), value.into());
}

/// Parses settings from a config table. Errors name the offending field.
pub fn parse_settings<T: DeserializeOwned>(table: toml::Table) -> Result<T> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::usage(format!("config: {}", e.message())))
}

fn require_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::usage(format!("`{command}` requires --seed")))
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn attack_metrics(record: &mut ResultRecord<impl Serialize>, m: &AttackMetrics, stakes: &StakeConfig) {
    if let Some(v) = m.victim_loss {
        record.metric("victim_loss", v);
    }
    record.metric("adversary_loss", m.adversary_loss);
    record.metric("adversary_share", m.adversary_share());
    record.metric("chain_quality_impact", m.chain_quality_impact);
    record.metric("sacrificed_fraction", m.sacrificed_fraction);
    record.metric("displaced_fraction", m.displaced_fraction);
    record.metric("mean_adversary_slots", m.mean_adversary_slots);
    record.metric("mean_target_slots", m.mean_target_slots);
    record.metric("mean_episode_reward", m.mean_episode_reward);
    record.metric("se_episode_reward", m.se_episode_reward);
    record.metric("adversary_value_gain", m.adversary_value_gain(stakes));
    if let Some(v) = m.target_value_change(stakes) {
        record.metric("target_value_change", v);
    }
    record.metric("episodes", m.episodes as f64);
    record.metric("realized_epochs", m.realized_epochs as f64);
}

/// Outcome of a command, for callers that drive the CLI in-process.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub summary: PathBuf,
    pub outputs: Vec<PathBuf>,
}

/// Runs the command named by `args` and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(report) => {
            println!("{}", report.summary.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<RunReport> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::usage("--threads must be positive"));
        }
        // A global pool can only be installed once per process.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let mut table = load_table(cli.config.as_deref())?;
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Train {
            objective,
            alpha_adversary,
            alpha_target,
            budget,
        } => {
            let seed = require_seed(cli.seed, "train")?;
            if let Some(o) = objective {
                set(&mut table, "objective", o.name());
            }
            if let Some(a) = alpha_adversary {
                set(&mut table, "stakes.alpha_adversary", a);
            }
            if let Some(t) = alpha_target {
                set(&mut table, "stakes.alpha_target", t);
            }
            if let Some(b) = budget {
                set(&mut table, "budget", b as i64);
            }
            cmd_train(parse_settings(table)?, seed, out)
        }
        Command::Evaluate {
            policy,
            kind,
            objective,
            alpha_adversary,
            alpha_target,
            episodes,
            trace_episodes,
        } => {
            let seed = require_seed(cli.seed, "evaluate")?;
            if let Some(p) = policy {
                set(&mut table, "policy_file", p.display().to_string());
            }
            if let Some(k) = kind {
                let k: PolicyKind = k.parse()?;
                set(&mut table, "policy_kind", k.name());
            }
            if let Some(o) = objective {
                set(&mut table, "objective", o.name());
            }
            if let Some(a) = alpha_adversary {
                set(&mut table, "stakes.alpha_adversary", a);
            }
            if let Some(t) = alpha_target {
                set(&mut table, "stakes.alpha_target", t);
            }
            if let Some(n) = episodes {
                set(&mut table, "episodes", n as i64);
            }
            if let Some(n) = trace_episodes {
                set(&mut table, "trace_episodes", n as i64);
            }
            cmd_evaluate(parse_settings(table)?, seed, out)
        }
        Command::Grid { objective, episodes } => {
            let seed = require_seed(cli.seed, "grid")?;
            if let Some(o) = objective {
                set(&mut table, "objective", o.name());
            }
            if let Some(n) = episodes {
                set(&mut table, "episodes", n as i64);
            }
            cmd_grid(parse_settings(table)?, seed, out)
        }
        Command::MevSweep { episodes } => {
            let seed = require_seed(cli.seed, "mev-sweep")?;
            if let Some(n) = episodes {
                set(&mut table, "episodes", n as i64);
            }
            if !table.contains_key("stakes") {
                set(&mut table, "stakes.alpha_adversary", 0.2);
                set(&mut table, "stakes.alpha_target", 0.2);
            }
            cmd_mev_sweep(parse_settings(table)?, seed, out)
        }
        Command::Monetize {
            pool,
            trials,
            break_even,
        } => {
            let seed = require_seed(cli.seed, "monetize")?;
            if let Some(p) = pool {
                set(&mut table, "pool", p);
            }
            if let Some(n) = trials {
                set(&mut table, "trials", n as i64);
            }
            if break_even {
                set(&mut table, "break_even", true);
            }
            cmd_monetize(resolve_monetize(table)?, seed, out)
        }
        Command::Calibrate { lag } => {
            if let Some(l) = lag {
                set(&mut table, "lag", l as i64);
            }
            cmd_calibrate(parse_settings(table)?, cli.seed, out)
        }
        Command::ReplayTrace { trace, episode } => {
            let seed = require_seed(cli.seed, "replay-trace")?;
            if let Some(k) = episode {
                set(&mut table, "episode", k as i64);
            }
            cmd_replay(parse_settings(table)?, &trace, seed, out)
        }
    }
}

/// Builds monetize settings, starting the scenario from the pool preset
/// (Coinbase when none is named) and applying `[scenario]` overrides.
pub fn resolve_monetize(mut table: toml::Table) -> Result<MonetizeSettings> {
    let pool = match table.get("pool") {
        Some(toml::Value::String(p)) => p.clone(),
        Some(_) => return Err(Error::usage("config: `pool` must be a string")),
        None => "coinbase".to_string(),
    };
    let base = ShortScenario::preset(&pool)?;
    let mut scenario = toml::Table::try_from(base)
        .map_err(|e| Error::Statistics(format!("scenario encoding: {e}")))?;
    match table.remove("scenario") {
        Some(toml::Value::Table(over)) => scenario.extend(over),
        Some(_) => return Err(Error::usage("config: `scenario` must be a table")),
        None => {}
    }
    table.insert("pool".into(), pool.into());
    table.insert("scenario".into(), scenario.into());
    let s: MonetizeSettings = parse_settings(table)?;
    s.scenario.validate()?;
    Ok(s)
}

pub fn cmd_train(mut s: TrainSettings, seed: u64, out: &Path) -> Result<RunReport> {
    let weights = resolve_weights(s.objective, &mut s.weights)?;
    if s.restarts == 0 {
        return Err(Error::param("restarts", "must be positive"));
    }
    let seeds: Vec<u64> = if s.restarts == 1 {
        vec![seed]
    } else {
        (0..s.restarts as u64).map(|k| episode_seed(seed, k)).collect()
    };
    let cfg = TrainConfig {
        weights,
        stakes: s.stakes,
        mev: s.mev,
        epochs: s.epochs,
        budget: s.budget,
        seeds,
        optimizer: s.optimizer,
        tail_cap: s.tail_cap,
    };
    let outcome = train(&cfg)?;
    create_out_dir(out)?;
    let policy_path = out.join("policy.toml");
    outcome.policy.save(&policy_path)?;
    let log_path = out.join("train_log.jsonl");
    write_jsonl(&log_path, &outcome.log)?;

    let mut rec = ResultRecord::new("train", Some(seed), s);
    rec.metric("validation_reward", outcome.validation_reward);
    for (k, r) in &outcome.baseline_rewards {
        rec.metric(format!("baseline_reward_{}", k.name()), *r);
    }
    rec.metric("below_baseline", outcome.below_baseline as u8 as f64);
    rec.metric("budget_exhausted", outcome.budget_exhausted as u8 as f64);
    rec.metric("iterations", outcome.log.len() as f64);
    if outcome.below_baseline {
        rec.notes.push("returned policy scored below a baseline on validation".into());
    }
    if outcome.budget_exhausted {
        rec.notes.push("budget too small for any search iteration".into());
    }
    let summary = rec.write(out)?;
    Ok(RunReport {
        summary,
        outputs: vec![policy_path, log_path],
    })
}

fn policy_for(
    kind: Option<PolicyKind>,
    file: Option<&Path>,
    weights: RewardWeights,
    tail_cap: usize,
) -> Result<Policy> {
    match (kind, file) {
        (Some(_), Some(_)) => Err(Error::usage("set either policy_kind or policy_file, not both")),
        (_, Some(path)) => Policy::load(path),
        (Some(PolicyKind::Learned), None) => {
            Err(Error::usage("a learned policy must be loaded from policy_file"))
        }
        (k, None) => {
            let mut p = Policy::baseline(k.unwrap_or(PolicyKind::MixingForking), weights);
            p.tail_cap = tail_cap;
            Ok(p)
        }
    }
}

pub fn cmd_evaluate(mut s: EvaluateSettings, seed: u64, out: &Path) -> Result<RunReport> {
    let weights = resolve_weights(s.objective, &mut s.weights)?;
    let policy = policy_for(s.policy_kind, s.policy_file.as_deref(), weights, s.tail_cap)?;
    if s.policy_file.is_none() && s.policy_kind.is_none() {
        s.policy_kind = Some(policy.kind);
    }
    let env = EnvConfig::new(s.stakes).with_mev(s.mev).with_epochs(s.epochs);
    let m = evaluate(&policy, &env, s.episodes, seed)?;
    create_out_dir(out)?;
    let mut outputs = Vec::new();
    for k in 0..s.trace_episodes {
        let mut e = Env::new(env, episode_seed(seed, k))?.with_trace();
        while e.next_decision().is_some() {
            let a = policy.act(e.state())?;
            e.step(a)?;
        }
        let path = out.join(format!("trace_episode{k}.jsonl"));
        write_jsonl(&path, e.trace().unwrap_or_default())?;
        outputs.push(path);
    }
    let stakes = s.stakes;
    let mut rec = ResultRecord::new("evaluate", Some(seed), s);
    attack_metrics(&mut rec, &m, &stakes);
    let label = policy.kind.label();
    if !label.is_empty() {
        rec.notes.push(format!("policy: {label}"));
    }
    let summary = rec.write(out)?;
    Ok(RunReport { summary, outputs })
}

/// Subdirectory name of a stake cell.
pub fn cell_name(a: f64, t: f64) -> String {
    format!("a{a:.2}_t{t:.2}")
}

/// Subdirectory name of an MEV sweep cell.
pub fn mev_cell_name(objective: Objective, delta: f64, fee: f64) -> String {
    format!("{}_d{delta:.2}_f{fee}", objective.name())
}

struct CellPolicies {
    policies: Vec<Policy>,
}

fn cell_policies(
    source: &PolicySource,
    cells: &[(String, TrainConfig)],
    tail_cap: usize,
    out: &Path,
) -> Result<CellPolicies> {
    if let Some(kind) = source.policy_kind {
        if kind == PolicyKind::Learned {
            return Err(Error::usage("learned policies come from policy_dir or train_budget"));
        }
        let policies = cells
            .iter()
            .map(|(_, c)| {
                let mut p = Policy::baseline(kind, c.weights);
                p.tail_cap = tail_cap;
                p
            })
            .collect();
        return Ok(CellPolicies { policies });
    }
    if let Some(dir) = &source.policy_dir {
        let missing: Vec<&str> = cells
            .iter()
            .filter(|(name, _)| !dir.join(name).join("policy.toml").is_file())
            .map(|(name, _)| name.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Data {
                path: dir.clone(),
                line: 0,
                msg: format!("missing policies for cells: {}", missing.join(", ")),
            });
        }
        let policies = cells
            .iter()
            .map(|(name, _)| Policy::load(&dir.join(name).join("policy.toml")))
            .collect::<Result<_>>()?;
        return Ok(CellPolicies { policies });
    }
    let mut policies = Vec::new();
    for (name, cfg) in cells {
        let outcome = train(cfg)?;
        let dir = out.join("policies").join(name);
        create_out_dir(&dir)?;
        outcome.policy.save(&dir.join("policy.toml"))?;
        policies.push(outcome.policy);
    }
    Ok(CellPolicies { policies })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub alpha_adversary: f64,
    pub alpha_target: f64,
    pub victim_loss: Option<f64>,
    pub adversary_loss: f64,
    pub chain_quality: f64,
    pub sacrificed_fraction: f64,
    pub displaced_fraction: f64,
    pub adversary_share: f64,
}

pub fn cmd_grid(mut s: GridSettings, seed: u64, out: &Path) -> Result<RunReport> {
    let weights = resolve_weights(s.objective, &mut s.weights)?;
    s.policy.validate()?;
    s.policy = s.policy.resolved();
    if s.alphas.is_empty() {
        return Err(Error::param("alphas", "grid needs at least one stake share"));
    }
    let mut cells = Vec::new();
    for &a in &s.alphas {
        for &t in &s.alphas {
            let stakes = StakeConfig::new(a, t)?;
            let mut cfg = TrainConfig::new(weights, stakes, s.policy.train_budget.unwrap_or(1), seed);
            cfg.mev = s.mev;
            cfg.tail_cap = s.tail_cap;
            cells.push((cell_name(a, t), cfg));
        }
    }
    create_out_dir(out)?;
    let policies = cell_policies(&s.policy, &cells, s.tail_cap, out)?;
    let mut rows = Vec::new();
    let mut asymmetric = 0usize;
    for ((_, cfg), policy) in cells.iter().zip(&policies.policies) {
        let env = EnvConfig::new(cfg.stakes).with_mev(s.mev).with_epochs(s.epochs);
        let m = evaluate(policy, &env, s.episodes, seed)?;
        if m.victim_loss.is_some_and(|v| v.abs() >= m.adversary_loss.abs()) {
            asymmetric += 1;
        }
        log::info!("grid cell {:?} done", cfg.stakes);
        rows.push(GridRow {
            alpha_adversary: cfg.stakes.adversary(),
            alpha_target: cfg.stakes.target(),
            victim_loss: m.victim_loss,
            adversary_loss: m.adversary_loss,
            chain_quality: m.chain_quality_impact,
            sacrificed_fraction: m.sacrificed_fraction,
            displaced_fraction: m.displaced_fraction,
            adversary_share: m.adversary_share(),
        });
    }
    let table = out.join("grid.csv");
    let mut w = csv::Writer::from_path(&table)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let n = rows.len();
    let mut rec = ResultRecord::new("grid", Some(seed), s);
    rec.metric("cells", n as f64);
    rec.metric("asymmetric_fraction", asymmetric as f64 / n as f64);
    let summary = rec.write(out)?;
    Ok(RunReport {
        summary,
        outputs: vec![table],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MevRow {
    pub objective: Objective,
    pub delta: f64,
    pub fee: f64,
    pub sacrificed_fraction: f64,
    pub displaced_fraction: f64,
    pub chain_quality: f64,
    pub adversary_value_gain: f64,
    pub target_value_change: Option<f64>,
    pub victim_loss: Option<f64>,
    pub adversary_loss: f64,
}

pub fn cmd_mev_sweep(mut s: MevSweepSettings, seed: u64, out: &Path) -> Result<RunReport> {
    if !s.mev_enabled {
        return Err(Error::usage("mev-sweep needs MEV enabled"));
    }
    if s.deltas.is_empty() || s.fees.is_empty() || s.objectives.is_empty() {
        return Err(Error::usage("mev-sweep needs deltas, fees and objectives"));
    }
    s.policy.validate()?;
    s.policy = s.policy.resolved();
    let mut cells = Vec::new();
    let mut keys = Vec::new();
    for &o in &s.objectives {
        for &d in &s.deltas {
            for &f in &s.fees {
                let mev = MevConfig::new(d, f, s.capacity)?;
                let mut cfg = TrainConfig::new(o.weights(), s.stakes, s.policy.train_budget.unwrap_or(1), seed);
                cfg.mev = mev;
                cfg.tail_cap = s.tail_cap;
                cells.push((mev_cell_name(o, d, f), cfg));
                keys.push((o, d, f));
            }
        }
    }
    create_out_dir(out)?;
    let policies = cell_policies(&s.policy, &cells, s.tail_cap, out)?;
    let mut rows = Vec::new();
    for (((_, cfg), policy), (o, d, f)) in cells.iter().zip(&policies.policies).zip(keys) {
        let env = EnvConfig::new(cfg.stakes).with_mev(cfg.mev).with_epochs(s.epochs);
        let m = evaluate(policy, &env, s.episodes, seed)?;
        rows.push(MevRow {
            objective: o,
            delta: d,
            fee: f,
            sacrificed_fraction: m.sacrificed_fraction,
            displaced_fraction: m.displaced_fraction,
            chain_quality: m.chain_quality_impact,
            adversary_value_gain: m.adversary_value_gain(&cfg.stakes),
            target_value_change: m.target_value_change(&cfg.stakes),
            victim_loss: m.victim_loss,
            adversary_loss: m.adversary_loss,
        });
    }
    let table = out.join("mev_sweep.csv");
    let mut w = csv::Writer::from_path(&table)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let n = rows.len();
    let mut rec = ResultRecord::new("mev-sweep", Some(seed), s);
    rec.metric("rows", n as f64);
    let summary = rec.write(out)?;
    Ok(RunReport {
        summary,
        outputs: vec![table],
    })
}

pub fn cmd_monetize(s: MonetizeSettings, seed: u64, out: &Path) -> Result<RunReport> {
    let dist = monetize::simulate(&s.scenario, s.trials, seed)?;
    create_out_dir(out)?;
    let ecdf = out.join("ecdf.csv");
    dist.write_ecdf_csv(File::create(&ecdf)?)?;
    let benchmark = monetize::honest_benchmark(s.scenario.collateral, s.benchmark_apr, s.benchmark_days);
    let threshold = if s.break_even {
        Some(monetize::break_even(&s.scenario, benchmark, &s.search, seed)?)
    } else {
        None
    };
    let exposure = s.scenario.exposure();
    let borrow = s.scenario.borrow_cost();
    let mut rec = ResultRecord::new("monetize", Some(seed), s);
    rec.metric("trials", dist.trials as f64);
    rec.metric("mean_profit_eth", dist.mean);
    rec.metric("se_mean_profit_eth", dist.se_mean);
    rec.metric("prob_profit", dist.prob_profit);
    rec.metric("liquidation_rate", dist.liquidation_rate);
    rec.metric("exposure_eth", exposure);
    rec.metric("borrow_cost_eth", borrow);
    rec.metric("honest_benchmark_eth", benchmark);
    if let Some(t) = threshold {
        rec.metric("break_even_degradation", t);
    }
    let summary = rec.write(out)?;
    Ok(RunReport {
        summary,
        outputs: vec![ecdf],
    })
}

pub fn cmd_calibrate(s: CalibrateSettings, seed: Option<u64>, out: &Path) -> Result<RunReport> {
    if s.pools.is_empty() {
        return Err(Error::usage("calibrate needs at least one [[pools]] entry"));
    }
    if s.horizons.is_empty() {
        return Err(Error::usage("calibrate needs at least one horizon"));
    }
    let mut rows = Vec::new();
    for pool in &s.pools {
        for &h in &s.horizons {
            rows.push(calibrate::calibrate_pool(pool, h, s.lag)?);
        }
    }
    create_out_dir(out)?;
    let table = out.join("calibration.csv");
    calibrate::write_table(&rows, File::create(&table)?)?;
    let mut rec = ResultRecord::new("calibrate", seed, s);
    for r in &rows {
        let key = format!("{}_h{}", r.pool, r.horizon_days);
        rec.metric(format!("{key}_beta"), r.beta);
        rec.metric(format!("{key}_hac_se"), r.hac_se);
        rec.metric(format!("{key}_resid_sigma"), r.resid_sigma);
    }
    rec.metric("rows", rows.len() as f64);
    let summary = rec.write(out)?;
    Ok(RunReport {
        summary,
        outputs: vec![table],
    })
}

/// Reads a line-delimited trace.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let f = File::open(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Re-plays the actions recorded in `recorded` in a fresh environment and
/// returns the regenerated trace.
pub fn replay(env: EnvConfig, env_seed: u64, recorded: &[TraceRecord], path: &Path) -> Result<Vec<TraceRecord>> {
    let by_slot: BTreeMap<u64, (usize, &TraceRecord)> =
        recorded.iter().enumerate().map(|(i, r)| (r.slot, (i, r))).collect();
    let mut e = Env::new(env, env_seed)?.with_trace();
    while let Some(kind) = e.next_decision() {
        let slot = e.state().global_slot();
        let (line, rec) = by_slot.get(&slot).ok_or_else(|| Error::Data {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("no record for decision slot {slot}"),
        })?;
        let a = match kind {
            DecisionKind::Proposal => rec.action,
            DecisionKind::Fork => rec.fork_action,
        };
        let a = a.ok_or_else(|| Error::Data {
            path: path.to_path_buf(),
            line: line + 1,
            msg: format!("slot {slot} has no recorded action for a {kind:?} decision"),
        })?;
        e.step(a).map_err(|err| Error::Data {
            path: path.to_path_buf(),
            line: line + 1,
            msg: err.to_string(),
        })?;
    }
    Ok(e.trace().unwrap_or_default().to_vec())
}

pub fn cmd_replay(s: ReplaySettings, trace: &Path, seed: u64, out: &Path) -> Result<RunReport> {
    let recorded = read_trace(trace)?;
    let env = EnvConfig::new(s.stakes).with_mev(s.mev).with_epochs(s.epochs);
    env.validate()?;
    let replayed = replay(env, episode_seed(seed, s.episode), &recorded, trace)?;
    create_out_dir(out)?;
    let path = out.join("replayed_trace.jsonl");
    write_jsonl(&path, &replayed)?;
    let first_diff = recorded
        .iter()
        .zip(&replayed)
        .position(|(a, b)| a != b)
        .or_else(|| (recorded.len() != replayed.len()).then(|| recorded.len().min(replayed.len())));
    let mut rec = ResultRecord::new("replay-trace", Some(seed), s);
    rec.metric("records", recorded.len() as f64);
    rec.metric("identical", first_diff.is_none() as u8 as f64);
    let summary = rec.write(out)?;
    if let Some(i) = first_diff {
        return Err(Error::Data {
            path: trace.to_path_buf(),
            line: i + 1,
            msg: "replayed episode diverges from the recorded trace".into(),
        });
    }
    Ok(RunReport {
        summary,
        outputs: vec![path],
    })
}
