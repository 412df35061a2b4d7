//! Experiment orchestration: configuration, Monte Carlo trials, aggregate
//! statistics, sweeps, and the progress instrumentation run on traces.

mod instrument;
mod regime;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunked::{run_chunked, ChunkAlphabets, ChunkConfig};
use crate::coding::{CodingError, TreeCode, TreeCodeOptions};
use crate::engine::{EngineError, EngineOutput, RunOptions};
use crate::exchange::{BitExchange, ExchangeError, StrategyConfig, StrategyKind};
use crate::model::{ModelError, Protocol, ProtocolKind, Topology};
use crate::network::{NetworkError, NoiseModel};
use crate::rs::run_rs;
use crate::trace::{EngineKind, TrialReport};
use crate::util::wilson_interval;

pub use instrument::{check_progress_bound, check_step_law, progress, InstrumentError, Progress};
pub use regime::{select_regime, RegimeInfo, Thresholds};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn config_error(path: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config { path: path.to_string(), message: message.into() }
}

/// Parse JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(&path, e.into_inner().to_string())
    })
}

fn default_input_width() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    #[serde(flatten)]
    pub kind: ProtocolKind,
    pub round_count: usize,
    #[serde(default = "default_input_width")]
    pub input_width: usize,
    #[serde(default)]
    pub input_seed: u64,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_verify_depth() -> usize {
    6
}

/// Tree code for the rewind engine. The labelled depth is always
/// `2·RC + 1`; exhaustive verification stops at `verify_depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub symbols: Option<u32>,
    #[serde(default = "default_verify_depth")]
    pub verify_depth: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self { alpha: default_alpha(), symbols: None, verify_depth: default_verify_depth(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineConfig {
    Rs {
        strategy: StrategyConfig,
        #[serde(default)]
        tree: TreeSpec,
    },
    Chunked(ChunkConfig),
}

fn default_trials() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub protocol: ProtocolSpec,
    pub epsilon: f64,
    /// Trial `i` draws its noise from seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub engine: EngineConfig,
    /// Record a trace for every trial and check the progress inequality.
    #[serde(default = "yes")]
    pub check_progress: bool,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self = parse_json(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(config_error("epsilon", format!("{} outside [0, 0.5)", self.epsilon)));
        }
        if self.trials == 0 {
            return Err(config_error("trials", "must be at least 1"));
        }
        if self.protocol.round_count == 0 {
            return Err(config_error("protocol.round_count", "must be at least 1"));
        }
        if let EngineConfig::Rs { tree, .. } = &self.engine {
            if !(tree.alpha > 0.0 && tree.alpha < 1.0) {
                return Err(config_error("engine.tree.alpha", format!("{} outside (0, 1)", tree.alpha)));
            }
        }
        Ok(())
    }
}

/// Codes and strategies built once and shared by all trials.
#[derive(Debug, Clone)]
pub enum EngineSetup {
    Rs { exchange: BitExchange, tree: TreeCode },
    Chunked(ChunkAlphabets),
}

#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub protocol: Protocol,
    pub engine: EngineSetup,
    pub warnings: Vec<String>,
}

/// The rewind engine's tree code for `round_count` rounds.
pub fn rs_tree(spec: &TreeSpec, round_count: usize) -> Result<TreeCode, CodingError> {
    let depth = 2 * round_count + 1;
    let opts = TreeCodeOptions { symbols: spec.symbols, depth: Some(depth), ..TreeCodeOptions::default() };
    TreeCode::build(3, spec.alpha, spec.verify_depth.min(depth), spec.seed, opts)
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let p = &config.protocol;
        let protocol = Protocol::from_kind(config.topology, p.round_count, &p.kind, p.input_width, p.input_seed)?;
        let mut warnings = Vec::new();
        let engine = match &config.engine {
            EngineConfig::Rs { strategy, tree } => {
                let tree = rs_tree(tree, p.round_count)?;
                let (exchange, w) = BitExchange::resolve(strategy, &config.topology, tree.symbol_bits() as usize)?;
                warnings.extend(w);
                EngineSetup::Rs { exchange, tree }
            }
            EngineConfig::Chunked(c) => EngineSetup::Chunked(ChunkAlphabets::build(c, &config.topology, p.round_count)?),
        };
        Ok(Self { config: config.clone(), protocol, engine, warnings })
    }

    pub fn engine_kind(&self) -> EngineKind {
        match &self.engine {
            EngineSetup::Rs { .. } => EngineKind::Rs,
            EngineSetup::Chunked(a) if a.is_simple() => EngineKind::Simple { k: a.k },
            EngineSetup::Chunked(a) => EngineKind::Chunked { k: a.k },
        }
    }

    pub fn steps(&self) -> usize {
        match &self.engine {
            EngineSetup::Rs { .. } => 2 * self.protocol.round_count(),
            EngineSetup::Chunked(a) => a.steps(self.protocol.round_count()),
        }
    }

    pub fn per_step_rounds(&self) -> usize {
        match &self.engine {
            EngineSetup::Rs { exchange, tree } => exchange.rounds_per_symbol(tree.symbol_bits() as usize),
            EngineSetup::Chunked(a) => a.per_step_rounds(),
        }
    }

    /// Run trial `index`. With progress checking on, the trace is always
    /// recorded and checked; it is returned only if `keep_trace` is set.
    pub fn run_trial(&self, index: usize, keep_trace: bool) -> Result<EngineOutput, HarnessError> {
        let seed = self.config.seed.wrapping_add(index as u64);
        let noise = NoiseModel::new(self.config.epsilon, seed)?;
        let opts = RunOptions {
            record_trace: keep_trace || self.config.check_progress,
            seed,
            ..RunOptions::default()
        };
        let mut out = match &self.engine {
            EngineSetup::Rs { exchange, tree } => run_rs(&self.protocol, &noise, exchange, tree, &opts)?,
            EngineSetup::Chunked(a) => run_chunked(&self.protocol, &noise, a, &opts)?,
        };
        if self.config.check_progress {
            if let Some(trace) = &out.trace {
                out.report.progress_violations = check_progress_bound(trace)?.len();
                out.report.invariant_violations.extend(check_step_law(trace));
            }
        }
        if !keep_trace {
            out.trace = None;
        }
        Ok(out)
    }
}

/// One row of aggregate results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub engine: String,
    pub n1: usize,
    pub n2: usize,
    pub round_count: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub std_error: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub steps: usize,
    pub per_step_rounds: usize,
    pub mean_rounds: f64,
    /// Every trial used exactly `steps × per_step_rounds` rounds.
    pub rounds_exact: bool,
    /// Rounds per simulated round of the protocol.
    pub overhead: f64,
    pub regime: Option<u8>,
    pub predicted_overhead: Option<f64>,
    pub mean_backs: f64,
    pub tree_errors: usize,
    pub symbol_error_rate: f64,
    /// `(32 n^5 p^(1/16))^RC` with `p` the measured symbol error rate.
    /// Reported only; it exceeds 1 at small scale.
    pub failure_bound: Option<f64>,
    pub invariant_violations: usize,
    pub progress_violations: usize,
}

impl Summary {
    pub fn clean(&self) -> bool {
        self.invariant_violations == 0 && self.progress_violations == 0 && self.rounds_exact
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub summary: Summary,
    pub warnings: Vec<String>,
    pub trials: Vec<TrialReport>,
}

fn engine_label(kind: EngineKind, config: &ExperimentConfig) -> String {
    match (kind, &config.engine) {
        (EngineKind::Rs, EngineConfig::Rs { strategy, .. }) => {
            format!("rs-{}", serde_json::to_value(strategy.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        }
        (EngineKind::Chunked { k }, _) => format!("chunked-k{k}"),
        (EngineKind::Simple { k }, _) => format!("simple-k{k}"),
        _ => "rs".into(),
    }
}

pub fn summarize(setup: &Setup, trials: &[TrialReport]) -> Summary {
    let c = &setup.config;
    let topo = c.topology;
    let t = trials.len();
    let successes = trials.iter().filter(|r| r.success).count();
    let rate = successes as f64 / t as f64;
    let (lo, hi) = wilson_interval(successes, t, 1.96);
    let expected = (setup.steps() * setup.per_step_rounds()) as u64;
    let mean_rounds = trials.iter().map(|r| r.rounds as f64).sum::<f64>() / t as f64;
    let decodes: u64 = trials.iter().map(|r| r.symbol_decodes).sum();
    let errors: u64 = trials.iter().map(|r| r.symbol_errors).sum();
    let p = if decodes == 0 { 0.0 } else { errors as f64 / decodes as f64 };
    let rc = setup.protocol.round_count();
    let regime = select_regime(topo.n1(), (topo.n2() as f64).log2(), &c.thresholds);
    let kind = setup.engine_kind();
    let failure_bound = (kind == EngineKind::Rs)
        .then(|| (32.0 * (topo.n() as f64).powi(5) * p.powf(1.0 / 16.0)).powi(rc as i32));
    Summary {
        engine: engine_label(kind, c),
        n1: topo.n1(),
        n2: topo.n2(),
        round_count: rc,
        epsilon: c.epsilon,
        seed: c.seed,
        trials: t,
        successes,
        success_rate: rate,
        std_error: (rate * (1.0 - rate) / t as f64).sqrt(),
        wilson_low: lo,
        wilson_high: hi,
        steps: setup.steps(),
        per_step_rounds: setup.per_step_rounds(),
        mean_rounds,
        rounds_exact: trials.iter().all(|r| r.rounds == expected),
        overhead: mean_rounds / rc as f64,
        regime: regime.map(|r| r.regime),
        predicted_overhead: regime.map(|r| r.overhead),
        mean_backs: trials.iter().map(|r| r.total_backs() as f64).sum::<f64>() / t as f64,
        tree_errors: trials.iter().map(|r| r.tree_errors.len()).sum(),
        symbol_error_rate: p,
        failure_bound,
        invariant_violations: trials.iter().map(|r| r.invariant_violations.len()).sum(),
        progress_violations: trials.iter().map(|r| r.progress_violations).sum(),
    }
}

/// Run every trial of `config` in parallel. Results come back in trial
/// order regardless of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let setup = Setup::new(config)?;
    for w in &setup.warnings {
        log::warn!("{w}");
    }
    let trials: Vec<TrialReport> = (0..config.trials)
        .into_par_iter()
        .map(|i| setup.run_trial(i, false).map(|o| o.report))
        .collect::<Result<_, _>>()?;
    Ok(ExperimentReport { summary: summarize(&setup, &trials), warnings: setup.warnings, trials })
}

/// A grid of experiments around a base configuration. Empty lists keep the
/// base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub topologies: Vec<Topology>,
    #[serde(default)]
    pub strategies: Vec<StrategyKind>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let sweep: Self = parse_json(text)?;
        sweep.base.validate()?;
        if !sweep.strategies.is_empty() && !matches!(sweep.base.engine, EngineConfig::Rs { .. }) {
            return Err(config_error("strategies", "only the rewind engine takes a strategy"));
        }
        Ok(sweep)
    }

    /// The configurations of the grid, topology-major, then strategy, then
    /// noise level.
    pub fn points(&self) -> Vec<ExperimentConfig> {
        let topologies = if self.topologies.is_empty() { vec![self.base.topology] } else { self.topologies.clone() };
        let strategies: Vec<Option<StrategyKind>> =
            if self.strategies.is_empty() { vec![None] } else { self.strategies.iter().copied().map(Some).collect() };
        let epsilons = if self.epsilons.is_empty() { vec![self.base.epsilon] } else { self.epsilons.clone() };
        let mut out = Vec::new();
        for &topology in &topologies {
            for s in &strategies {
                for &epsilon in &epsilons {
                    let mut c = self.base.clone();
                    c.topology = topology;
                    c.epsilon = epsilon;
                    if let (Some(kind), EngineConfig::Rs { strategy, .. }) = (s, &mut c.engine) {
                        strategy.kind = *kind;
                    }
                    out.push(c);
                }
            }
        }
        out
    }
}

pub fn run_sweep(sweep: &SweepConfig) -> Result<Vec<Summary>, HarnessError> {
    sweep.points().iter().map(|c| run_experiment(c).map(|r| r.summary)).collect()
}

pub fn write_csv(rows: &[Summary], w: impl Write) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Whether success rates (ordered by increasing noise) never rise by more
/// than `k` combined standard errors from one point to the next.
pub fn degrades_monotonically(rows: &[Summary], k: f64) -> bool {
    rows.windows(2).all(|w| {
        let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        // A floor keeps two perfect rates from being judged on zero spread.
        let se = se.max(1.0 / w[0].trials.min(w[1].trials) as f64);
        w[1].success_rate <= w[0].success_rate + k * se
    })
}
