//! Experiment configuration, the protocol registry and Monte Carlo runs.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryStrategy, Scenario, ScenarioParams, StrategyError, StrategyFile};
use crate::channel::Capabilities;
use crate::entry::{CisProtocol, CisWillard, Dynamic, Epsilon, MachineFactory, PiMod, Plain, Tournament};
use crate::fairness::Fair;
use crate::protocol::{ConfigError, Protocol};
use crate::rng::trial_seed;
use crate::sim::{run_summary, RunOptions, SimError, TrialSummary, DEFAULT_HORIZON};
use crate::stats::{bootstrap, max, mean, median, wilson95};

pub const DEFAULT_EPSILON: Epsilon = Epsilon::DEFAULT;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("config file {path}: {source}")]
    ConfigFile { path: String, source: serde_json::Error },
    #[error("config file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    PiMod,
    CheckIfSingle,
    CisWillard,
    CisWillardDyn,
    Tournament,
    TournamentDyn,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 6] = [
        ProtocolKind::PiMod,
        ProtocolKind::CheckIfSingle,
        ProtocolKind::CisWillard,
        ProtocolKind::CisWillardDyn,
        ProtocolKind::Tournament,
        ProtocolKind::TournamentDyn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::PiMod => "pi-mod",
            ProtocolKind::CheckIfSingle => "check-if-single",
            ProtocolKind::CisWillard => "cis-willard",
            ProtocolKind::CisWillardDyn => "cis-willard-dyn",
            ProtocolKind::Tournament => "tournament",
            ProtocolKind::TournamentDyn => "tournament-dyn",
        }
    }

    /// Capabilities the protocol cannot run without.
    pub fn needs_cd(self) -> bool {
        !matches!(self, ProtocolKind::PiMod)
    }

    pub fn needs_kn(self) -> bool {
        matches!(self, ProtocolKind::PiMod | ProtocolKind::Tournament | ProtocolKind::TournamentDyn)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = ProtocolKind::ALL.iter().map(|k| k.name()).collect();
            ConfigError::Invalid(format!("unknown protocol '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

/// A protocol and its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: Epsilon,
    #[serde(default)]
    pub fair: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_bound: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_phase: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_phases: Option<u32>,
    /// Overrides the number of coin-flip pairs of the lone-participant check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<u32>,
}

fn default_epsilon() -> Epsilon {
    DEFAULT_EPSILON
}

impl ProtocolSpec {
    pub fn new(kind: ProtocolKind) -> Self {
        ProtocolSpec { kind, epsilon: DEFAULT_EPSILON, fair: false, id_bound: None, c_phase: None, c_phases: None, pairs: None }
    }

    pub fn with_epsilon(mut self, epsilon: Epsilon) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_fair(mut self, fair: bool) -> Self {
        self.fair = fair;
        self
    }

    pub fn factory(&self) -> Box<dyn MachineFactory> {
        match self.kind {
            ProtocolKind::PiMod => {
                let mut p = PiMod::new(self.epsilon);
                p.c_phase = self.c_phase.unwrap_or(p.c_phase);
                p.c_phases = self.c_phases.unwrap_or(p.c_phases);
                Box::new(p)
            }
            ProtocolKind::CheckIfSingle => Box::new(CisProtocol { epsilon: self.epsilon, pairs: self.pairs }),
            ProtocolKind::CisWillard => Box::new(CisWillard { epsilon: self.epsilon, pairs: self.pairs }),
            ProtocolKind::CisWillardDyn => Box::new(Dynamic(CisWillard { epsilon: self.epsilon, pairs: self.pairs })),
            ProtocolKind::Tournament => Box::new(Tournament),
            ProtocolKind::TournamentDyn => Box::new(Dynamic(Tournament)),
        }
    }

    pub fn build(&self) -> Box<dyn Protocol> {
        if self.fair {
            Box::new(Fair::new(self.factory(), self.id_bound))
        } else {
            Box::new(Plain::new(self.factory()))
        }
    }

    /// `caps` with the capabilities this protocol needs switched on.
    pub fn adjust_caps(&self, mut caps: Capabilities) -> Capabilities {
        if self.kind == ProtocolKind::PiMod {
            caps.kn = true;
        }
        caps
    }
}

/// Where each trial's adversary strategy comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    /// Generated from the trial seed.
    Scenario {
        scenario: Scenario,
        #[serde(default)]
        params: ScenarioParams,
    },
    File { path: PathBuf },
    Inline(StrategyFile),
}

impl StrategySpec {
    pub fn scenario(scenario: Scenario) -> Self {
        StrategySpec::Scenario { scenario, params: ScenarioParams::default() }
    }

    pub fn label(&self) -> String {
        match self {
            StrategySpec::Scenario { scenario, .. } => scenario.name().into(),
            StrategySpec::File { path } => path.display().to_string(),
            StrategySpec::Inline(_) => "inline".into(),
        }
    }

    /// The strategy for a trial with seed `seed`.
    pub fn build(&self, n: usize, seed: u64) -> Result<AdversaryStrategy, ExperimentError> {
        let s = match self {
            StrategySpec::Scenario { scenario, params } => scenario.build(n, seed, params),
            StrategySpec::File { path } => AdversaryStrategy::load(path)?,
            StrategySpec::Inline(file) => file.clone().into_strategy()?,
        };
        if s.n() != n {
            return Err(StrategyError::WrongSize { got: s.n(), n }.into());
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CapsSpec {
    pub cd: bool,
    pub gc: bool,
    pub kn: bool,
}

impl CapsSpec {
    pub fn for_n(&self, n: usize) -> Capabilities {
        Capabilities { cd: self.cd, gc: self.gc, kn: self.kn, n }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Outputs {
    pub trace: Option<PathBuf>,
    pub report_json: Option<PathBuf>,
    pub report_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub caps: CapsSpec,
    /// Process counts; Monte Carlo runs produce one row per entry.
    pub n: Vec<usize>,
    pub strategy: StrategySpec,
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Root seed; 0 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub outputs: Outputs,
}

fn default_trials() -> u64 {
    1
}

fn default_horizon() -> u64 {
    DEFAULT_HORIZON
}

impl ExperimentConfig {
    pub fn from_json(path: &str, text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|source| ExperimentError::ConfigFile { path: path.into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ExperimentError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: p.clone(), source })?;
        Self::from_json(&p, &text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(ConfigError::Invalid("n must list at least one positive process count".into()));
        }
        if self.horizon == 0 {
            return Err(ConfigError::Invalid("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn caps(&self, n: usize) -> Capabilities {
        self.protocol.adjust_caps(self.caps.for_n(n))
    }
}

/// Runs `trials` independent trials; trial `i` uses seed
/// `trial_seed(root, i)` for both its strategy and its coins.
pub fn run_trials(
    protocol: &dyn Protocol,
    caps: &Capabilities,
    strategy: &StrategySpec,
    root: u64,
    trials: u64,
    horizon: u64,
) -> Result<Vec<TrialSummary>, ExperimentError> {
    protocol.check(caps)?;
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(root, i);
            let s = strategy.build(caps.n, seed)?;
            Ok(run_summary(protocol, &s, caps, &RunOptions { seed, horizon })?)
        })
        .collect()
}

/// One row of a Monte Carlo report. Flat so the JSON and CSV forms carry
/// the same fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub protocol: String,
    pub scenario: String,
    pub n: usize,
    pub epsilon: String,
    pub trials: u64,
    pub admissible_trials: u64,
    pub truncated_trials: u64,
    pub makespan_mean: Option<f64>,
    pub makespan_mean_lo: Option<f64>,
    pub makespan_mean_hi: Option<f64>,
    pub makespan_median: Option<f64>,
    pub makespan_median_lo: Option<f64>,
    pub makespan_median_hi: Option<f64>,
    pub makespan_max: Option<f64>,
    pub makespan_max_lo: Option<f64>,
    pub makespan_max_hi: Option<f64>,
    pub visits: u64,
    pub violated_visits: u64,
    pub violation_rate: f64,
    pub violation_rate_lo: f64,
    pub violation_rate_hi: f64,
    pub unfulfilled: u64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

impl StatsRow {
    /// Aggregates trials. Makespan statistics use admissible trials only.
    pub fn aggregate(protocol: &ProtocolSpec, scenario: &str, n: usize, seed: u64, trials: &[TrialSummary]) -> Self {
        let makespans: Vec<f64> = trials.iter().filter(|t| t.admissible).map(|t| t.max_gap as f64).collect();
        let boot = |stat: fn(&[f64]) -> f64, salt: u64| bootstrap(&makespans, stat, BOOTSTRAP_RESAMPLES, seed ^ salt);
        let (mn, md, mx) = (boot(mean, 1), boot(median, 2), boot(max, 3));
        let visits: u64 = trials.iter().map(|t| t.visits as u64).sum();
        let violated: u64 = trials.iter().map(|t| t.violated_visits as u64).sum();
        let rate = wilson95(violated, visits);
        StatsRow {
            protocol: if protocol.fair { format!("fair-{}", protocol.kind) } else { protocol.kind.to_string() },
            scenario: scenario.into(),
            n,
            epsilon: protocol.epsilon.to_string(),
            trials: trials.len() as u64,
            admissible_trials: makespans.len() as u64,
            truncated_trials: trials.iter().filter(|t| t.truncated).count() as u64,
            makespan_mean: mn.map(|e| e.value),
            makespan_mean_lo: mn.map(|e| e.lo),
            makespan_mean_hi: mn.map(|e| e.hi),
            makespan_median: md.map(|e| e.value),
            makespan_median_lo: md.map(|e| e.lo),
            makespan_median_hi: md.map(|e| e.hi),
            makespan_max: mx.map(|e| e.value),
            makespan_max_lo: mx.map(|e| e.lo),
            makespan_max_hi: mx.map(|e| e.hi),
            visits,
            violated_visits: violated,
            violation_rate: rate.value,
            violation_rate_lo: rate.lo,
            violation_rate_hi: rate.hi,
            unfulfilled: trials.iter().map(|t| t.unfulfilled_starts.len() as u64).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub seed: u64,
    pub rows: Vec<StatsRow>,
}

/// Runs a Monte Carlo experiment, one row per `n`.
pub fn monte_carlo(cfg: &ExperimentConfig) -> Result<StatsReport, ExperimentError> {
    cfg.validate()?;
    let protocol = cfg.protocol.build();
    let seed = cfg.seed.unwrap_or(0);
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let caps = cfg.caps(n);
        let trials = run_trials(protocol.as_ref(), &caps, &cfg.strategy, seed, cfg.trials, cfg.horizon)?;
        rows.push(StatsRow::aggregate(&cfg.protocol, &cfg.strategy.label(), n, seed, &trials));
    }
    Ok(StatsReport { seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_names_round_trip() {
        for k in ProtocolKind::ALL {
            assert_eq!(k.name().parse::<ProtocolKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("nope".parse::<ProtocolKind>().is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let cfg = ExperimentConfig {
            protocol: ProtocolSpec::new(ProtocolKind::CisWillard),
            caps: CapsSpec { cd: true, ..Default::default() },
            n: vec![4],
            strategy: StrategySpec::scenario(Scenario::Static),
            trials: 0,
            seed: Some(1),
            horizon: 1000,
            outputs: Outputs::default(),
        };
        assert!(matches!(monte_carlo(&cfg), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn config_json_reports_line() {
        let err = ExperimentConfig::from_json("x.json", "{\n  \"protocol\": {\"kind\": \"pi-mod\"},\n  \"n\": [4],\n  \"strategy\": 3\n}")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x.json") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn config_json_defaults() {
        let cfg = ExperimentConfig::from_json(
            "c.json",
            r#"{"protocol": {"kind": "pi-mod", "epsilon": "1/8"}, "n": [4, 8],
                "strategy": {"kind": "scenario", "scenario": "random"}, "trials": 3, "seed": 9}"#,
        )
        .unwrap();
        assert_eq!(cfg.horizon, DEFAULT_HORIZON);
        assert!(cfg.caps(4).kn);
        let report = monte_carlo(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].trials, 3);
        assert_eq!(monte_carlo(&cfg).unwrap(), report);
    }
}
