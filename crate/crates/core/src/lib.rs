pub mod adversary;
pub mod channel;
pub mod entry;
pub mod experiment;
pub mod fairness;
pub mod protocol;
pub mod rng;
pub mod sim;
pub mod stats;

pub use adversary::{AdversaryStrategy, ProcessPlan, Scenario, ScenarioParams, StrategyError, Visit};
pub use channel::{Capabilities, ChannelAction, Feedback, ProcessId};
pub use entry::Epsilon;
pub use experiment::{ExperimentConfig, ExperimentError, ProtocolKind, ProtocolSpec, StatsReport, StatsRow, StrategySpec};
pub use protocol::{ConfigError, Protocol, Section, Violation};
pub use sim::{run, ExecutionTrace, RunOptions, SimError, TrialSummary};
