//! Process lifecycle, the protocol interface, and trace legality rules.
//!
//! A process cycles through remainder, entry, critical and exit. The
//! adversary owns remainder and critical; protocols own entry and exit and
//! are driven one round at a time through [`ProcessLogic::step`], always
//! seeing the feedback of the previous round.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Capabilities, ChannelAction, Feedback, Message, ProcessId};
use crate::rng::CoinSource;
use crate::sim::ExecutionTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Remainder,
    Entry,
    Critical,
    Exit,
}

impl Section {
    /// The only legal successor.
    pub fn next(self) -> Section {
        match self {
            Section::Remainder => Section::Entry,
            Section::Entry => Section::Critical,
            Section::Critical => Section::Exit,
            Section::Exit => Section::Remainder,
        }
    }

    pub fn is_legal_transition(from: Section, to: Section) -> bool {
        from.next() == to
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Section::Remainder => "remainder",
            Section::Entry => "entry",
            Section::Critical => "critical",
            Section::Exit => "exit",
        };
        f.write_str(s)
    }
}

/// A protocol's choice for the current round: act on the channel, or leave
/// the current section before acting.
///
/// `Enter` takes effect between the previous round and this one, so a
/// process that returns `Enter(Critical)` at local round `t` spends round
/// `t` in the critical section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Act(ChannelAction),
    Enter(Section),
}

/// What a protocol may know about the model. `n` is hidden unless KN.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelView {
    pub cd: bool,
    pub gc: bool,
    pub known_n: Option<usize>,
}

impl From<&Capabilities> for ChannelView {
    fn from(caps: &Capabilities) -> Self {
        ChannelView {
            cd: caps.cd,
            gc: caps.gc,
            known_n: caps.known_n(),
        }
    }
}

/// Inputs to one protocol step.
pub struct StepInput<'a> {
    pub id: ProcessId,
    /// Rounds elapsed in the current run; 0 on the first round.
    pub local_round: u64,
    /// Feedback of the previous round; `NoFeedback` at local round 0.
    pub feedback: Feedback,
    /// Global round number, present iff the model has a global clock.
    pub clock: Option<u64>,
    pub view: &'a ChannelView,
    pub coins: &'a mut dyn CoinSource,
}

impl<'a> StepInput<'a> {
    /// Same process and round, different local counter and feedback. Used by
    /// wrappers that run an inner protocol on a subset of rounds.
    pub fn nested<'b>(&'b mut self, local_round: u64, feedback: Feedback) -> StepInput<'b> {
        StepInput {
            id: self.id,
            local_round,
            feedback,
            clock: self.clock,
            view: self.view,
            coins: &mut *self.coins,
        }
    }
}

/// Per-process protocol state for the entry and exit sections.
pub trait ProcessLogic: Send {
    /// A new run of `section` (entry or exit) begins this round.
    fn start(&mut self, section: Section);

    /// One round inside `section` (entry or exit).
    fn step(&mut self, section: Section, input: StepInput<'_>) -> Decision;

    /// Loss counter, for protocols that keep one.
    fn loss_counter(&self) -> Option<u32> {
        None
    }
}

/// Result of one step of an entry-section algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Act(ChannelAction),
    EnterCritical,
    /// Stop competing and stay silent until the channel is released.
    Resign,
}

/// An entry-section algorithm that can be composed by wrappers.
pub trait EntryMachine: Send {
    /// Forget all state; the next step is local round 0.
    fn restart(&mut self);

    fn step(&mut self, input: StepInput<'_>) -> Step;
}

impl<M: EntryMachine + ?Sized> EntryMachine for Box<M> {
    fn restart(&mut self) {
        (**self).restart()
    }

    fn step(&mut self, input: StepInput<'_>) -> Step {
        (**self).step(input)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("protocol {protocol} requires {requirement}")]
    MissingCapability {
        protocol: String,
        requirement: &'static str,
    },
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// A protocol: a factory of per-process logic.
pub trait Protocol: Send + Sync {
    fn name(&self) -> String;

    /// Rejects models the protocol cannot run in.
    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError>;

    fn spawn(&self, id: ProcessId, view: &ChannelView) -> Box<dyn ProcessLogic>;
}

/// The critical section's action: a critical-labelled `1` every round.
pub fn critical_step(id: ProcessId) -> ChannelAction {
    ChannelAction::Transmit(Message::critical(id))
}

/// Rule breaks detectable from a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    RemainderTransmission { round: u64, process: ProcessId },
    MissingCriticalMessage { round: u64, process: ProcessId },
    /// A critical-labelled message sent outside the critical section.
    CriticalLabelOutside { round: u64, process: ProcessId },
    /// `Idle` outside the remainder section, or a non-idle remainder process.
    IllegalIdle { round: u64, process: ProcessId },
    IllegalTransition { round: u64, process: ProcessId, from: Section, to: Section },
    ExclusionViolation { round: u64, processes: Vec<ProcessId> },
}

impl Violation {
    /// Exclusion breaks are expected (with small probability) from
    /// ε-protocols; everything else is a protocol or simulator bug.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, Violation::ExclusionViolation { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RemainderTransmission { round, process } => {
                write!(f, "round {round}: process {process} transmitted in the remainder section")
            }
            Violation::MissingCriticalMessage { round, process } => {
                write!(f, "round {round}: process {process} did not send its critical message")
            }
            Violation::CriticalLabelOutside { round, process } => {
                write!(f, "round {round}: process {process} sent a critical message outside the critical section")
            }
            Violation::IllegalIdle { round, process } => write!(f, "round {round}: process {process} idled illegally"),
            Violation::IllegalTransition { round, process, from, to } => {
                write!(f, "round {round}: process {process} moved from {from} to {to}")
            }
            Violation::ExclusionViolation { round, processes } => {
                write!(f, "round {round}: processes {processes:?} share the critical section")
            }
        }
    }
}

/// Every rule break in `trace`, in round order.
pub fn validate_trace(trace: &ExecutionTrace) -> Vec<Violation> {
    let n = trace.meta.n;
    let mut out = Vec::new();
    let mut prev = vec![Section::Remainder; n];
    for rec in &trace.rounds {
        let round = rec.round;
        let mut cur = prev.clone();
        let mut bad = vec![false; n];
        for ev in &rec.events {
            if ev.process >= n {
                continue;
            }
            let p = ev.process;
            if bad[p] {
                continue;
            }
            if ev.from != cur[p] || !Section::is_legal_transition(ev.from, ev.to) {
                out.push(Violation::IllegalTransition { round, process: p, from: ev.from, to: ev.to });
                bad[p] = true;
                continue;
            }
            cur[p] = ev.to;
        }
        let mut in_critical = Vec::new();
        for (p, pr) in rec.processes.iter().enumerate() {
            if !bad[p] && cur[p] != pr.section {
                out.push(Violation::IllegalTransition { round, process: p, from: cur[p], to: pr.section });
            }
            match (pr.section, &pr.action) {
                (Section::Remainder, ChannelAction::Transmit(_)) => {
                    out.push(Violation::RemainderTransmission { round, process: p })
                }
                (Section::Remainder, ChannelAction::Listen) => out.push(Violation::IllegalIdle { round, process: p }),
                (Section::Critical, ChannelAction::Transmit(m)) if m.is_critical() => {}
                (Section::Critical, _) => out.push(Violation::MissingCriticalMessage { round, process: p }),
                (_, ChannelAction::Transmit(m)) if m.is_critical() => {
                    out.push(Violation::CriticalLabelOutside { round, process: p })
                }
                (Section::Entry | Section::Exit, ChannelAction::Idle) => {
                    out.push(Violation::IllegalIdle { round, process: p })
                }
                _ => {}
            }
            if pr.section == Section::Critical {
                in_critical.push(p);
            }
        }
        if in_critical.len() >= 2 {
            out.push(Violation::ExclusionViolation { round, processes: in_critical });
        }
        prev = rec.processes.iter().map(|pr| pr.section).collect();
    }
    out
}
