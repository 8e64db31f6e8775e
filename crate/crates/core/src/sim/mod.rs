//! Round-by-round simulation of protocol, adversary and channel.

mod metrics;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{
    exclusion_report, lockout_report, makespan, CriticalVisit, EntryRecord, ExclusionReport, Gap, LockoutReport,
    MakespanReport, MetricsAccumulator,
};
pub use trace::{
    ExecutionTrace, ProcessRound, RoundRecord, SectionEvent, TraceIoError, TraceMeta, TransitionCause,
};

use crate::adversary::{AdversaryStrategy, SectionDriver};
use crate::channel::{feedback_for, resolve_round, Capabilities, ChannelAction, ChannelOutcome, Feedback, ProcessId};
use crate::protocol::{critical_step, ChannelView, ConfigError, Decision, ProcessLogic, Protocol, Section, StepInput};
use crate::rng::{stream_seed, CoinSource, SimRng};

pub const DEFAULT_HORIZON: u64 = 1_000_000;

/// Section changes a process may make before acting in one round.
const MAX_HOPS: usize = 8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("strategy covers {got} processes but n = {n}")]
    StrategySize { got: usize, n: usize },
    #[error("round {round}, process {process}: {detail}")]
    Protocol { round: u64, process: ProcessId, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Trial seed; process `p` draws coins from `stream_seed(seed, p)`.
    pub seed: u64,
    pub horizon: u64,
}

impl RunOptions {
    pub fn new(seed: u64) -> Self {
        RunOptions { seed, horizon: DEFAULT_HORIZON }
    }
}

/// Everything that happened in one round.
pub struct RoundView<'a> {
    pub round: u64,
    pub outcome: &'a ChannelOutcome,
    pub sections: &'a [Section],
    pub actions: &'a [ChannelAction],
    pub feedback: &'a [Feedback],
    pub events: &'a [SectionEvent],
    pub losses: &'a [Option<u32>],
}

pub trait RoundObserver {
    fn observe(&mut self, view: &RoundView<'_>);
}

impl<T: RoundObserver + ?Sized> RoundObserver for &mut T {
    fn observe(&mut self, view: &RoundView<'_>) {
        (**self).observe(view)
    }
}

impl<A: RoundObserver, B: RoundObserver> RoundObserver for (A, B) {
    fn observe(&mut self, view: &RoundView<'_>) {
        self.0.observe(view);
        self.1.observe(view);
    }
}

/// Collects every round into [`RoundRecord`]s.
#[derive(Debug, Default)]
pub struct TraceRecorder {
    pub rounds: Vec<RoundRecord>,
}

impl RoundObserver for TraceRecorder {
    fn observe(&mut self, view: &RoundView<'_>) {
        let processes = (0..view.sections.len())
            .map(|p| ProcessRound {
                section: view.sections[p],
                action: view.actions[p],
                feedback: view.feedback[p],
                loss: view.losses[p],
            })
            .collect();
        self.rounds.push(RoundRecord {
            round: view.round,
            outcome: *view.outcome,
            events: view.events.to_vec(),
            processes,
        });
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStatus {
    pub rounds: u64,
    pub truncated: bool,
}

/// The simulation state between rounds.
pub struct Engine {
    caps: Capabilities,
    view: ChannelView,
    procs: Vec<Box<dyn ProcessLogic>>,
    coins: Vec<Box<dyn CoinSource>>,
    driver: SectionDriver,
    sections: Vec<Section>,
    local: Vec<u64>,
    last_feedback: Vec<Feedback>,
    actions: Vec<ChannelAction>,
    feedback: Vec<Feedback>,
    losses: Vec<Option<u32>>,
    events: Vec<SectionEvent>,
    round: u64,
}

impl Engine {
    pub fn new(
        protocol: &dyn Protocol,
        strategy: &AdversaryStrategy,
        caps: &Capabilities,
        coins: Vec<Box<dyn CoinSource>>,
    ) -> Result<Self, SimError> {
        protocol.check(caps)?;
        let n = caps.n;
        if strategy.n() != n {
            return Err(SimError::StrategySize { got: strategy.n(), n });
        }
        if coins.len() != n {
            return Err(ConfigError::Invalid(format!("{} coin sources for n = {n}", coins.len())).into());
        }
        let view = ChannelView::from(caps);
        Ok(Engine {
            caps: *caps,
            view,
            procs: (0..n).map(|p| protocol.spawn(p, &view)).collect(),
            coins,
            driver: SectionDriver::new(strategy),
            sections: vec![Section::Remainder; n],
            local: vec![0; n],
            last_feedback: vec![Feedback::NoFeedback; n],
            actions: vec![ChannelAction::Idle; n],
            feedback: vec![Feedback::NoFeedback; n],
            losses: vec![None; n],
            events: Vec::new(),
            round: 0,
        })
    }

    /// Independent seeded coin streams for every process.
    pub fn seeded(
        protocol: &dyn Protocol,
        strategy: &AdversaryStrategy,
        caps: &Capabilities,
        seed: u64,
    ) -> Result<Self, SimError> {
        let coins = (0..caps.n)
            .map(|p| Box::new(SimRng::new(stream_seed(seed, p))) as Box<dyn CoinSource>)
            .collect();
        Self::new(protocol, strategy, caps, coins)
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    /// Every process is in the remainder section and will stay there.
    pub fn quiescent(&self) -> bool {
        self.sections
            .iter()
            .enumerate()
            .all(|(p, &s)| s == Section::Remainder && self.driver.finished(p))
    }

    fn fail(&self, process: ProcessId, detail: String) -> SimError {
        SimError::Protocol { round: self.round, process, detail }
    }

    fn transition(&mut self, p: ProcessId, to: Section, cause: TransitionCause) {
        let from = self.sections[p];
        self.events.push(SectionEvent { process: p, from, to, cause });
        self.sections[p] = to;
        self.local[p] = 0;
        self.last_feedback[p] = Feedback::NoFeedback;
        match to {
            Section::Entry | Section::Exit => self.procs[p].start(to),
            Section::Critical => self.driver.begin_critical(p),
            Section::Remainder => self.driver.begin_remainder(p),
        }
    }

    fn action_of(&mut self, p: ProcessId) -> Result<ChannelAction, SimError> {
        for _ in 0..MAX_HOPS {
            match self.sections[p] {
                Section::Remainder => {
                    if !self.driver.entry_due(p) {
                        return Ok(ChannelAction::Idle);
                    }
                    self.transition(p, Section::Entry, TransitionCause::Adversary);
                }
                Section::Critical => {
                    if !self.driver.critical_over(p) {
                        return Ok(critical_step(p));
                    }
                    self.transition(p, Section::Exit, TransitionCause::Adversary);
                }
                section => {
                    let input = StepInput {
                        id: p,
                        local_round: self.local[p],
                        feedback: self.last_feedback[p],
                        clock: self.caps.gc.then_some(self.round),
                        view: &self.view,
                        coins: &mut *self.coins[p],
                    };
                    match self.procs[p].step(section, input) {
                        Decision::Act(ChannelAction::Idle) => {
                            return Err(self.fail(p, format!("idle in the {section} section")))
                        }
                        Decision::Act(ChannelAction::Transmit(m)) if m.is_critical() => {
                            return Err(self.fail(p, format!("critical-labelled message in the {section} section")))
                        }
                        Decision::Act(a) => return Ok(a),
                        Decision::Enter(to) if Section::is_legal_transition(section, to) => {
                            self.transition(p, to, TransitionCause::Protocol)
                        }
                        Decision::Enter(to) => {
                            return Err(self.fail(p, format!("illegal transition {section} -> {to}")))
                        }
                    }
                }
            }
        }
        Err(self.fail(p, format!("more than {MAX_HOPS} section changes in one round")))
    }

    /// Simulates one round and reports it to `obs`.
    pub fn step(&mut self, obs: &mut dyn RoundObserver) -> Result<(), SimError> {
        self.events.clear();
        for p in 0..self.sections.len() {
            self.actions[p] = self.action_of(p)?;
        }
        let outcome = resolve_round(&self.actions);
        for p in 0..self.sections.len() {
            let fb = match self.actions[p] {
                ChannelAction::Listen => feedback_for(&outcome, false, &self.caps),
                _ => Feedback::NoFeedback,
            };
            self.feedback[p] = fb;
            self.last_feedback[p] = fb;
            self.local[p] += 1;
            self.losses[p] = self.procs[p].loss_counter();
            if matches!(self.sections[p], Section::Remainder | Section::Critical) {
                self.driver.tick(p);
            }
        }
        obs.observe(&RoundView {
            round: self.round,
            outcome: &outcome,
            sections: &self.sections,
            actions: &self.actions,
            feedback: &self.feedback,
            events: &self.events,
            losses: &self.losses,
        });
        self.round += 1;
        Ok(())
    }

    /// Steps until quiescence or the horizon.
    pub fn run_to_end(&mut self, horizon: u64, obs: &mut dyn RoundObserver) -> Result<RunStatus, SimError> {
        while self.round < horizon {
            if self.quiescent() {
                return Ok(RunStatus { rounds: self.round, truncated: false });
            }
            self.step(obs)?;
        }
        Ok(RunStatus { rounds: self.round, truncated: !self.quiescent() })
    }
}

/// Runs with seeded coins, feeding `obs`.
pub fn run_observed(
    protocol: &dyn Protocol,
    strategy: &AdversaryStrategy,
    caps: &Capabilities,
    opts: &RunOptions,
    obs: &mut dyn RoundObserver,
) -> Result<RunStatus, SimError> {
    Engine::seeded(protocol, strategy, caps, opts.seed)?.run_to_end(opts.horizon, obs)
}

/// Runs with seeded coins and records the full trace.
pub fn run(
    protocol: &dyn Protocol,
    strategy: &AdversaryStrategy,
    caps: &Capabilities,
    opts: &RunOptions,
) -> Result<ExecutionTrace, SimError> {
    let mut rec = TraceRecorder::default();
    let status = run_observed(protocol, strategy, caps, opts, &mut rec)?;
    Ok(ExecutionTrace {
        meta: TraceMeta {
            n: caps.n,
            seed: opts.seed,
            caps: *caps,
            protocol: protocol.name(),
            strategy: strategy.name.clone(),
            horizon: opts.horizon,
            rounds: status.rounds,
            truncated: status.truncated,
        },
        rounds: rec.rounds,
    })
}

/// Per-trial numbers kept when full traces are too large.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub rounds: u64,
    pub truncated: bool,
    pub admissible: bool,
    pub max_gap: u64,
    pub open_gap: bool,
    pub visits: usize,
    pub violated_visits: usize,
    pub entries: usize,
    /// Entry starts that never reached the critical section.
    pub unfulfilled_starts: Vec<u64>,
}

impl TrialSummary {
    pub fn from_metrics(seed: u64, status: RunStatus, m: &MetricsAccumulator) -> Self {
        let mk = m.makespan();
        let ex = m.exclusion();
        let lo = m.lockout();
        TrialSummary {
            seed,
            rounds: status.rounds,
            truncated: status.truncated,
            admissible: mk.admissible,
            open_gap: mk.open_gap(),
            max_gap: mk.max_gap,
            visits: ex.visits.len(),
            violated_visits: ex.violated_visits,
            entries: lo.entries.len(),
            unfulfilled_starts: lo.unfulfilled(0).iter().map(|e| e.entry_start).collect(),
        }
    }
}

/// Round in which some process first enters the critical section, or
/// `None` if nobody does before `horizon`.
pub fn first_entry(
    protocol: &dyn Protocol,
    strategy: &AdversaryStrategy,
    caps: &Capabilities,
    opts: &RunOptions,
) -> Result<Option<u64>, SimError> {
    struct First(Option<u64>);
    impl RoundObserver for First {
        fn observe(&mut self, view: &RoundView<'_>) {
            if self.0.is_none() && view.events.iter().any(|e| e.to == Section::Critical) {
                self.0 = Some(view.round);
            }
        }
    }
    let mut engine = Engine::seeded(protocol, strategy, caps, opts.seed)?;
    let mut first = First(None);
    while first.0.is_none() && engine.round() < opts.horizon && !engine.quiescent() {
        engine.step(&mut first)?;
    }
    Ok(first.0)
}

/// Runs in metrics-only mode.
pub fn run_summary(
    protocol: &dyn Protocol,
    strategy: &AdversaryStrategy,
    caps: &Capabilities,
    opts: &RunOptions,
) -> Result<TrialSummary, SimError> {
    let mut acc = MetricsAccumulator::new(caps.n);
    let status = run_observed(protocol, strategy, caps, opts, &mut acc)?;
    Ok(TrialSummary::from_metrics(opts.seed, status, &acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::ProcessPlan;
    use crate::protocol::validate_trace;

    /// Listens for `len` rounds, then enters; empty exit.
    struct Fixed {
        len: u64,
    }

    struct FixedLogic {
        len: u64,
    }

    impl ProcessLogic for FixedLogic {
        fn start(&mut self, _section: Section) {}

        fn step(&mut self, section: Section, input: StepInput<'_>) -> Decision {
            match section {
                Section::Entry if input.local_round < self.len => Decision::Act(ChannelAction::Listen),
                Section::Entry => Decision::Enter(Section::Critical),
                _ => Decision::Enter(Section::Remainder),
            }
        }
    }

    impl Protocol for Fixed {
        fn name(&self) -> String {
            "fixed".into()
        }

        fn check(&self, _caps: &Capabilities) -> Result<(), ConfigError> {
            Ok(())
        }

        fn spawn(&self, _id: ProcessId, _view: &ChannelView) -> Box<dyn ProcessLogic> {
            Box::new(FixedLogic { len: self.len })
        }
    }

    struct Idler;

    impl ProcessLogic for Idler {
        fn start(&mut self, _section: Section) {}

        fn step(&mut self, _section: Section, _input: StepInput<'_>) -> Decision {
            Decision::Act(ChannelAction::Idle)
        }
    }

    impl Protocol for Idler {
        fn name(&self) -> String {
            "idler".into()
        }

        fn check(&self, _caps: &Capabilities) -> Result<(), ConfigError> {
            Ok(())
        }

        fn spawn(&self, _id: ProcessId, _view: &ChannelView) -> Box<dyn ProcessLogic> {
            Box::new(Idler)
        }
    }

    fn one(remainder: u64, critical: u64) -> AdversaryStrategy {
        AdversaryStrategy::new("t", vec![ProcessPlan::once(remainder, critical)]).unwrap()
    }

    #[test]
    fn single_process_timeline() {
        let t = run(&Fixed { len: 2 }, &one(0, 3), &Capabilities::new(1), &RunOptions::new(1)).unwrap();
        let secs: Vec<Section> = t.rounds.iter().map(|r| r.processes[0].section).collect();
        use Section::*;
        assert_eq!(secs, vec![Entry, Entry, Critical, Critical, Critical, Remainder]);
        assert!(!t.meta.truncated);
        assert_eq!(t.meta.rounds, 6);
        assert!(validate_trace(&t).is_empty());
        assert_eq!(makespan(&t).max_gap, 2);
        assert_eq!(t.rounds[5].events.len(), 2);
    }

    #[test]
    fn back_to_back_visits() {
        let s = AdversaryStrategy::new("t", vec![ProcessPlan::from_flat(0, &[5, 1, 0, 1]).unwrap()]).unwrap();
        let t = run(&Fixed { len: 0 }, &s, &Capabilities::new(1), &RunOptions::new(1)).unwrap();
        let crit: Vec<u64> = t
            .rounds
            .iter()
            .filter(|r| r.processes[0].section == Section::Critical)
            .map(|r| r.round)
            .collect();
        assert_eq!(crit, vec![5, 6]);
        assert!(validate_trace(&t).is_empty());
    }

    #[test]
    fn horizon_truncates() {
        let s = AdversaryStrategy::new("t", vec![ProcessPlan { visits: vec![crate::adversary::Visit { remainder: 1, critical: 1 }], repeat: true }]).unwrap();
        let t = run(&Fixed { len: 1 }, &s, &Capabilities::new(1), &RunOptions { seed: 0, horizon: 50 }).unwrap();
        assert!(t.meta.truncated);
        assert_eq!(t.rounds.len(), 50);
    }

    #[test]
    fn idle_in_entry_is_an_error() {
        let err = run(&Idler, &one(0, 1), &Capabilities::new(1), &RunOptions::new(0)).unwrap_err();
        assert!(matches!(err, SimError::Protocol { round: 0, process: 0, .. }));
    }

    #[test]
    fn strategy_size_checked() {
        let err = run(&Fixed { len: 0 }, &one(0, 1), &Capabilities::new(2), &RunOptions::new(0)).unwrap_err();
        assert!(matches!(err, SimError::StrategySize { got: 1, n: 2 }));
    }

    #[test]
    fn summary_matches_trace_metrics() {
        let s = AdversaryStrategy::simultaneous(3, 2);
        let caps = Capabilities::new(3);
        let opts = RunOptions::new(4);
        let t = run(&Fixed { len: 3 }, &s, &caps, &opts).unwrap();
        let sum = run_summary(&Fixed { len: 3 }, &s, &caps, &opts).unwrap();
        assert_eq!(sum.max_gap, makespan(&t).max_gap);
        assert_eq!(sum.violated_visits, exclusion_report(&t).violated_visits);
        assert_eq!(sum.violated_visits, 3);
        assert!(!sum.admissible);
    }
}
