//! Running a static algorithm under arbitrary arrivals.
//!
//! A starting process listens until it hears two silent rounds in a row.
//! It then alternates a busy round, in which every competitor transmits,
//! with one round of the static algorithm. Busy rounds keep the channel
//! noisy, so latecomers wait until the competition is over and the
//! critical section has been released.

use super::MachineFactory;
use crate::channel::{payload, Capabilities, ChannelAction, Feedback, ProcessId};
use crate::protocol::{ChannelView, ConfigError, EntryMachine, Step, StepInput};

/// Wraps a static factory.
#[derive(Debug, Clone)]
pub struct Dynamic<F>(pub F);

impl<F: MachineFactory> MachineFactory for Dynamic<F> {
    fn name(&self) -> String {
        format!("{}-dyn", self.0.name())
    }

    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError> {
        if !caps.cd {
            return Err(ConfigError::MissingCapability { protocol: self.name(), requirement: "collision detection (cd)" });
        }
        self.0.check(caps)
    }

    fn machine(&self, id: ProcessId, view: &ChannelView) -> Box<dyn EntryMachine> {
        Box::new(StaticToDynamic::new(self.0.machine(id, view)))
    }

    fn resign_timeout(&self, view: &ChannelView) -> u64 {
        self.0.resign_timeout(view)
    }
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Sync { silent: u32 },
    Running { start: u64 },
}

pub struct StaticToDynamic<M> {
    inner: M,
    phase: Phase,
    pending: ChannelAction,
    static_feedback: Feedback,
}

impl<M: EntryMachine> StaticToDynamic<M> {
    pub fn new(inner: M) -> Self {
        StaticToDynamic {
            inner,
            phase: Phase::Sync { silent: 0 },
            pending: ChannelAction::Listen,
            static_feedback: Feedback::NoFeedback,
        }
    }
}

impl<M: EntryMachine> EntryMachine for StaticToDynamic<M> {
    fn restart(&mut self) {
        self.inner.restart();
        self.phase = Phase::Sync { silent: 0 };
    }

    fn step(&mut self, mut input: StepInput<'_>) -> Step {
        let r = input.local_round;
        if let Phase::Sync { silent } = self.phase {
            let silent = match r {
                0 => 0,
                _ if input.feedback.is_silence() => silent + 1,
                _ => 0,
            };
            if silent < 2 {
                self.phase = Phase::Sync { silent };
                return Step::Act(ChannelAction::Listen);
            }
            self.phase = Phase::Running { start: r };
            self.inner.restart();
            self.static_feedback = Feedback::NoFeedback;
        }
        let Phase::Running { start } = self.phase else { unreachable!() };
        let t = r - start;
        if t % 2 == 1 {
            return Step::Act(self.pending);
        }
        if t > 0 {
            self.static_feedback = input.feedback;
        }
        let fb = self.static_feedback;
        match self.inner.step(input.nested(t / 2, fb)) {
            Step::Act(a) => {
                self.pending = a;
                Step::Act(ChannelAction::transmit(input.id, payload::BUSY))
            }
            Step::EnterCritical => Step::EnterCritical,
            Step::Resign => {
                self.inner.restart();
                self.phase = Phase::Sync { silent: 0 };
                Step::Act(ChannelAction::Listen)
            }
        }
    }
}
