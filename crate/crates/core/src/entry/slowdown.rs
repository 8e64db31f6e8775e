//! Three physical rounds per base round: a `1` signal, a listening round,
//! then the base action. The base algorithm only sees feedback from the
//! third round.

use crate::channel::{payload, ChannelAction};
use crate::protocol::{EntryMachine, Step, StepInput};

pub struct Slowdown3<M> {
    inner: M,
    pending: ChannelAction,
    last_slot: u64,
}

impl<M: EntryMachine> Slowdown3<M> {
    pub fn new(inner: M) -> Self {
        Slowdown3 { inner, pending: ChannelAction::Listen, last_slot: 0 }
    }

    /// Slot (0, 1 or 2) of the most recent step.
    pub fn last_slot(&self) -> u64 {
        self.last_slot
    }
}

impl<M: EntryMachine> EntryMachine for Slowdown3<M> {
    fn restart(&mut self) {
        self.inner.restart();
        self.pending = ChannelAction::Listen;
    }

    fn step(&mut self, mut input: StepInput<'_>) -> Step {
        let r = input.local_round;
        self.last_slot = r % 3;
        match r % 3 {
            0 => {
                let fb = input.feedback;
                match self.inner.step(input.nested(r / 3, fb)) {
                    Step::Act(a) => {
                        self.pending = a;
                        Step::Act(ChannelAction::transmit(input.id, payload::ONE))
                    }
                    other => other,
                }
            }
            1 => Step::Act(ChannelAction::Listen),
            _ => Step::Act(self.pending),
        }
    }
}
