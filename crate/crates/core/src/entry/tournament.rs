//! Deterministic minimum-id election over id bits, with collision detection
//! and known `n`. Correct for simultaneous starts, but it always favours
//! small ids, so a process can be locked out.

use super::{ceil_log2, MachineFactory};
use crate::channel::{payload, Capabilities, ChannelAction, Feedback, ProcessId};
use crate::protocol::{ChannelView, ConfigError, EntryMachine, Step, StepInput};

#[derive(Debug, Clone, Default)]
pub struct Tournament;

impl MachineFactory for Tournament {
    fn name(&self) -> String {
        "tournament".into()
    }

    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError> {
        if !caps.cd {
            return Err(ConfigError::MissingCapability { protocol: self.name(), requirement: "collision detection (cd)" });
        }
        if !caps.kn {
            return Err(ConfigError::MissingCapability { protocol: self.name(), requirement: "known n (kn)" });
        }
        Ok(())
    }

    fn machine(&self, id: ProcessId, view: &ChannelView) -> Box<dyn EntryMachine> {
        Box::new(TournamentMachine::new(id, view.known_n.expect("tournament spawned without known n")))
    }

    fn resign_timeout(&self, view: &ChannelView) -> u64 {
        TournamentMachine::id_bits(view.known_n.unwrap_or(1)) as u64 + 8
    }
}

#[derive(Debug, Clone)]
pub struct TournamentMachine {
    id: ProcessId,
    bits: u32,
    transmitted: bool,
}

impl TournamentMachine {
    pub fn new(id: ProcessId, n: usize) -> Self {
        TournamentMachine { id, bits: Self::id_bits(n), transmitted: false }
    }

    pub fn id_bits(n: usize) -> u32 {
        ceil_log2(n as u64).max(1)
    }

    fn bit(&self, round: u64) -> bool {
        (self.id >> (self.bits as u64 - 1 - round)) & 1 == 1
    }
}

impl EntryMachine for TournamentMachine {
    fn restart(&mut self) {
        self.transmitted = false;
    }

    fn step(&mut self, input: StepInput<'_>) -> Step {
        let r = input.local_round;
        if r >= 1 && !self.transmitted && !matches!(input.feedback, Feedback::SilenceHeard) {
            return Step::Resign;
        }
        if r >= self.bits as u64 {
            return Step::EnterCritical;
        }
        self.transmitted = !self.bit(r);
        if self.transmitted {
            Step::Act(ChannelAction::transmit(input.id, payload::CHATTER))
        } else {
            Step::Act(ChannelAction::Listen)
        }
    }
}
