//! Detecting a lone participant, and the election built on it.

use super::duplex::{Duplex, DuplexPoll};
use super::willard::{Willard, WillardResult};
use super::{Epsilon, MachineFactory};
use crate::channel::{payload, Capabilities, ChannelAction, Feedback, ProcessId};
use crate::protocol::{ChannelView, ConfigError, EntryMachine, Step, StepInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CisOutcome {
    Act(ChannelAction),
    Alone,
    NotAlone,
}

/// Pairs of rounds; in each pair a fair coin decides whether the process
/// transmits in the first round and listens in the second, or the reverse.
/// Hearing anything but silence in a listened round means company.
#[derive(Debug, Clone)]
pub struct CheckIfSingle {
    pairs: u32,
    heads: bool,
    heard: bool,
}

impl CheckIfSingle {
    pub fn new(pairs: u32) -> Self {
        CheckIfSingle { pairs, heads: false, heard: false }
    }

    pub fn pairs(&self) -> u32 {
        self.pairs
    }

    /// Total length in rounds.
    pub fn rounds(&self) -> u64 {
        2 * self.pairs as u64
    }

    pub fn restart(&mut self) {
        self.heard = false;
    }

    pub fn step(&mut self, input: &mut StepInput<'_>) -> CisOutcome {
        let r = input.local_round;
        if r == 0 {
            self.heard = false;
        } else if !matches!(input.feedback, Feedback::NoFeedback | Feedback::SilenceHeard) {
            self.heard = true;
        }
        if r >= self.rounds() {
            return if self.heard { CisOutcome::NotAlone } else { CisOutcome::Alone };
        }
        if r % 2 == 0 {
            self.heads = input.coins.fair_coin();
        }
        if self.heads == (r % 2 == 0) {
            CisOutcome::Act(ChannelAction::transmit(input.id, payload::CHATTER))
        } else {
            CisOutcome::Act(ChannelAction::Listen)
        }
    }
}

fn pairs_for(epsilon: Epsilon, pairs: Option<u32>) -> u32 {
    pairs.unwrap_or_else(|| epsilon.log2_inv_ceil())
}

fn require_cd(name: String, caps: &Capabilities) -> Result<(), ConfigError> {
    if !caps.cd {
        return Err(ConfigError::MissingCapability { protocol: name, requirement: "collision detection (cd)" });
    }
    Ok(())
}

/// Lone-participant check on its own: enter when alone, otherwise resign.
#[derive(Debug, Clone)]
pub struct CisProtocol {
    pub epsilon: Epsilon,
    pub pairs: Option<u32>,
}

struct CisOnly(CheckIfSingle);

impl EntryMachine for CisOnly {
    fn restart(&mut self) {
        self.0.restart();
    }

    fn step(&mut self, mut input: StepInput<'_>) -> Step {
        match self.0.step(&mut input) {
            CisOutcome::Act(a) => Step::Act(a),
            CisOutcome::Alone => Step::EnterCritical,
            CisOutcome::NotAlone => Step::Resign,
        }
    }
}

impl MachineFactory for CisProtocol {
    fn name(&self) -> String {
        "check-if-single".into()
    }

    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError> {
        require_cd(self.name(), caps)
    }

    fn machine(&self, _id: ProcessId, _view: &ChannelView) -> Box<dyn EntryMachine> {
        Box::new(CisOnly(CheckIfSingle::new(pairs_for(self.epsilon, self.pairs))))
    }

    fn resign_timeout(&self, _view: &ChannelView) -> u64 {
        8
    }
}

/// Static election: lone-participant check, then a full-duplex election
/// among everyone who found company. Needs all participants to start in the
/// same round.
#[derive(Debug, Clone)]
pub struct CisWillard {
    pub epsilon: Epsilon,
    pub pairs: Option<u32>,
}

impl CisWillard {
    pub fn new(epsilon: Epsilon) -> Self {
        CisWillard { epsilon, pairs: None }
    }
}

impl MachineFactory for CisWillard {
    fn name(&self) -> String {
        "cis-willard".into()
    }

    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError> {
        require_cd(self.name(), caps)
    }

    fn machine(&self, _id: ProcessId, _view: &ChannelView) -> Box<dyn EntryMachine> {
        Box::new(CisWillardMachine::new(pairs_for(self.epsilon, self.pairs)))
    }

    fn resign_timeout(&self, _view: &ChannelView) -> u64 {
        8
    }
}

enum Stage {
    Check,
    Elect { duplex: Duplex<Willard>, start: u64 },
}

pub struct CisWillardMachine {
    cis: CheckIfSingle,
    stage: Stage,
}

impl CisWillardMachine {
    pub fn new(pairs: u32) -> Self {
        CisWillardMachine { cis: CheckIfSingle::new(pairs), stage: Stage::Check }
    }
}

impl EntryMachine for CisWillardMachine {
    fn restart(&mut self) {
        self.cis.restart();
        self.stage = Stage::Check;
    }

    fn step(&mut self, mut input: StepInput<'_>) -> Step {
        if let Stage::Check = self.stage {
            match self.cis.step(&mut input) {
                CisOutcome::Act(a) => return Step::Act(a),
                CisOutcome::Alone => return Step::EnterCritical,
                CisOutcome::NotAlone => {
                    self.stage = Stage::Elect { duplex: Duplex::new(Willard::new()), start: input.local_round }
                }
            }
        }
        let Stage::Elect { duplex, start } = &mut self.stage else { unreachable!() };
        let fb = if input.local_round == *start { Feedback::NoFeedback } else { input.feedback };
        match duplex.poll(input.id, fb, input.coins) {
            DuplexPoll::Act(a) => Step::Act(a),
            DuplexPoll::Completed => match duplex.inner().result() {
                Some(WillardResult::Won) => Step::EnterCritical,
                _ => Step::Resign,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{feedback_for, resolve_round};
    use crate::rng::ScriptedCoins;

    /// Runs `k` lone-participant checks in lockstep with scripted coins and
    /// returns each one's verdict.
    fn run_cis(k: usize, pairs: u32, coins: &[Vec<bool>]) -> Vec<CisOutcome> {
        let caps = Capabilities::new(k).with_cd(true);
        let view = ChannelView::from(&caps);
        let mut machines: Vec<CheckIfSingle> = (0..k).map(|_| CheckIfSingle::new(pairs)).collect();
        let mut sources: Vec<ScriptedCoins> = coins.iter().map(|c| ScriptedCoins::new(c.clone())).collect();
        let mut fb = vec![Feedback::NoFeedback; k];
        for r in 0..=2 * pairs as u64 {
            let mut outs = Vec::new();
            for p in 0..k {
                let mut input =
                    StepInput { id: p, local_round: r, feedback: fb[p], clock: None, view: &view, coins: &mut sources[p] };
                outs.push(machines[p].step(&mut input));
            }
            if r == 2 * pairs as u64 {
                return outs;
            }
            let actions: Vec<ChannelAction> = outs
                .iter()
                .map(|o| match o {
                    CisOutcome::Act(a) => *a,
                    _ => unreachable!(),
                })
                .collect();
            let out = resolve_round(&actions);
            fb = actions.iter().map(|a| feedback_for(&out, a.is_transmit(), &caps)).collect();
        }
        unreachable!()
    }

    #[test]
    fn alone_enters() {
        assert_eq!(run_cis(1, 3, &[vec![true, false, true]]), vec![CisOutcome::Alone]);
    }

    #[test]
    fn two_with_one_pair_escape_half_the_time() {
        let mut escapes = 0;
        for code in 0..4u32 {
            let coins = vec![vec![code & 1 == 1], vec![code & 2 == 2]];
            let v = run_cis(2, 1, &coins);
            assert_eq!(v[0], v[1], "verdicts agree");
            if v[0] == CisOutcome::Alone {
                escapes += 1;
            }
        }
        assert_eq!(escapes, 2);
    }
}
