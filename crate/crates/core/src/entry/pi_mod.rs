//! Probability increase with a listening prefix, for the known-`n` model.

use serde::{Deserialize, Serialize};

use super::{ceil_log2, Epsilon, MachineFactory};
use crate::channel::{payload, Capabilities, ChannelAction, Feedback, ProcessId};
use crate::protocol::{ChannelView, ConfigError, EntryMachine, Step, StepInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiConfig {
    pub n: usize,
    pub epsilon: Epsilon,
    pub c_phase: u32,
    pub c_phases: u32,
}

impl PiConfig {
    pub fn new(n: usize, epsilon: Epsilon) -> Self {
        PiConfig { n, epsilon, c_phase: 1, c_phases: 1 }
    }

    pub fn phase_len(&self) -> u64 {
        self.c_phase as u64 * self.epsilon.log2_inv_ceil().max(1) as u64
    }

    pub fn num_phases(&self) -> u64 {
        self.c_phases as u64 * ceil_log2(self.n as u64).max(1) as u64
    }

    /// Length of the listening prefix, and of the probability-increase run.
    pub fn k(&self) -> u64 {
        self.phase_len() * self.num_phases()
    }

    /// Transmit probability exponent in round `j` of the probability-increase
    /// run: phase `i` (1-based) transmits with probability `2^-i`.
    pub fn exponent_at(&self, j: u64) -> u32 {
        (j / self.phase_len() + 1) as u32
    }
}

/// Factory for the known-`n` protocol. `n` and ε come from the
/// configuration; the channel view must expose `n`.
#[derive(Debug, Clone)]
pub struct PiMod {
    pub epsilon: Epsilon,
    pub c_phase: u32,
    pub c_phases: u32,
}

impl PiMod {
    pub const DEFAULT_C_PHASE: u32 = 2;
    pub const DEFAULT_C_PHASES: u32 = 1;

    pub fn new(epsilon: Epsilon) -> Self {
        PiMod { epsilon, c_phase: Self::DEFAULT_C_PHASE, c_phases: Self::DEFAULT_C_PHASES }
    }

    fn config(&self, n: usize) -> PiConfig {
        PiConfig { n, epsilon: self.epsilon, c_phase: self.c_phase, c_phases: self.c_phases }
    }
}

impl MachineFactory for PiMod {
    fn name(&self) -> String {
        "pi-mod".into()
    }

    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError> {
        if !caps.kn {
            return Err(ConfigError::MissingCapability { protocol: self.name(), requirement: "known n (kn)" });
        }
        if self.c_phase == 0 || self.c_phases == 0 {
            return Err(ConfigError::Invalid("c_phase and c_phases must be positive".into()));
        }
        Ok(())
    }

    fn machine(&self, _id: ProcessId, view: &ChannelView) -> Box<dyn EntryMachine> {
        let n = view.known_n.expect("pi-mod spawned without known n");
        Box::new(PiModMachine::new(self.config(n)))
    }

    fn resign_timeout(&self, view: &ChannelView) -> u64 {
        2 * self.config(view.known_n.unwrap_or(1)).k()
    }
}

/// Listens for `k` rounds, then runs `k` rounds of probability increase,
/// resigning as soon as it hears any message; enters at local round `2k`.
#[derive(Debug, Clone)]
pub struct PiModMachine {
    cfg: PiConfig,
    k: u64,
}

impl PiModMachine {
    pub fn new(cfg: PiConfig) -> Self {
        PiModMachine { k: cfg.k(), cfg }
    }
}

impl EntryMachine for PiModMachine {
    fn restart(&mut self) {}

    fn step(&mut self, input: StepInput<'_>) -> Step {
        let r = input.local_round;
        if r >= 1 && matches!(input.feedback, Feedback::Heard(_)) {
            return Step::Resign;
        }
        if r >= 2 * self.k {
            return Step::EnterCritical;
        }
        if r >= self.k && input.coins.bernoulli_pow2(self.cfg.exponent_at(r - self.k)) {
            Step::Act(ChannelAction::transmit(input.id, payload::CHATTER))
        } else {
            Step::Act(ChannelAction::Listen)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Message;
    use crate::rng::{ScriptedCoins, SimRng};

    fn view(n: usize) -> ChannelView {
        ChannelView { cd: false, gc: false, known_n: Some(n) }
    }

    #[test]
    fn config_arithmetic() {
        let c = PiConfig::new(8, Epsilon::pow2(4));
        assert_eq!((c.phase_len(), c.num_phases(), c.k()), (4, 3, 12));
        assert_eq!(c.exponent_at(0), 1);
        assert_eq!(c.exponent_at(3), 1);
        assert_eq!(c.exponent_at(4), 2);
        assert_eq!(c.exponent_at(11), 3);
        let c = PiConfig { c_phase: 2, c_phases: 3, ..PiConfig::new(5, "1/10".parse().unwrap()) };
        assert_eq!((c.phase_len(), c.num_phases()), (8, 9));
    }

    #[test]
    fn lone_process_enters_at_2k() {
        let mut m = PiModMachine::new(PiConfig::new(8, Epsilon::pow2(4)));
        let v = view(8);
        let mut coins = SimRng::new(3);
        for r in 0..24 {
            let fb = if r == 0 { Feedback::NoFeedback } else { Feedback::Noise };
            let input = StepInput { id: 0, local_round: r, feedback: fb, clock: None, view: &v, coins: &mut coins };
            let s = m.step(input);
            assert!(matches!(s, Step::Act(_)), "round {r}: {s:?}");
            if r < 12 {
                assert_eq!(s, Step::Act(ChannelAction::Listen));
            }
        }
        let input = StepInput { id: 0, local_round: 24, feedback: Feedback::Noise, clock: None, view: &v, coins: &mut coins };
        assert_eq!(m.step(input), Step::EnterCritical);
    }

    #[test]
    fn hearing_a_message_resigns() {
        let mut m = PiModMachine::new(PiConfig::new(4, Epsilon::pow2(2)));
        let v = view(4);
        let mut coins = ScriptedCoins::default();
        let fb = Feedback::Heard(Message::protocol(1, payload::CHATTER));
        let input = StepInput { id: 0, local_round: 3, feedback: fb, clock: None, view: &v, coins: &mut coins };
        assert_eq!(m.step(input), Step::Resign);
    }

    #[test]
    fn requires_known_n() {
        let p = PiMod::new(Epsilon::pow2(4));
        assert!(matches!(p.check(&Capabilities::new(4)), Err(ConfigError::MissingCapability { .. })));
        assert!(p.check(&Capabilities::new(4).with_kn(true)).is_ok());
    }
}
