//! Entry-section algorithms and the wrappers that compose them.

mod cis;
mod duplex;
mod dynamic;
mod pi_mod;
mod slowdown;
mod tournament;
mod willard;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cis::{CheckIfSingle, CisOutcome, CisProtocol, CisWillard, CisWillardMachine};
pub use duplex::{Duplex, DuplexPoll, VirtualAction, VirtualOutcome, VirtualProtocol};
pub use dynamic::{Dynamic, StaticToDynamic};
pub use pi_mod::{PiConfig, PiMod, PiModMachine};
pub use slowdown::Slowdown3;
pub use tournament::{Tournament, TournamentMachine};
pub use willard::{Willard, WillardResult, WillardState};

use crate::channel::{Capabilities, ChannelAction, Feedback, ProcessId};
use crate::protocol::{
    ChannelView, ConfigError, Decision, EntryMachine, ProcessLogic, Protocol, Section, Step, StepInput,
};

/// `ceil(log2(x))` for `x >= 1`.
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// An error budget in `(0, 1)`, kept as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Epsilon {
    num: u64,
    den: u64,
}

impl Epsilon {
    pub const DEFAULT: Epsilon = Epsilon { num: 1, den: 16 };

    pub fn new(num: u64, den: u64) -> Result<Self, ConfigError> {
        if num == 0 || num >= den {
            return Err(ConfigError::Invalid(format!("epsilon {num}/{den} must lie strictly between 0 and 1")));
        }
        Ok(Epsilon { num, den })
    }

    /// `1 / 2^k`.
    pub fn pow2(k: u32) -> Self {
        assert!((1..64).contains(&k));
        Epsilon { num: 1, den: 1 << k }
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `ceil(log2(1/ε))`, exactly: the least `k` with `num · 2^k >= den`.
    pub fn log2_inv_ceil(&self) -> u32 {
        let mut k = 0;
        while (self.num as u128) << k < self.den as u128 {
            k += 1;
        }
        k
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Epsilon {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Invalid(format!("cannot parse epsilon '{s}'; expected a fraction such as 1/16"));
        let (num, den) = s.trim().split_once('/').ok_or_else(bad)?;
        let num = num.trim().parse().map_err(|_| bad())?;
        let den = den.trim().parse().map_err(|_| bad())?;
        Epsilon::new(num, den)
    }
}

impl TryFrom<String> for Epsilon {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Epsilon> for String {
    fn from(e: Epsilon) -> String {
        e.to_string()
    }
}

/// Builds per-process entry machines of one algorithm.
pub trait MachineFactory: Send + Sync {
    fn name(&self) -> String;

    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError>;

    fn machine(&self, id: ProcessId, view: &ChannelView) -> Box<dyn EntryMachine>;

    /// Rounds a resigned process waits for a critical section to start
    /// before it gives up and competes again.
    fn resign_timeout(&self, view: &ChannelView) -> u64;
}

impl<F: MachineFactory + ?Sized> MachineFactory for Box<F> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError> {
        (**self).check(caps)
    }

    fn machine(&self, id: ProcessId, view: &ChannelView) -> Box<dyn EntryMachine> {
        (**self).machine(id, view)
    }

    fn resign_timeout(&self, view: &ChannelView) -> u64 {
        (**self).resign_timeout(view)
    }
}

/// Runs an entry machine with an empty exit section. A resigned process
/// listens until it has heard a critical section and then a round without
/// one, and competes again from scratch.
pub struct Plain<F> {
    factory: F,
}

impl<F: MachineFactory> Plain<F> {
    pub fn new(factory: F) -> Self {
        Plain { factory }
    }
}

impl<F: MachineFactory> Protocol for Plain<F> {
    fn name(&self) -> String {
        self.factory.name()
    }

    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError> {
        self.factory.check(caps)
    }

    fn spawn(&self, id: ProcessId, view: &ChannelView) -> Box<dyn ProcessLogic> {
        Box::new(Resigning::new(self.factory.machine(id, view), self.factory.resign_timeout(view)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Waiting {
    No,
    /// Resigned this many rounds ago, no critical message heard yet.
    Resigned(u64),
    HeardCritical,
}

pub struct Resigning<M> {
    inner: M,
    timeout: u64,
    waiting: Waiting,
    /// Local round of the inner machine's current run.
    base: u64,
}

impl<M: EntryMachine> Resigning<M> {
    pub fn new(inner: M, timeout: u64) -> Self {
        Resigning { inner, timeout, waiting: Waiting::No, base: 0 }
    }
}

impl<M: EntryMachine> ProcessLogic for Resigning<M> {
    fn start(&mut self, section: Section) {
        if section == Section::Entry {
            self.inner.restart();
            self.waiting = Waiting::No;
            self.base = 0;
        }
    }

    fn step(&mut self, section: Section, mut input: StepInput<'_>) -> Decision {
        if section != Section::Entry {
            return Decision::Enter(Section::Remainder);
        }
        let fb = input.feedback;
        let released = match self.waiting {
            Waiting::No => false,
            Waiting::Resigned(_) if fb.heard_critical() => {
                self.waiting = Waiting::HeardCritical;
                false
            }
            Waiting::Resigned(t) if t + 1 >= self.timeout => true,
            Waiting::Resigned(t) => {
                self.waiting = Waiting::Resigned(t + 1);
                false
            }
            Waiting::HeardCritical => !fb.heard_critical(),
        };
        if released {
            self.inner.restart();
            self.waiting = Waiting::No;
            self.base = input.local_round;
        }
        if self.waiting != Waiting::No {
            return Decision::Act(ChannelAction::Listen);
        }
        let local = input.local_round - self.base;
        let fb = if local == 0 { Feedback::NoFeedback } else { fb };
        match self.inner.step(input.nested(local, fb)) {
            Step::Act(a) => Decision::Act(a),
            Step::EnterCritical => Decision::Enter(Section::Critical),
            Step::Resign => {
                self.waiting = Waiting::Resigned(0);
                Decision::Act(ChannelAction::Listen)
            }
        }
    }
}
