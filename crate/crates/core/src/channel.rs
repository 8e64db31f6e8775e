//! Single-round channel resolution and capability-masked feedback.
//!
//! Everything here is a pure function of its arguments: no randomness, no
//! shared state.

use serde::{Deserialize, Serialize};

/// Index of a process in `[0, n)`.
pub type ProcessId = usize;

/// Well-known message payloads.
///
/// The fairness transform speaks in bits `0` and `1`; the remaining values
/// keep ordinary protocol chatter from ever matching those patterns.
pub mod payload {
    pub const ZERO: u32 = 0;
    pub const ONE: u32 = 1;
    pub const CHATTER: u32 = 2;
    pub const ACK: u32 = 3;
    pub const BUSY: u32 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Critical,
    Protocol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    /// Carried for traces. Protocols only read it when their model allows ids.
    pub sender: ProcessId,
    pub label: Label,
    pub payload: u32,
}

impl Message {
    /// The message every critical-section occupant sends each round.
    pub fn critical(sender: ProcessId) -> Self {
        Message {
            sender,
            label: Label::Critical,
            payload: payload::ONE,
        }
    }

    pub fn protocol(sender: ProcessId, payload: u32) -> Self {
        Message {
            sender,
            label: Label::Protocol,
            payload,
        }
    }

    pub fn is_critical(&self) -> bool {
        self.label == Label::Critical
    }
}

/// What a process does with the channel in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelAction {
    Transmit(Message),
    Listen,
    /// Remainder-section processes neither transmit nor listen.
    Idle,
}

impl ChannelAction {
    pub fn transmit(sender: ProcessId, payload: u32) -> Self {
        ChannelAction::Transmit(Message::protocol(sender, payload))
    }

    pub fn is_transmit(&self) -> bool {
        matches!(self, ChannelAction::Transmit(_))
    }
}

/// Physical result of one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelOutcome {
    Silence,
    Collision,
    Single(Message),
}

/// What one process perceives of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Feedback {
    /// Silence or collision without collision detection.
    Noise,
    SilenceHeard,
    CollisionHeard,
    Heard(Message),
    /// Transmitters, idle processes, and the first round of a section run.
    NoFeedback,
}

impl Feedback {
    pub fn heard_critical(&self) -> bool {
        matches!(self, Feedback::Heard(m) if m.is_critical())
    }

    pub fn is_silence(&self) -> bool {
        matches!(self, Feedback::SilenceHeard)
    }
}

/// Channel settings of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    /// Collision detection.
    pub cd: bool,
    /// Global clock.
    pub gc: bool,
    /// Processes know `n`.
    pub kn: bool,
    pub n: usize,
}

impl Capabilities {
    pub fn new(n: usize) -> Self {
        Capabilities {
            cd: false,
            gc: false,
            kn: false,
            n,
        }
    }

    pub fn with_cd(mut self, cd: bool) -> Self {
        self.cd = cd;
        self
    }

    pub fn with_gc(mut self, gc: bool) -> Self {
        self.gc = gc;
        self
    }

    pub fn with_kn(mut self, kn: bool) -> Self {
        self.kn = kn;
        self
    }

    /// `n` as seen by protocols.
    pub fn known_n(&self) -> Option<usize> {
        self.kn.then_some(self.n)
    }
}

/// Resolves one round from every process's action.
pub fn resolve_round(actions: &[ChannelAction]) -> ChannelOutcome {
    let mut single = None;
    for action in actions {
        if let ChannelAction::Transmit(m) = action {
            if single.is_some() {
                return ChannelOutcome::Collision;
            }
            single = Some(*m);
        }
    }
    match single {
        Some(m) => ChannelOutcome::Single(m),
        None => ChannelOutcome::Silence,
    }
}

/// Feedback of a listening or transmitting process. Half-duplex: a
/// transmitter learns nothing, not even success.
pub fn feedback_for(outcome: &ChannelOutcome, did_transmit: bool, caps: &Capabilities) -> Feedback {
    if did_transmit {
        return Feedback::NoFeedback;
    }
    match outcome {
        ChannelOutcome::Single(m) => Feedback::Heard(*m),
        ChannelOutcome::Silence if caps.cd => Feedback::SilenceHeard,
        ChannelOutcome::Collision if caps.cd => Feedback::CollisionHeard,
        ChannelOutcome::Silence | ChannelOutcome::Collision => Feedback::Noise,
    }
}
