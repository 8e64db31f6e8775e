//! Full-duplex rounds on a half-duplex collision-detection channel.
//!
//! A virtual round takes two physical rounds. In round A the virtual
//! transmitters transmit and everyone else listens. In round B every
//! listener that heard a single message in A acknowledges it, and the A
//! transmitters listen: any activity in B tells a transmitter it was alone.
//! This needs at least two active participants.

use crate::channel::{payload, ChannelAction, Feedback, ProcessId};
use crate::rng::CoinSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VirtualAction {
    Transmit(u32),
    Listen,
}

/// What a full-duplex channel with collision detection reports to every
/// participant, transmitters included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VirtualOutcome {
    Silence,
    Collision,
    Single { payload: u32, mine: bool },
}

/// A protocol written for the full-duplex channel.
pub trait VirtualProtocol {
    /// Action for the next virtual round.
    fn act(&mut self, coins: &mut dyn CoinSource) -> VirtualAction;

    fn observe(&mut self, outcome: VirtualOutcome);

    fn done(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DuplexPoll {
    Act(ChannelAction),
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Half {
    /// Next physical round is an A round.
    A,
    /// Round A is done; what we did there.
    B(VirtualAction),
    /// Round B is done; the virtual outcome is known except for transmitters.
    Settle { sent: Option<u32>, heard: VirtualOutcome },
}

#[derive(Clone)]
pub struct Duplex<V> {
    inner: V,
    half: Half,
}

fn outcome_of(fb: Feedback) -> VirtualOutcome {
    match fb {
        Feedback::SilenceHeard => VirtualOutcome::Silence,
        Feedback::Heard(m) => VirtualOutcome::Single { payload: m.payload, mine: false },
        _ => VirtualOutcome::Collision,
    }
}

impl<V: VirtualProtocol> Duplex<V> {
    pub fn new(inner: V) -> Self {
        Duplex { inner, half: Half::A }
    }

    pub fn inner(&self) -> &V {
        &self.inner
    }

    /// One physical round. `feedback` is the feedback of the previous
    /// physical round of this adapter (ignored on the first call).
    pub fn poll(&mut self, id: ProcessId, feedback: Feedback, coins: &mut dyn CoinSource) -> DuplexPoll {
        match self.half {
            Half::A => {}
            Half::B(VirtualAction::Transmit(p)) => {
                self.half = Half::Settle { sent: Some(p), heard: VirtualOutcome::Collision };
                return DuplexPoll::Act(ChannelAction::Listen);
            }
            Half::B(VirtualAction::Listen) => {
                let heard = outcome_of(feedback);
                self.half = Half::Settle { sent: None, heard };
                return DuplexPoll::Act(match heard {
                    VirtualOutcome::Single { .. } => ChannelAction::transmit(id, payload::ACK),
                    _ => ChannelAction::Listen,
                });
            }
            Half::Settle { sent, heard } => {
                let outcome = match sent {
                    Some(p) if !matches!(feedback, Feedback::SilenceHeard | Feedback::Noise) => {
                        VirtualOutcome::Single { payload: p, mine: true }
                    }
                    Some(_) => VirtualOutcome::Collision,
                    None => heard,
                };
                self.inner.observe(outcome);
                self.half = Half::A;
            }
        }
        if self.inner.done() {
            return DuplexPoll::Completed;
        }
        let action = self.inner.act(coins);
        self.half = Half::B(action);
        DuplexPoll::Act(match action {
            VirtualAction::Transmit(p) => ChannelAction::transmit(id, p),
            VirtualAction::Listen => ChannelAction::Listen,
        })
    }
}
