//! Leader election by searching for a good transmit-probability exponent.
//!
//! Every participant transmits with probability `2^-e` in each virtual
//! round. All participants see the same outcomes, so they walk the same
//! search over `e`: doubling while rounds collide, then a binary search
//! between the last colliding and the first silent exponent. A single
//! transmission ends the election.

use super::duplex::{VirtualAction, VirtualOutcome, VirtualProtocol};
use crate::channel::payload;
use crate::rng::CoinSource;

const MAX_EXPONENT: u32 = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WillardState {
    Doubling { e: u32 },
    /// Collision at `lo`, silence at `hi`.
    Binary { lo: u32, hi: u32 },
    /// One last probe at `e` before starting over.
    Final { e: u32 },
    Finished(WillardResult),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WillardResult {
    Won,
    Lost,
}

#[derive(Debug, Clone)]
pub struct Willard {
    state: WillardState,
    rounds: u64,
}

impl Default for Willard {
    fn default() -> Self {
        Self::new()
    }
}

impl Willard {
    pub fn new() -> Self {
        Willard { state: WillardState::Doubling { e: 1 }, rounds: 0 }
    }

    pub fn state(&self) -> WillardState {
        self.state
    }

    pub fn result(&self) -> Option<WillardResult> {
        match self.state {
            WillardState::Finished(r) => Some(r),
            _ => None,
        }
    }

    /// Virtual rounds used so far.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    fn exponent(&self) -> u32 {
        match self.state {
            WillardState::Doubling { e } | WillardState::Final { e } => e,
            WillardState::Binary { lo, hi } => (lo + hi) / 2,
            WillardState::Finished(_) => 0,
        }
    }

    fn after_binary(lo: u32, hi: u32) -> WillardState {
        if hi - lo <= 1 {
            WillardState::Final { e: hi }
        } else {
            WillardState::Binary { lo, hi }
        }
    }
}

impl VirtualProtocol for Willard {
    fn act(&mut self, coins: &mut dyn CoinSource) -> VirtualAction {
        if coins.bernoulli_pow2(self.exponent()) {
            VirtualAction::Transmit(payload::CHATTER)
        } else {
            VirtualAction::Listen
        }
    }

    fn observe(&mut self, outcome: VirtualOutcome) {
        use WillardState::*;
        self.rounds += 1;
        let e = self.exponent();
        self.state = match (self.state, outcome) {
            (Finished(r), _) => Finished(r),
            (_, VirtualOutcome::Single { mine: true, .. }) => Finished(WillardResult::Won),
            (_, VirtualOutcome::Single { mine: false, .. }) => Finished(WillardResult::Lost),
            (Doubling { e }, VirtualOutcome::Collision) => Doubling { e: (e * 2).min(MAX_EXPONENT) },
            (Doubling { e: 1 }, VirtualOutcome::Silence) => Doubling { e: 1 },
            (Doubling { e }, VirtualOutcome::Silence) => Self::after_binary(e / 2, e),
            (Binary { hi, .. }, VirtualOutcome::Collision) => Self::after_binary(e, hi),
            (Binary { lo, .. }, VirtualOutcome::Silence) => Self::after_binary(lo, e),
            (Final { .. }, _) => Doubling { e: 1 },
        };
    }

    fn done(&self) -> bool {
        matches!(self.state, WillardState::Finished(_))
    }
}
