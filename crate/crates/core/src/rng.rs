//! Coin sources for protocol randomness.
//!
//! Every process in every trial owns an independent stream. Stream seeds come
//! from [`stream_seed`], so a process's coin flips depend only on
//! `(root seed, trial, process id)` and never on scheduling order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Source of unbiased random bits.
pub trait CoinSource: Send {
    /// One fair coin flip.
    fn fair_coin(&mut self) -> bool;

    /// `true` with probability exactly `2^-exp`.
    fn bernoulli_pow2(&mut self, exp: u32) -> bool {
        (0..exp).all(|_| !self.fair_coin())
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of trial `trial` under `root`.
pub fn trial_seed(root: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(root) ^ trial.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Seed of process `pid`'s coin stream within a trial.
pub fn stream_seed(trial_seed: u64, pid: usize) -> u64 {
    splitmix64(trial_seed ^ splitmix64(pid as u64 ^ 0xA076_1D64_78BD_642F))
}

/// ChaCha8-backed coin stream.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
    bits: u64,
    left: u32,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            bits: 0,
            left: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

impl CoinSource for SimRng {
    fn fair_coin(&mut self) -> bool {
        if self.left == 0 {
            self.bits = self.inner.next_u64();
            self.left = 64;
        }
        let bit = self.bits & 1 == 1;
        self.bits >>= 1;
        self.left -= 1;
        bit
    }

    fn bernoulli_pow2(&mut self, exp: u32) -> bool {
        let mut remaining = exp;
        while remaining >= 64 {
            if self.inner.next_u64() != 0 {
                return false;
            }
            remaining -= 64;
        }
        remaining == 0 || self.inner.next_u64() >> (64 - remaining) == 0
    }
}

/// Replays a fixed bit sequence. Used to enumerate coin outcomes exhaustively.
#[derive(Debug, Clone, Default)]
pub struct ScriptedCoins {
    bits: Vec<bool>,
    pos: usize,
}

impl ScriptedCoins {
    pub fn new(bits: Vec<bool>) -> Self {
        ScriptedCoins { bits, pos: 0 }
    }

    /// The low `len` bits of `code`, least significant first.
    pub fn from_code(code: u64, len: usize) -> Self {
        Self::new((0..len).map(|i| (code >> i) & 1 == 1).collect())
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl CoinSource for ScriptedCoins {
    fn fair_coin(&mut self) -> bool {
        let bit = *self
            .bits
            .get(self.pos)
            .unwrap_or_else(|| panic!("coin script exhausted after {} flips", self.pos));
        self.pos += 1;
        bit
    }
}
