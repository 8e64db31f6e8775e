//! Built-in arrival patterns, each generated from a seed.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdversaryStrategy, ProcessPlan, Visit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Everyone arrives at round 0 for one critical visit.
    Static,
    /// Arrivals spaced out one after another, then a second visit each.
    Staggered,
    /// Independent uniform arrival times and visit counts.
    Random,
    /// A few groups, each arriving all at once.
    Bursty,
    /// Two processes cycle through the critical section back to back while a
    /// third one waits.
    Starvation,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Static,
        Scenario::Staggered,
        Scenario::Random,
        Scenario::Bursty,
        Scenario::Starvation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Static => "static",
            Scenario::Staggered => "staggered",
            Scenario::Random => "random",
            Scenario::Bursty => "bursty",
            Scenario::Starvation => "starvation",
        }
    }

    pub fn build(self, n: usize, seed: u64, params: &ScenarioParams) -> AdversaryStrategy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CE7_A410);
        let crit = |rng: &mut ChaCha8Rng| rng.gen_range(1..=params.max_critical.max(1));
        let spread = params.spread.max(1);
        let plans: Vec<ProcessPlan> = match self {
            Scenario::Static => (0..n).map(|_| ProcessPlan::once(0, crit(&mut rng))).collect(),
            Scenario::Staggered => {
                let gap = (spread / n.max(1) as u64).max(1);
                (0..n)
                    .map(|p| ProcessPlan {
                        visits: vec![
                            Visit { remainder: p as u64 * gap, critical: crit(&mut rng) },
                            Visit { remainder: rng.gen_range(0..=spread), critical: crit(&mut rng) },
                        ],
                        repeat: false,
                    })
                    .collect()
            }
            Scenario::Random => (0..n)
                .map(|_| {
                    let count = rng.gen_range(1..=params.visits.max(1));
                    ProcessPlan {
                        visits: (0..count)
                            .map(|_| Visit { remainder: rng.gen_range(0..=spread), critical: crit(&mut rng) })
                            .collect(),
                        repeat: false,
                    }
                })
                .collect(),
            Scenario::Bursty => {
                let groups = rng.gen_range(2..=3usize).min(n.max(1));
                let starts: Vec<u64> = (0..groups).map(|_| rng.gen_range(0..=spread)).collect();
                let again: Vec<u64> = (0..groups).map(|_| rng.gen_range(0..=spread)).collect();
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                let mut plans = vec![ProcessPlan::idle(); n];
                for (rank, &p) in order.iter().enumerate() {
                    let g = rank % groups;
                    plans[p] = ProcessPlan {
                        visits: vec![
                            Visit { remainder: starts[g], critical: crit(&mut rng) },
                            Visit { remainder: again[g], critical: crit(&mut rng) },
                        ],
                        repeat: false,
                    };
                }
                plans
            }
            Scenario::Starvation => {
                let mut plans = vec![ProcessPlan::idle(); n];
                let cycles = params.visits.max(1) * 4;
                for plan in plans.iter_mut().take(2.min(n)) {
                    plan.visits = (0..cycles).map(|_| Visit { remainder: 0, critical: crit(&mut rng) }).collect();
                }
                if n >= 3 {
                    plans[n - 1] = ProcessPlan::once(rng.gen_range(1..=spread), crit(&mut rng));
                }
                plans
            }
        };
        AdversaryStrategy { name: self.name().into(), plans }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario '{s}' (expected static, staggered, random, bursty or starvation)"))
    }
}

/// Scale knobs for generated scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    /// Arrival times fall in `[0, spread]`.
    pub spread: u64,
    pub max_critical: u64,
    /// Upper bound on visits per process.
    pub visits: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams { spread: 64, max_critical: 4, visits: 3 }
    }
}
