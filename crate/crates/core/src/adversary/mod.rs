//! Adversary strategies and the section driver.
//!
//! A strategy fixes, for every process, the lengths of its remainder and
//! critical sections up front (an oblivious adversary). The simulator asks
//! the [`SectionDriver`] when a process leaves the remainder section and when
//! its critical allotment runs out; entry and exit lengths are up to the
//! protocol.

mod lowerbound;
pub mod scenarios;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lowerbound::{
    extract_schedule, lowerbound_construct, replay_violation, verify_fixed_point, FixedPointResult,
    LowerBoundError, PostConditions, ScheduleFile, TransmissionSchedule,
};
pub use scenarios::{Scenario, ScenarioParams};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("process {process}: duration sequence has odd length {len}")]
    OddLength { process: usize, len: usize },
    #[error("process {process}, visit {visit}: critical section must last at least one round")]
    ZeroCritical { process: usize, visit: usize },
    #[error("process {process}: a repeating plan needs at least one visit")]
    EmptyRepeat { process: usize },
    #[error("strategy lists {got} processes, expected n = {n}")]
    WrongSize { got: usize, n: usize },
    #[error("strategy file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("strategy file: {0}")]
    Io(#[from] std::io::Error),
}

/// One remainder section followed by one critical section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub remainder: u64,
    pub critical: u64,
}

/// The duration sequence of one process.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProcessPlan {
    pub visits: Vec<Visit>,
    /// Cycle through `visits` forever. When false the process stays in the
    /// remainder section after its last critical section.
    #[serde(default)]
    pub repeat: bool,
}

impl ProcessPlan {
    pub fn once(remainder: u64, critical: u64) -> Self {
        ProcessPlan {
            visits: vec![Visit { remainder, critical }],
            repeat: false,
        }
    }

    pub fn idle() -> Self {
        ProcessPlan::default()
    }

    /// From an interleaved `[r0, c0, r1, c1, ...]` sequence.
    pub fn from_flat(process: usize, flat: &[u64]) -> Result<Self, StrategyError> {
        if flat.len() % 2 != 0 {
            return Err(StrategyError::OddLength { process, len: flat.len() });
        }
        let visits = flat
            .chunks(2)
            .map(|c| Visit { remainder: c[0], critical: c[1] })
            .collect();
        Ok(ProcessPlan { visits, repeat: false })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryStrategy {
    pub name: String,
    pub plans: Vec<ProcessPlan>,
}

impl AdversaryStrategy {
    pub fn new(name: impl Into<String>, plans: Vec<ProcessPlan>) -> Result<Self, StrategyError> {
        let s = AdversaryStrategy { name: name.into(), plans };
        s.validate()?;
        Ok(s)
    }

    /// Every process enters at round 0 for a single critical visit.
    pub fn simultaneous(n: usize, critical: u64) -> Self {
        AdversaryStrategy {
            name: "static".into(),
            plans: (0..n).map(|_| ProcessPlan::once(0, critical)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.plans.len()
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        for (process, plan) in self.plans.iter().enumerate() {
            if plan.repeat && plan.visits.is_empty() {
                return Err(StrategyError::EmptyRepeat { process });
            }
            if let Some(visit) = plan.visits.iter().position(|v| v.critical == 0) {
                return Err(StrategyError::ZeroCritical { process, visit });
            }
        }
        Ok(())
    }

    /// Parses `{"n": 3, "strategies": [[[r, c], ...], ...]}`.
    pub fn from_json(text: &str) -> Result<Self, StrategyError> {
        let file: StrategyFile = serde_json::from_str(text)?;
        file.into_strategy()
    }

    pub fn load(path: &Path) -> Result<Self, StrategyError> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_json(&text)?;
        s.name = path.display().to_string();
        Ok(s)
    }
}

/// On-disk strategy document. Each inner list is one `[remainder, critical]`
/// pair; a list of any other length is an odd-length duration sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyFile {
    pub n: usize,
    pub strategies: Vec<Vec<Vec<u64>>>,
    /// Processes whose sequence repeats forever.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repeat: Vec<usize>,
}

impl StrategyFile {
    pub fn into_strategy(self) -> Result<AdversaryStrategy, StrategyError> {
        if self.strategies.len() != self.n {
            return Err(StrategyError::WrongSize { got: self.strategies.len(), n: self.n });
        }
        let mut plans = Vec::with_capacity(self.n);
        for (process, pairs) in self.strategies.iter().enumerate() {
            let mut flat = Vec::new();
            for pair in pairs {
                if pair.len() != 2 {
                    let len = flat.len() + pair.len();
                    return Err(StrategyError::OddLength { process, len });
                }
                flat.extend_from_slice(pair);
            }
            let mut plan = ProcessPlan::from_flat(process, &flat)?;
            plan.repeat = self.repeat.contains(&process);
            plans.push(plan);
        }
        AdversaryStrategy::new("file", plans)
    }

    pub fn from_strategy(s: &AdversaryStrategy) -> Self {
        StrategyFile {
            n: s.n(),
            strategies: s
                .plans
                .iter()
                .map(|p| p.visits.iter().map(|v| vec![v.remainder, v.critical]).collect())
                .collect(),
            repeat: s.plans.iter().enumerate().filter(|(_, p)| p.repeat).map(|(i, _)| i).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct DriverState {
    visit: usize,
    remaining: u64,
    exhausted: bool,
}

/// Unrolls a strategy round by round.
#[derive(Debug, Clone)]
pub struct SectionDriver {
    plans: Vec<ProcessPlan>,
    state: Vec<DriverState>,
}

impl SectionDriver {
    pub fn new(strategy: &AdversaryStrategy) -> Self {
        let state = strategy
            .plans
            .iter()
            .map(|p| match p.visits.first() {
                Some(v) => DriverState { visit: 0, remaining: v.remainder, exhausted: false },
                None => DriverState { visit: 0, remaining: 0, exhausted: true },
            })
            .collect();
        SectionDriver { plans: strategy.plans.clone(), state }
    }

    /// A remainder-section process whose allotment has run out.
    pub fn entry_due(&self, p: usize) -> bool {
        let s = &self.state[p];
        !s.exhausted && s.remaining == 0
    }

    pub fn begin_critical(&mut self, p: usize) {
        let s = &mut self.state[p];
        s.remaining = self.plans[p].visits[s.visit].critical;
    }

    pub fn critical_over(&self, p: usize) -> bool {
        self.state[p].remaining == 0
    }

    /// The process is back in the remainder section after an exit.
    pub fn begin_remainder(&mut self, p: usize) {
        let plan = &self.plans[p];
        let s = &mut self.state[p];
        s.visit += 1;
        if s.visit == plan.visits.len() {
            if plan.repeat {
                s.visit = 0;
            } else {
                s.exhausted = true;
                return;
            }
        }
        s.remaining = plan.visits[s.visit].remainder;
    }

    /// Accounts one round spent in an adversary-owned section.
    pub fn tick(&mut self, p: usize) {
        let s = &mut self.state[p];
        s.remaining = s.remaining.saturating_sub(1);
    }

    /// The process will never leave the remainder section again.
    pub fn finished(&self, p: usize) -> bool {
        self.state[p].exhausted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_length_rejected() {
        assert!(matches!(
            ProcessPlan::from_flat(2, &[1, 2, 3]),
            Err(StrategyError::OddLength { process: 2, len: 3 })
        ));
        let err = AdversaryStrategy::from_json(r#"{"n":1,"strategies":[[[0,1],[4]]]}"#).unwrap_err();
        assert!(matches!(err, StrategyError::OddLength { .. }));
    }

    #[test]
    fn zero_critical_rejected() {
        let err = AdversaryStrategy::from_json(r#"{"n":1,"strategies":[[[0,0]]]}"#).unwrap_err();
        assert!(matches!(err, StrategyError::ZeroCritical { .. }));
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = AdversaryStrategy::from_json("{\"n\": 1,\n \"strategies\": [[[0, 1]]\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn file_round_trip() {
        let text = r#"{"n":2,"strategies":[[[5,1],[0,1]],[[0,3]]],"repeat":[1]}"#;
        let s = AdversaryStrategy::from_json(text).unwrap();
        assert!(s.plans[1].repeat);
        let again = StrategyFile::from_strategy(&s).into_strategy().unwrap();
        assert_eq!(again.plans, s.plans);
    }

    #[test]
    fn driver_unrolls_remainder_then_critical() {
        let s = AdversaryStrategy::new("t", vec![ProcessPlan::from_flat(0, &[2, 3, 0, 1]).unwrap()]).unwrap();
        let mut d = SectionDriver::new(&s);
        assert!(!d.entry_due(0));
        d.tick(0);
        d.tick(0);
        assert!(d.entry_due(0));
        d.begin_critical(0);
        for _ in 0..3 {
            assert!(!d.critical_over(0));
            d.tick(0);
        }
        assert!(d.critical_over(0));
        d.begin_remainder(0);
        assert!(d.entry_due(0), "zero remainder means back-to-back");
        d.begin_critical(0);
        d.tick(0);
        d.begin_remainder(0);
        assert!(d.finished(0));
        assert!(!d.entry_due(0));
    }
}
