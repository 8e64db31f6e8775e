//! Fixed-point construction that forces two processes into the critical
//! section together when a no-CD protocol's entry section is shorter than
//! about `n/2` rounds.
//!
//! Schedule positions are numbered from 1: position `i` is the `i`-th round
//! of the entry section and is stored at string index `i - 1`. The
//! construction window covers positions `1..=n/2 - 1`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdversaryStrategy, ProcessPlan};
use crate::channel::{Capabilities, ChannelAction, Feedback};
use crate::protocol::{ChannelView, ConfigError, Decision, Protocol, ProcessLogic, Section, StepInput};
use crate::sim::{self, ExecutionTrace, RunOptions, SimError};

#[derive(Debug, Error)]
pub enum LowerBoundError {
    #[error("n = {0}: the construction needs an even n >= 4")]
    BadN(usize),
    #[error("expected {expected} schedules, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("schedule of process {0} is empty")]
    EmptySchedule(usize),
    #[error("bad schedule character {0:?}; expected 0 or 1")]
    BadChar(char),
    #[error("the surviving set has {0} members; at least two are needed")]
    TooFewSurvivors(usize),
    #[error("process {process} did not finish its entry section within {horizon} rounds")]
    NoEntry { process: usize, horizon: u64 },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("schedule file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Deterministic entry-section behaviour of one process: `true` means
/// transmit, `false` listen. The process enters the critical section right
/// after the last position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransmissionSchedule {
    bits: Vec<bool>,
}

impl TransmissionSchedule {
    pub fn new(bits: Vec<bool>) -> Result<Self, LowerBoundError> {
        if bits.is_empty() {
            return Err(LowerBoundError::EmptySchedule(0));
        }
        Ok(TransmissionSchedule { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Whether the process transmits at 1-based position `i`. Positions past
    /// the end count as listening.
    pub fn transmits_at(&self, i: usize) -> bool {
        i >= 1 && self.bits.get(i - 1).copied().unwrap_or(false)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

impl FromStr for TransmissionSchedule {
    type Err = LowerBoundError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(LowerBoundError::BadChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        TransmissionSchedule::new(bits)
    }
}

impl fmt::Display for TransmissionSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// `{"schedules": ["101", "0", ...]}`, one string per process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub schedules: Vec<String>,
}

impl ScheduleFile {
    pub fn parse(text: &str) -> Result<Vec<TransmissionSchedule>, LowerBoundError> {
        let file: ScheduleFile = serde_json::from_str(text)?;
        file.schedules
            .iter()
            .enumerate()
            .map(|(p, s)| {
                s.parse().map_err(|e| match e {
                    LowerBoundError::EmptySchedule(_) => LowerBoundError::EmptySchedule(p),
                    other => other,
                })
            })
            .collect()
    }
}

/// The three properties the surviving set must have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostConditions {
    pub at_least_two: bool,
    pub no_unique_transmitter: bool,
    pub shared_minimum: bool,
}

impl PostConditions {
    pub fn all(&self) -> bool {
        self.at_least_two && self.no_unique_transmitter && self.shared_minimum
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub p_star: Vec<usize>,
    /// Index of the first set that neither rule changes.
    pub iterations: usize,
    /// Shortest schedule among survivors; 0 if no survivors.
    pub shortest_len: usize,
    pub post: PostConditions,
}

fn window(n: usize) -> std::ops::RangeInclusive<usize> {
    1..=n / 2 - 1
}

fn check_input(schedules: &[TransmissionSchedule], n: usize) -> Result<(), LowerBoundError> {
    if n < 4 || n % 2 != 0 {
        return Err(LowerBoundError::BadN(n));
    }
    if schedules.len() != n {
        return Err(LowerBoundError::WrongCount { expected: n, got: schedules.len() });
    }
    if let Some(p) = schedules.iter().position(|s| s.is_empty()) {
        return Err(LowerBoundError::EmptySchedule(p));
    }
    Ok(())
}

/// Members that are the only transmitter at some window position.
fn unique_transmitters(schedules: &[TransmissionSchedule], set: &BTreeSet<usize>, n: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for i in window(n) {
        let mut it = set.iter().filter(|&&p| schedules[p].transmits_at(i));
        if let (Some(&p), None) = (it.next(), it.next()) {
            out.insert(p);
        }
    }
    out
}

/// The member with the strictly unique shortest schedule, if that schedule
/// ends inside the window.
fn unique_shortest(schedules: &[TransmissionSchedule], set: &BTreeSet<usize>, n: usize) -> Option<usize> {
    let min = set.iter().map(|&p| schedules[p].len()).min()?;
    let mut it = set.iter().filter(|&&p| schedules[p].len() == min);
    match (it.next(), it.next()) {
        (Some(&p), None) if window(n).contains(&min) => Some(p),
        _ => None,
    }
}

/// Alternates the two removal rules, odd rule first, until neither changes
/// the set.
pub fn lowerbound_construct(
    schedules: &[TransmissionSchedule],
    n: usize,
) -> Result<FixedPointResult, LowerBoundError> {
    check_input(schedules, n)?;
    let mut set: BTreeSet<usize> = (0..n).collect();
    let mut index = 0;
    let mut unchanged_in_a_row = 0;
    let mut odd = true;
    let mut stable_at = 0;
    while unchanged_in_a_row < 2 {
        let changed = if odd {
            let drop = unique_transmitters(schedules, &set, n);
            set.retain(|p| !drop.contains(p));
            !drop.is_empty()
        } else {
            match unique_shortest(schedules, &set, n) {
                Some(p) => set.remove(&p),
                None => false,
            }
        };
        index += 1;
        if changed {
            unchanged_in_a_row = 0;
            stable_at = index;
        } else {
            unchanged_in_a_row += 1;
        }
        odd = !odd;
    }
    let p_star: Vec<usize> = set.into_iter().collect();
    let post = verify_fixed_point(schedules, &p_star, n);
    Ok(FixedPointResult {
        shortest_len: p_star.iter().map(|&p| schedules[p].len()).min().unwrap_or(0),
        p_star,
        iterations: stable_at,
        post,
    })
}

/// Checks the three post-conditions of a candidate surviving set.
pub fn verify_fixed_point(schedules: &[TransmissionSchedule], p_star: &[usize], n: usize) -> PostConditions {
    let set: BTreeSet<usize> = p_star.iter().copied().collect();
    let min = set.iter().map(|&p| schedules[p].len()).min();
    PostConditions {
        at_least_two: set.len() >= 2,
        no_unique_transmitter: n >= 4 && unique_transmitters(schedules, &set, n).is_empty(),
        shared_minimum: min.is_some_and(|m| set.iter().filter(|&&p| schedules[p].len() == m).count() >= 2),
    }
}

/// Follows a fixed schedule in the entry section; empty exit.
struct ScheduledLogic {
    id: usize,
    schedule: TransmissionSchedule,
}

impl ProcessLogic for ScheduledLogic {
    fn start(&mut self, _section: Section) {}

    fn step(&mut self, section: Section, input: StepInput<'_>) -> Decision {
        match section {
            Section::Entry => {
                let pos = input.local_round as usize + 1;
                if pos > self.schedule.len() {
                    Decision::Enter(Section::Critical)
                } else if self.schedule.transmits_at(pos) {
                    Decision::Act(ChannelAction::transmit(self.id, crate::channel::payload::CHATTER))
                } else {
                    Decision::Act(ChannelAction::Listen)
                }
            }
            _ => Decision::Enter(Section::Remainder),
        }
    }
}

struct ScheduledProtocol {
    schedules: Vec<TransmissionSchedule>,
}

impl Protocol for ScheduledProtocol {
    fn name(&self) -> String {
        "scheduled".into()
    }

    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError> {
        if caps.n != self.schedules.len() {
            return Err(ConfigError::Invalid(format!(
                "{} schedules for n = {}",
                self.schedules.len(),
                caps.n
            )));
        }
        Ok(())
    }

    fn spawn(&self, id: usize, _view: &ChannelView) -> Box<dyn ProcessLogic> {
        Box::new(ScheduledLogic { id, schedule: self.schedules[id].clone() })
    }
}

/// Runs the surviving set on a no-CD channel: members start their entry
/// section at round 1, everyone else stays in the remainder section. Returns the trace
/// and whether every member listening inside the shortest schedule heard
/// only noise.
pub fn replay_violation(
    schedules: &[TransmissionSchedule],
    p_star: &[usize],
) -> Result<(ExecutionTrace, bool), LowerBoundError> {
    let n = schedules.len();
    check_input(schedules, n)?;
    if p_star.len() < 2 {
        return Err(LowerBoundError::TooFewSurvivors(p_star.len()));
    }
    let members: BTreeSet<usize> = p_star.iter().copied().collect();
    let plans = (0..n)
        .map(|p| if members.contains(&p) { ProcessPlan::once(1, 1) } else { ProcessPlan::idle() })
        .collect();
    let strategy = AdversaryStrategy { name: "lower-bound".into(), plans };
    let caps = Capabilities::new(n).with_gc(true).with_kn(true);
    let protocol = ScheduledProtocol { schedules: schedules.to_vec() };
    let trace = sim::run(&protocol, &strategy, &caps, &RunOptions::new(0))?;
    let min_len = members.iter().map(|&p| schedules[p].len()).min().unwrap_or(0) as u64;
    let noise_only = trace
        .rounds
        .iter()
        .filter(|r| (1..=min_len).contains(&r.round))
        .all(|r| {
            members.iter().all(|&p| {
                let pr = &r.processes[p];
                pr.action != ChannelAction::Listen || matches!(pr.feedback, Feedback::Noise)
            })
        });
    Ok((trace, noise_only))
}

/// Records the entry-section schedule of process 0 running alone on a no-CD
/// channel of `n` processes.
pub fn extract_schedule(
    protocol: &dyn Protocol,
    caps: &Capabilities,
    seed: u64,
    horizon: u64,
) -> Result<TransmissionSchedule, LowerBoundError> {
    let caps = caps.with_cd(false);
    let mut plans = vec![ProcessPlan::idle(); caps.n];
    plans[0] = ProcessPlan::once(0, 1);
    let strategy = AdversaryStrategy { name: "alone".into(), plans };
    let trace = sim::run(protocol, &strategy, &caps, &RunOptions { seed, horizon })?;
    let mut bits = Vec::new();
    for r in &trace.rounds {
        match r.processes[0].section {
            Section::Entry => bits.push(r.processes[0].action.is_transmit()),
            Section::Critical => return TransmissionSchedule::new(bits),
            _ => {}
        }
    }
    Err(LowerBoundError::NoEntry { process: 0, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{validate_trace, Violation};

    fn sched(list: &[&str]) -> Vec<TransmissionSchedule> {
        list.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn four_process_example() {
        let s = sched(&["1", "0", "0", "00"]);
        let r = lowerbound_construct(&s, 4).unwrap();
        assert_eq!(r.p_star, vec![1, 2, 3]);
        assert_eq!(r.shortest_len, 1);
        assert!(r.post.all());
        let (trace, noise_only) = replay_violation(&s, &r.p_star).unwrap();
        assert!(noise_only);
        let excl: Vec<_> = validate_trace(&trace)
            .into_iter()
            .filter(|v| matches!(v, Violation::ExclusionViolation { .. }))
            .collect();
        assert_eq!(excl.len(), 1, "{excl:?}");
        assert!(matches!(&excl[0], Violation::ExclusionViolation { round: 2, processes } if processes == &vec![1, 2]));
    }

    #[test]
    fn identical_schedules_keep_everyone() {
        let s = sched(&["01"; 6]);
        let r = lowerbound_construct(&s, 6).unwrap();
        assert_eq!(r.p_star, (0..6).collect::<Vec<_>>());
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn unique_shortest_removed() {
        let s = sched(&["0", "00", "00", "000", "000", "000"]);
        let r = lowerbound_construct(&s, 6).unwrap();
        assert_eq!(r.p_star, vec![1, 2, 3, 4, 5]);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn input_errors() {
        let s = sched(&["0", "0"]);
        assert!(matches!(lowerbound_construct(&s, 2), Err(LowerBoundError::BadN(2))));
        assert!(matches!(lowerbound_construct(&s, 5), Err(LowerBoundError::BadN(5))));
        assert!(matches!(lowerbound_construct(&s, 4), Err(LowerBoundError::WrongCount { .. })));
        assert!("".parse::<TransmissionSchedule>().is_err());
        assert!("012".parse::<TransmissionSchedule>().is_err());
        let s = sched(&["0", "0", "0", "0"]);
        assert!(matches!(replay_violation(&s, &[1]), Err(LowerBoundError::TooFewSurvivors(1))));
    }

    #[test]
    fn schedule_file() {
        let s = ScheduleFile::parse(r#"{"schedules": ["10", "0"]}"#).unwrap();
        assert_eq!(s[0].to_string(), "10");
        assert!(matches!(
            ScheduleFile::parse(r#"{"schedules": ["1", ""]}"#),
            Err(LowerBoundError::EmptySchedule(1))
        ));
    }
}
