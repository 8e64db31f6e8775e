//! Makespan, exclusion and lockout measurements.
//!
//! Everything here is computed incrementally by [`MetricsAccumulator`], which
//! only needs the section of each process per round. The same accumulator
//! replays stored traces, so online and offline numbers always agree.

use serde::{Deserialize, Serialize};

use super::{ExecutionTrace, RoundObserver, RoundView};
use crate::channel::ProcessId;
use crate::protocol::Section;

/// A maximal run of rounds `[start, end)` in which some process is in the
/// entry section and none is in the critical section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start: u64,
    pub end: u64,
    /// False when the trace ended inside the gap.
    pub closed: bool,
}

impl Gap {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MakespanReport {
    pub max_gap: u64,
    pub gaps: Vec<Gap>,
    /// No round had two processes in the critical section.
    pub admissible: bool,
}

impl MakespanReport {
    pub fn open_gap(&self) -> bool {
        self.gaps.iter().any(|g| !g.closed)
    }
}

/// One stay in the critical section, rounds `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalVisit {
    pub process: ProcessId,
    pub start: u64,
    pub end: u64,
    /// Another process was in the critical section during the visit.
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub visits: Vec<CriticalVisit>,
    pub violated_visits: usize,
    pub violation_rounds: u64,
}

/// One entry-section start and the critical section it led to, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub process: ProcessId,
    pub entry_start: u64,
    pub critical_start: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockoutReport {
    pub entries: Vec<EntryRecord>,
    /// Rounds in the trace.
    pub rounds: u64,
}

impl LockoutReport {
    /// Entries that never reached the critical section and started at least
    /// `margin` rounds before the end of the trace.
    pub fn unfulfilled(&self, margin: u64) -> Vec<EntryRecord> {
        self.entries
            .iter()
            .filter(|e| e.critical_start.is_none() && e.entry_start + margin <= self.rounds)
            .copied()
            .collect()
    }

    /// Longest entry-to-critical wait among fulfilled entries.
    pub fn max_wait(&self) -> Option<u64> {
        self.entries.iter().filter_map(|e| e.critical_start.map(|c| c - e.entry_start)).max()
    }
}

/// Online metrics over a run.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    prev: Vec<Section>,
    open_visit: Vec<Option<usize>>,
    open_entry: Vec<Option<usize>>,
    entry_count: usize,
    critical: Vec<ProcessId>,
    gap_start: Option<u64>,
    gaps: Vec<Gap>,
    visits: Vec<CriticalVisit>,
    entries: Vec<EntryRecord>,
    violation_rounds: u64,
    rounds: u64,
}

impl MetricsAccumulator {
    pub fn new(n: usize) -> Self {
        MetricsAccumulator {
            prev: vec![Section::Remainder; n],
            open_visit: vec![None; n],
            open_entry: vec![None; n],
            ..Default::default()
        }
    }

    fn enter(&mut self, p: ProcessId, to: Section, round: u64) {
        let from = self.prev[p];
        if from == to {
            return;
        }
        if from == Section::Entry {
            self.entry_count -= 1;
        }
        if from == Section::Critical {
            self.critical.retain(|&q| q != p);
            if let Some(i) = self.open_visit[p].take() {
                self.visits[i].end = round - 1;
            }
        }
        match to {
            Section::Entry => {
                self.entry_count += 1;
                self.open_entry[p] = Some(self.entries.len());
                self.entries.push(EntryRecord { process: p, entry_start: round, critical_start: None });
            }
            Section::Critical => {
                self.critical.push(p);
                self.open_visit[p] = Some(self.visits.len());
                self.visits.push(CriticalVisit { process: p, start: round, end: round, violated: false });
                if let Some(i) = self.open_entry[p].take() {
                    self.entries[i].critical_start = Some(round);
                }
            }
            _ => {}
        }
        self.prev[p] = to;
    }

    /// Feeds one round, given every process's section in that round.
    pub fn push_sections(&mut self, round: u64, sections: &[Section]) {
        for (p, &s) in sections.iter().enumerate() {
            self.enter(p, s, round);
        }
        self.close_round(round);
    }

    /// Feeds one round, given only the processes whose section changed.
    fn push_changes(&mut self, round: u64, changed: impl Iterator<Item = (ProcessId, Section)>) {
        for (p, s) in changed {
            self.enter(p, s, round);
        }
        self.close_round(round);
    }

    fn close_round(&mut self, round: u64) {
        if self.critical.len() >= 2 {
            self.violation_rounds += 1;
            for &p in &self.critical {
                if let Some(i) = self.open_visit[p] {
                    self.visits[i].violated = true;
                }
            }
        }
        let in_gap = self.entry_count > 0 && self.critical.is_empty();
        match (in_gap, self.gap_start) {
            (true, None) => self.gap_start = Some(round),
            (false, Some(start)) => {
                self.gaps.push(Gap { start, end: round, closed: true });
                self.gap_start = None;
            }
            _ => {}
        }
        self.rounds = round + 1;
    }

    pub fn makespan(&self) -> MakespanReport {
        let mut gaps = self.gaps.clone();
        if let Some(start) = self.gap_start {
            gaps.push(Gap { start, end: self.rounds, closed: false });
        }
        MakespanReport {
            max_gap: gaps.iter().map(Gap::len).max().unwrap_or(0),
            gaps,
            admissible: self.violation_rounds == 0,
        }
    }

    pub fn exclusion(&self) -> ExclusionReport {
        let mut visits = self.visits.clone();
        for (p, open) in self.open_visit.iter().enumerate() {
            if let Some(i) = open {
                visits[*i].end = self.rounds.saturating_sub(1);
                debug_assert_eq!(visits[*i].process, p);
            }
        }
        ExclusionReport {
            violated_visits: visits.iter().filter(|v| v.violated).count(),
            visits,
            violation_rounds: self.violation_rounds,
        }
    }

    pub fn lockout(&self) -> LockoutReport {
        LockoutReport { entries: self.entries.clone(), rounds: self.rounds }
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }
}

impl RoundObserver for MetricsAccumulator {
    fn observe(&mut self, view: &RoundView<'_>) {
        self.push_changes(view.round, view.events.iter().map(|e| (e.process, e.to)));
    }
}

fn replay(trace: &ExecutionTrace) -> MetricsAccumulator {
    let mut acc = MetricsAccumulator::new(trace.meta.n);
    let mut sections = vec![Section::Remainder; trace.meta.n];
    for r in &trace.rounds {
        for (p, pr) in r.processes.iter().enumerate() {
            sections[p] = pr.section;
        }
        acc.push_sections(r.round, &sections);
    }
    acc
}

pub fn makespan(trace: &ExecutionTrace) -> MakespanReport {
    replay(trace).makespan()
}

pub fn exclusion_report(trace: &ExecutionTrace) -> ExclusionReport {
    replay(trace).exclusion()
}

pub fn lockout_report(trace: &ExecutionTrace) -> LockoutReport {
    replay(trace).lockout()
}
