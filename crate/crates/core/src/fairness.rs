//! Turning a deadlock-free entry algorithm into a lockout-free protocol on
//! a collision-detection channel.
//!
//! The base algorithm runs three times slower, so its competitors make the
//! channel noisy at least once every three rounds. A process leaving the
//! critical section becomes a guard: it transmits `0`, listens, and if
//! anyone answered it runs a selection among the waiting processes that
//! picks the largest loss counter, ties broken by the smallest id.

use crate::channel::{payload, Capabilities, ChannelAction, Feedback, ProcessId};
use crate::entry::{ceil_log2, MachineFactory, Slowdown3};
use crate::protocol::{ChannelView, ConfigError, Decision, EntryMachine, ProcessLogic, Protocol, Section, Step, StepInput};
use crate::sim::{RoundObserver, RoundView};

/// What a listening process made of one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    /// A critical-section message.
    Crit,
    One,
    Zero,
    Silence,
    /// Collision, or a message with another payload.
    Other,
    /// Did not listen.
    Nothing,
}

impl Symbol {
    pub fn of(fb: Feedback) -> Symbol {
        match fb {
            Feedback::Heard(m) if m.is_critical() => Symbol::Crit,
            Feedback::Heard(m) if m.payload == payload::ONE => Symbol::One,
            Feedback::Heard(m) if m.payload == payload::ZERO => Symbol::Zero,
            Feedback::SilenceHeard => Symbol::Silence,
            Feedback::NoFeedback => Symbol::Nothing,
            _ => Symbol::Other,
        }
    }
}

/// Public state of the selection, identical at every participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Search {
    /// Probe `loss >= 2^i`.
    Bracket(u32),
    /// Maximum loss lies in `[lo, hi)`.
    Narrow { lo: u64, hi: u64 },
    /// Processes whose id has a 0 at this bit position transmit.
    Ids(u32),
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionStep {
    Act(ChannelAction),
    /// The selection is over; `won` is true for the selected competitor only.
    Done { won: bool },
}

/// One participant of the selection subroutine. Blocks of three rounds:
/// the guard transmits `1`, then `0`, then competitors may transmit.
#[derive(Debug, Clone)]
pub struct Selection {
    start: u64,
    search: Search,
    guard: bool,
    loss: u64,
    id: ProcessId,
    id_bits: u32,
    alive: bool,
    transmitted: bool,
    max: Option<u64>,
}

impl Selection {
    pub fn guard(start: u64, id: ProcessId, id_bits: u32) -> Self {
        Self::new(start, true, 0, id, id_bits)
    }

    pub fn competitor(start: u64, loss: u32, id: ProcessId, id_bits: u32) -> Self {
        Self::new(start, false, loss as u64, id, id_bits)
    }

    fn new(start: u64, guard: bool, loss: u64, id: ProcessId, id_bits: u32) -> Self {
        Selection { start, search: Search::Bracket(0), guard, loss, id, id_bits, alive: !guard, transmitted: false, max: None }
    }

    pub fn search(&self) -> Search {
        self.search
    }

    /// The maximum loss counter, once known.
    pub fn max_loss(&self) -> Option<u64> {
        self.max
    }

    fn id_bit(&self, bit: u32) -> bool {
        (self.id >> bit) & 1 == 1
    }

    fn known_max(&mut self, m: u64) {
        self.max = Some(m);
        if !self.guard {
            self.alive = self.loss == m;
        }
        self.search = Search::Ids(self.id_bits - 1);
    }

    fn narrow(&mut self, lo: u64, hi: u64) {
        if hi - lo <= 1 {
            self.known_max(lo);
        } else {
            self.search = Search::Narrow { lo, hi };
        }
    }

    fn advance(&mut self, busy: bool) {
        match self.search {
            Search::Bracket(i) if busy && i < u32::BITS => self.search = Search::Bracket(i + 1),
            Search::Bracket(i) if busy => self.narrow(1 << i, 1 << (i + 1)),
            Search::Bracket(0) => self.known_max(0),
            Search::Bracket(1) => self.known_max(1),
            Search::Bracket(i) => self.narrow(1 << (i - 1), 1 << i),
            Search::Narrow { lo, hi } => {
                let mid = (lo + hi) / 2;
                if busy {
                    self.narrow(mid, hi)
                } else {
                    self.narrow(lo, mid)
                }
            }
            Search::Ids(bit) => {
                if busy && self.alive && self.id_bit(bit) {
                    self.alive = false;
                }
                self.search = if bit == 0 { Search::Done } else { Search::Ids(bit - 1) };
            }
            Search::Done => {}
        }
    }

    fn wants_to_transmit(&self) -> bool {
        if self.guard {
            return false;
        }
        match self.search {
            Search::Bracket(i) => i < 64 && self.loss >= 1 << i,
            Search::Narrow { lo, hi } => self.loss >= (lo + hi) / 2,
            Search::Ids(bit) => self.alive && !self.id_bit(bit),
            Search::Done => false,
        }
    }

    /// One round; `sym` is what this process heard in the previous round.
    pub fn step(&mut self, round: u64, sym: Symbol) -> SelectionStep {
        let id = self.id;
        let t = round - self.start;
        if t % 3 == 0 && t > 0 {
            let busy = self.transmitted || sym != Symbol::Silence;
            self.transmitted = false;
            self.advance(busy);
        }
        if self.search == Search::Done {
            return SelectionStep::Done { won: self.alive };
        }
        let action = match (t % 3, self.guard) {
            (0, true) => ChannelAction::transmit(id, payload::ONE),
            (1, true) => ChannelAction::transmit(id, payload::ZERO),
            (2, false) if self.wants_to_transmit() => {
                self.transmitted = true;
                ChannelAction::transmit(id, payload::ZERO)
            }
            _ => ChannelAction::Listen,
        };
        SelectionStep::Act(action)
    }
}

/// Wraps a base factory with the lockout-free transform.
pub struct Fair<F> {
    pub base: F,
    /// Exclusive upper bound on ids, for models where `n` is unknown.
    pub id_bound: Option<usize>,
}

impl<F: MachineFactory> Fair<F> {
    pub fn new(base: F, id_bound: Option<usize>) -> Self {
        Fair { base, id_bound }
    }

    fn id_bits(&self, known_n: Option<usize>) -> Option<u32> {
        known_n.or(self.id_bound).map(|b| ceil_log2(b as u64).max(1))
    }
}

impl<F: MachineFactory> Protocol for Fair<F> {
    fn name(&self) -> String {
        format!("fair-{}", self.base.name())
    }

    fn check(&self, caps: &Capabilities) -> Result<(), ConfigError> {
        if !caps.cd {
            return Err(ConfigError::MissingCapability { protocol: self.name(), requirement: "collision detection (cd)" });
        }
        match (caps.kn, self.id_bound) {
            (false, None) => {
                return Err(ConfigError::MissingCapability {
                    protocol: self.name(),
                    requirement: "known n (kn) or an id bound",
                })
            }
            (_, Some(b)) if b < caps.n => {
                return Err(ConfigError::Invalid(format!("id bound {b} is smaller than n = {}", caps.n)))
            }
            _ => {}
        }
        self.base.check(caps)
    }

    fn spawn(&self, id: ProcessId, view: &ChannelView) -> Box<dyn ProcessLogic> {
        let id_bits = self.id_bits(view.known_n).expect("checked");
        Box::new(FairLogic::new(id, id_bits, self.base.machine(id, view)))
    }
}

#[derive(Debug, Clone)]
enum EntryState {
    Listen { start: u64, heard: [Symbol; 3] },
    RunAlg { start: u64 },
    WaitGuard { silent: u32 },
    Announced,
    Compete(Selection),
}

#[derive(Debug, Clone)]
enum ExitState {
    Signal,
    Listen,
    Decide,
    Guard(Selection),
}

pub struct FairLogic {
    id: ProcessId,
    id_bits: u32,
    alg: Slowdown3<Box<dyn EntryMachine>>,
    loss: u32,
    armed: bool,
    prev: Symbol,
    entry: EntryState,
    exit: ExitState,
}

impl FairLogic {
    pub fn new(id: ProcessId, id_bits: u32, base: Box<dyn EntryMachine>) -> Self {
        FairLogic {
            id,
            id_bits,
            alg: Slowdown3::new(base),
            loss: 0,
            armed: false,
            prev: Symbol::Nothing,
            entry: EntryState::Listen { start: 0, heard: [Symbol::Nothing; 3] },
            exit: ExitState::Signal,
        }
    }

    fn listen_from(r: u64) -> EntryState {
        EntryState::Listen { start: r, heard: [Symbol::Nothing; 3] }
    }

    fn announce(&mut self) -> Decision {
        self.entry = EntryState::Announced;
        Decision::Act(ChannelAction::transmit(self.id, payload::ZERO))
    }

    fn entry_step(&mut self, mut input: StepInput<'_>) -> Decision {
        let r = input.local_round;
        let sym = if r == 0 { Symbol::Nothing } else { Symbol::of(input.feedback) };
        match sym {
            Symbol::Crit if self.armed => {
                self.loss += 1;
                self.armed = false;
            }
            Symbol::Crit | Symbol::Nothing => {}
            _ => self.armed = true,
        }
        let trigger = self.prev == Symbol::Crit && sym == Symbol::Zero;
        self.prev = sym;
        for _ in 0..4 {
            match &mut self.entry {
                EntryState::Listen { start, heard } => {
                    if trigger {
                        return self.announce();
                    }
                    let i = (r - *start) as usize;
                    if i >= 1 {
                        heard[i - 1] = sym;
                    }
                    if i < 3 {
                        return Decision::Act(ChannelAction::Listen);
                    }
                    if heard.iter().all(|s| *s == Symbol::Silence) {
                        self.alg.restart();
                        self.entry = EntryState::RunAlg { start: r };
                        continue;
                    }
                    self.entry = if heard[2] == Symbol::Crit {
                        EntryState::WaitGuard { silent: 0 }
                    } else {
                        Self::listen_from(r)
                    };
                    return Decision::Act(ChannelAction::Listen);
                }
                EntryState::WaitGuard { silent } => {
                    if trigger {
                        return self.announce();
                    }
                    *silent = if sym == Symbol::Silence { *silent + 1 } else { 0 };
                    if *silent >= 3 {
                        self.alg.restart();
                        self.entry = EntryState::RunAlg { start: r };
                        continue;
                    }
                    return Decision::Act(ChannelAction::Listen);
                }
                EntryState::RunAlg { start } => {
                    let t = r - *start;
                    let disturbed =
                        t > 0 && (sym == Symbol::Crit || (self.alg.last_slot() == 1 && sym != Symbol::Silence));
                    if disturbed {
                        self.entry = Self::listen_from(r);
                        continue;
                    }
                    let fb = if t == 0 { Feedback::NoFeedback } else { input.feedback };
                    match self.alg.step(input.nested(t, fb)) {
                        Step::Act(a) => return Decision::Act(a),
                        Step::EnterCritical => return Decision::Enter(Section::Critical),
                        Step::Resign => {
                            self.entry = Self::listen_from(r);
                            return Decision::Act(ChannelAction::Listen);
                        }
                    }
                }
                EntryState::Announced => {
                    self.entry = EntryState::Compete(Selection::competitor(r, self.loss, self.id, self.id_bits));
                }
                EntryState::Compete(sel) => match sel.step(r, sym) {
                    SelectionStep::Act(a) => return Decision::Act(a),
                    SelectionStep::Done { won: true } => return Decision::Enter(Section::Critical),
                    SelectionStep::Done { won: false } => {
                        self.entry = Self::listen_from(r);
                    }
                },
            }
        }
        unreachable!("entry state machine did not settle")
    }

    fn exit_step(&mut self, input: StepInput<'_>) -> Decision {
        let r = input.local_round;
        let sym = Symbol::of(input.feedback);
        loop {
            match &mut self.exit {
                ExitState::Signal => {
                    self.exit = ExitState::Listen;
                    return Decision::Act(ChannelAction::transmit(self.id, payload::ZERO));
                }
                ExitState::Listen => {
                    self.exit = ExitState::Decide;
                    return Decision::Act(ChannelAction::Listen);
                }
                ExitState::Decide if sym == Symbol::Silence => return Decision::Enter(Section::Remainder),
                ExitState::Decide => self.exit = ExitState::Guard(Selection::guard(r, self.id, self.id_bits)),
                ExitState::Guard(sel) => {
                    return match sel.step(r, sym) {
                        SelectionStep::Act(a) => Decision::Act(a),
                        SelectionStep::Done { .. } => Decision::Enter(Section::Remainder),
                    }
                }
            }
        }
    }
}

impl ProcessLogic for FairLogic {
    fn start(&mut self, section: Section) {
        match section {
            Section::Entry => {
                self.loss = 0;
                self.armed = false;
                self.prev = Symbol::Nothing;
                self.entry = Self::listen_from(0);
            }
            Section::Exit => self.exit = ExitState::Signal,
            _ => {}
        }
    }

    fn step(&mut self, section: Section, input: StepInput<'_>) -> Decision {
        match section {
            Section::Entry => self.entry_step(input),
            _ => self.exit_step(input),
        }
    }

    fn loss_counter(&self) -> Option<u32> {
        Some(self.loss)
    }
}

/// A round where a loss counter exceeded the number of other processes in
/// the entry section when its owner started the entry section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossBoundBreach {
    pub round: u64,
    pub process: ProcessId,
    pub loss: u32,
    pub bound: usize,
}

/// Checks loss counters against the entry-time population, round by round.
#[derive(Debug, Default)]
pub struct LossBoundChecker {
    bound: Vec<usize>,
    pub breaches: Vec<LossBoundBreach>,
}

impl LossBoundChecker {
    pub fn new(n: usize) -> Self {
        LossBoundChecker { bound: vec![0; n], breaches: Vec::new() }
    }
}

impl RoundObserver for LossBoundChecker {
    fn observe(&mut self, view: &RoundView<'_>) {
        if view.events.iter().any(|e| e.to == Section::Entry) {
            let mut before = view.sections.to_vec();
            for e in view.events.iter().rev() {
                before[e.process] = e.from;
            }
            let in_entry = |q: usize| before[q] == Section::Entry || view.sections[q] == Section::Entry;
            let count = (0..before.len()).filter(|&q| in_entry(q)).count();
            for e in view.events.iter().filter(|e| e.to == Section::Entry) {
                self.bound[e.process] = count - 1;
            }
        }
        for (p, loss) in view.losses.iter().enumerate() {
            if let Some(l) = loss {
                if view.sections[p] == Section::Entry && *l as usize > self.bound[p] {
                    self.breaches.push(LossBoundBreach { round: view.round, process: p, loss: *l, bound: self.bound[p] });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Runs one selection on an ideal channel; returns the winner's id.
    pub(crate) fn select(competitors: &[(u32, ProcessId)], id_bits: u32) -> (Option<ProcessId>, u64) {
        let mut guard = Selection::guard(0, 99, id_bits);
        let mut comps: Vec<Selection> =
            competitors.iter().map(|&(loss, id)| Selection::competitor(0, loss, id, id_bits)).collect();
        let mut syms = vec![Symbol::Nothing; comps.len() + 1];
        for r in 0..1000u64 {
            let mut actions = Vec::new();
            let g = guard.step(r, syms[0]);
            let mut winners = Vec::new();
            let mut done = false;
            if let SelectionStep::Act(a) = g {
                actions.push(a);
            } else {
                done = true;
            }
            for (i, c) in comps.iter_mut().enumerate() {
                match c.step(r, syms[i + 1]) {
                    SelectionStep::Act(a) => actions.push(a),
                    SelectionStep::Done { won } => {
                        assert!(done, "guard and competitors finish together");
                        if won {
                            winners.push(competitors[i].1);
                        }
                    }
                }
            }
            if done {
                assert!(winners.len() <= 1);
                return (winners.first().copied(), r);
            }
            let tx: Vec<&ChannelAction> = actions.iter().filter(|a| a.is_transmit()).collect();
            let heard = match tx.len() {
                0 => Symbol::Silence,
                1 => match tx[0] {
                    ChannelAction::Transmit(m) => Symbol::of(Feedback::Heard(*m)),
                    _ => unreachable!(),
                },
                _ => Symbol::Other,
            };
            syms = actions.iter().map(|a| if a.is_transmit() { Symbol::Nothing } else { heard }).collect();
        }
        panic!("selection did not finish")
    }

    fn oracle(competitors: &[(u32, ProcessId)]) -> Option<ProcessId> {
        let max = competitors.iter().map(|c| c.0).max()?;
        competitors.iter().filter(|c| c.0 == max).map(|c| c.1).min()
    }

    #[test]
    fn worked_example() {
        let (w, _) = select(&[(0, 5), (3, 2), (3, 7)], 3);
        assert_eq!(w, Some(2));
    }

    #[test]
    fn single_competitor_with_zero_loss() {
        let (w, rounds) = select(&[(0, 4)], 3);
        assert_eq!(w, Some(4));
        assert_eq!(rounds, 3 * (1 + 3));
    }

    #[test]
    fn matches_oracle_on_small_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let k = rng.gen_range(1..=8usize);
            let mut ids: Vec<usize> = (0..8).collect();
            rand::seq::SliceRandom::shuffle(&mut ids[..], &mut rng);
            let comps: Vec<(u32, usize)> = ids[..k].iter().map(|&id| (rng.gen_range(0..20), id)).collect();
            assert_eq!(select(&comps, 3).0, oracle(&comps), "{comps:?}");
        }
    }

    #[test]
    fn symbols() {
        use crate::channel::Message;
        assert_eq!(Symbol::of(Feedback::Heard(Message::critical(0))), Symbol::Crit);
        assert_eq!(Symbol::of(Feedback::Heard(Message::protocol(0, 1))), Symbol::One);
        assert_eq!(Symbol::of(Feedback::Heard(Message::protocol(0, 0))), Symbol::Zero);
        assert_eq!(Symbol::of(Feedback::Heard(Message::protocol(0, 4))), Symbol::Other);
        assert_eq!(Symbol::of(Feedback::CollisionHeard), Symbol::Other);
        assert_eq!(Symbol::of(Feedback::SilenceHeard), Symbol::Silence);
    }
}
