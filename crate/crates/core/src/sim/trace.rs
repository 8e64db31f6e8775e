//! Execution traces and their JSON-lines form.
//!
//! The first line is a header (`"kind": "header"`) with the run metadata,
//! followed by one `"kind": "round"` line per simulated round.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Capabilities, ChannelAction, ChannelOutcome, Feedback, ProcessId};
use crate::protocol::Section;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionCause {
    /// The protocol finished its entry or exit section.
    Protocol,
    /// The adversary's remainder or critical allotment ran out.
    Adversary,
}

/// A section change that happened before the round's action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionEvent {
    pub process: ProcessId,
    pub from: Section,
    pub to: Section,
    pub cause: TransitionCause,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessRound {
    pub section: Section,
    pub action: ChannelAction,
    /// Feedback received at the end of this round.
    pub feedback: Feedback,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub outcome: ChannelOutcome,
    pub events: Vec<SectionEvent>,
    pub processes: Vec<ProcessRound>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub n: usize,
    pub seed: u64,
    pub caps: Capabilities,
    pub protocol: String,
    pub strategy: String,
    pub horizon: u64,
    /// Rounds actually simulated.
    pub rounds: u64,
    /// The horizon was reached before every process settled in the
    /// remainder section for good.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub meta: TraceMeta,
    pub rounds: Vec<RoundRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TraceLine {
    Header(TraceMeta),
    Round(RoundRecord),
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("trace does not start with a header line")]
    MissingHeader,
    #[error("line {0}: unexpected second header")]
    DuplicateHeader(usize),
}

impl ExecutionTrace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer(&mut w, &TraceLine::Header(self.meta.clone()))?;
        w.write_all(b"\n")?;
        for r in &self.rounds {
            serde_json::to_writer(&mut w, &TraceLineRef::Round(r))?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TraceIoError> {
        let mut meta = None;
        let mut rounds = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine =
                serde_json::from_str(&line).map_err(|source| TraceIoError::Json { line: i + 1, source })?;
            match parsed {
                TraceLine::Header(m) if meta.is_none() => meta = Some(m),
                TraceLine::Header(_) => return Err(TraceIoError::DuplicateHeader(i + 1)),
                TraceLine::Round(rec) if meta.is_some() => rounds.push(rec),
                TraceLine::Round(_) => return Err(TraceIoError::MissingHeader),
            }
        }
        Ok(ExecutionTrace { meta: meta.ok_or(TraceIoError::MissingHeader)?, rounds })
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TraceLineRef<'a> {
    Round(&'a RoundRecord),
}
