//! Append-only feedback log and its deterministic replay into a [`TrustGraph`].
//!
//! # File format
//!
//! UTF-8 JSON lines. The canonical form starts with a header record
//!
//! ```text
//! {"schema_version":1,"decay_epoch":100}
//! ```
//!
//! followed by one event per line with fields in this order:
//!
//! ```text
//! {"block":12,"from":"0xa1","to":"0xb2","score":0.9,"tx_id":"t-0001"}
//! ```
//!
//! The header is optional when reading; without it the caller's decay epoch
//! applies. Unknown event fields are ignored so producers can add optional
//! data. Blank lines are skipped.
//!
//! # Replay
//!
//! Each edge keeps a decay anchor (the `last_update_block` of its state). An
//! event first applies one decay step per whole `decay_epoch` elapsed since
//! the anchor, then the feedback update, and resets the anchor to the event's
//! block. Advancing to a block without an event applies the whole epochs and
//! moves the anchor forward by exactly that many epochs, so replaying in one
//! pass or in pieces yields identical bits.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experience::{self, ExperienceParams, ExperienceState, FeedbackScore};
use crate::graph::{GraphError, TrustGraph};

pub const LEDGER_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_DECAY_EPOCH: u64 = 100;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported ledger schema version {found} (expected {LEDGER_SCHEMA_VERSION})")]
    SchemaVersion { found: u64 },
    #[error("block {block} precedes last block {last}")]
    OutOfOrder { block: u64, last: u64 },
    #[error("self-edge on user {0:?}")]
    SelfEdge(String),
    #[error("feedback score {0} outside (0, 1]")]
    ScoreOutOfRange(f64),
    #[error("empty user id")]
    EmptyId,
    #[error("decay epoch must be positive")]
    ZeroDecayEpoch,
    #[error(transparent)]
    Experience(#[from] experience::ExperienceError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LedgerError {
    fn at_line(self, line: usize) -> LedgerError {
        match self {
            LedgerError::Parse { .. } | LedgerError::Io(_) => self,
            other => LedgerError::Parse {
                line,
                message: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub block: u64,
    pub from: String,
    pub to: String,
    pub score: f64,
    pub tx_id: String,
}

impl FeedbackEvent {
    pub fn validate(&self) -> Result<(), LedgerError> {
        if self.from.is_empty() || self.to.is_empty() {
            return Err(LedgerError::EmptyId);
        }
        if self.from == self.to {
            return Err(LedgerError::SelfEdge(self.from.clone()));
        }
        if !(self.score > 0.0 && self.score <= 1.0) {
            return Err(LedgerError::ScoreOutOfRange(self.score));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u64,
    decay_epoch: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    events: Vec<FeedbackEvent>,
    decay_epoch: u64,
}

impl Default for Ledger {
    fn default() -> Self {
        Self {
            events: Vec::new(),
            decay_epoch: DEFAULT_DECAY_EPOCH,
        }
    }
}

impl Ledger {
    pub fn new(decay_epoch: u64) -> Result<Self, LedgerError> {
        if decay_epoch == 0 {
            return Err(LedgerError::ZeroDecayEpoch);
        }
        Ok(Self {
            events: Vec::new(),
            decay_epoch,
        })
    }

    pub fn events(&self) -> &[FeedbackEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn decay_epoch(&self) -> u64 {
        self.decay_epoch
    }

    pub fn set_decay_epoch(&mut self, decay_epoch: u64) -> Result<(), LedgerError> {
        if decay_epoch == 0 {
            return Err(LedgerError::ZeroDecayEpoch);
        }
        self.decay_epoch = decay_epoch;
        Ok(())
    }

    pub fn last_block(&self) -> Option<u64> {
        self.events.last().map(|e| e.block)
    }

    pub fn append(&mut self, event: FeedbackEvent) -> Result<(), LedgerError> {
        event.validate()?;
        if let Some(last) = self.last_block() {
            if event.block < last {
                return Err(LedgerError::OutOfOrder {
                    block: event.block,
                    last,
                });
            }
        }
        self.events.push(event);
        Ok(())
    }

    /// Events with `block <= end`, same decay epoch.
    pub fn prefix_until(&self, end: u64) -> Ledger {
        let k = self.events.partition_point(|e| e.block <= end);
        Ledger {
            events: self.events[..k].to_vec(),
            decay_epoch: self.decay_epoch,
        }
    }

    /// Parses a ledger; `default_decay_epoch` applies when the input has no
    /// header.
    pub fn read_from<R: BufRead>(reader: R, default_decay_epoch: u64) -> Result<Self, LedgerError> {
        let mut ledger = Ledger::new(default_decay_epoch)?;
        let mut seen_record = false;
        for (k, line) in reader.lines().enumerate() {
            let line_no = k + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| LedgerError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if value.get("schema_version").is_some() {
                if seen_record {
                    return Err(LedgerError::Parse {
                        line: line_no,
                        message: "header must be the first record".into(),
                    });
                }
                seen_record = true;
                let header: Header =
                    serde_json::from_value(value).map_err(|e| LedgerError::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                if header.schema_version != u64::from(LEDGER_SCHEMA_VERSION) {
                    return Err(LedgerError::SchemaVersion {
                        found: header.schema_version,
                    });
                }
                ledger
                    .set_decay_epoch(header.decay_epoch)
                    .map_err(|e| e.at_line(line_no))?;
                continue;
            }
            seen_record = true;
            let event: FeedbackEvent =
                serde_json::from_value(value).map_err(|e| LedgerError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            ledger.append(event).map_err(|e| e.at_line(line_no))?;
        }
        Ok(ledger)
    }

    /// Writes the canonical form: header, then one event per line.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), LedgerError> {
        write_header(&mut out, self.decay_epoch)?;
        for event in &self.events {
            write_event(&mut out, event)?;
        }
        Ok(())
    }

    pub fn to_canonical_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ledger is utf-8")
    }

    pub fn load(path: impl AsRef<Path>, default_decay_epoch: u64) -> Result<Self, LedgerError> {
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file), default_decay_epoch)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LedgerError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

fn write_header<W: Write>(out: &mut W, decay_epoch: u64) -> Result<(), LedgerError> {
    let header = Header {
        schema_version: u64::from(LEDGER_SCHEMA_VERSION),
        decay_epoch,
    };
    serde_json::to_writer(&mut *out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn write_event<W: Write>(out: &mut W, event: &FeedbackEvent) -> Result<(), LedgerError> {
    serde_json::to_writer(&mut *out, event).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Appends events to a ledger file one line at a time.
pub struct LedgerWriter {
    file: File,
    last_block: Option<u64>,
    fsync: bool,
}

impl LedgerWriter {
    /// Opens `path` for appending, writing a header first if the file is new
    /// or empty. With `fsync` set every append is synced to disk.
    pub fn open(
        path: impl AsRef<Path>,
        decay_epoch: u64,
        fsync: bool,
    ) -> Result<Self, LedgerError> {
        let path = path.as_ref();
        let existing = if path.exists() {
            Some(Ledger::load(path, decay_epoch)?)
        } else {
            None
        };
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let last_block = match &existing {
            Some(l) if !l.is_empty() || file.metadata()?.len() > 0 => l.last_block(),
            _ => {
                if decay_epoch == 0 {
                    return Err(LedgerError::ZeroDecayEpoch);
                }
                write_header(&mut file, decay_epoch)?;
                None
            }
        };
        Ok(Self {
            file,
            last_block,
            fsync,
        })
    }

    pub fn append(&mut self, event: &FeedbackEvent) -> Result<(), LedgerError> {
        event.validate()?;
        if let Some(last) = self.last_block {
            if event.block < last {
                return Err(LedgerError::OutOfOrder {
                    block: event.block,
                    last,
                });
            }
        }
        let mut line = serde_json::to_vec(event).map_err(std::io::Error::from)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        if self.fsync {
            self.file.sync_data()?;
        }
        self.last_block = Some(event.block);
        Ok(())
    }
}

/// Incremental ledger replay.
#[derive(Debug, Clone)]
pub struct Replayer {
    graph: TrustGraph,
    params: ExperienceParams,
    decay_epoch: u64,
    last_block: Option<u64>,
}

impl Replayer {
    pub fn new(
        params: ExperienceParams,
        theta: f64,
        decay_epoch: u64,
    ) -> Result<Self, LedgerError> {
        params.validate()?;
        if decay_epoch == 0 {
            return Err(LedgerError::ZeroDecayEpoch);
        }
        Ok(Self {
            graph: TrustGraph::new(theta)?,
            params,
            decay_epoch,
            last_block: None,
        })
    }

    pub fn graph(&self) -> &TrustGraph {
        &self.graph
    }

    pub fn into_graph(self) -> TrustGraph {
        self.graph
    }

    pub fn last_block(&self) -> Option<u64> {
        self.last_block
    }

    pub fn apply(&mut self, event: &FeedbackEvent) -> Result<(), LedgerError> {
        event.validate()?;
        if let Some(last) = self.last_block {
            if event.block < last {
                return Err(LedgerError::OutOfOrder {
                    block: event.block,
                    last,
                });
            }
        }
        let score = FeedbackScore::new(event.score)?;
        let from = self.graph.intern(&event.from);
        let to = self.graph.intern(&event.to);
        let state = match self.graph.edge(from, to) {
            Some(&s) => self.decay_until(s, event.block),
            None => ExperienceState::bootstrap(&self.params, event.block),
        };
        let mut next = experience::step(state, score, &self.params);
        next.last_update_block = event.block;
        self.graph.upsert_edge_at(from, to, next)?;
        self.last_block = Some(event.block);
        Ok(())
    }

    /// Applies the decay owed by every edge up to `block`.
    pub fn advance_to(&mut self, block: u64) {
        let params = self.params;
        let epoch = self.decay_epoch;
        for (_, state) in self.graph.edges_mut() {
            *state = decay_state(*state, block, epoch, &params);
        }
        self.last_block = Some(self.last_block.map_or(block, |b| b.max(block)));
    }

    fn decay_until(&self, state: ExperienceState, block: u64) -> ExperienceState {
        decay_state(state, block, self.decay_epoch, &self.params)
    }
}

fn decay_state(
    state: ExperienceState,
    block: u64,
    epoch: u64,
    params: &ExperienceParams,
) -> ExperienceState {
    let elapsed = block.saturating_sub(state.last_update_block) / epoch;
    if elapsed == 0 {
        return state;
    }
    let mut decayed = experience::decay_epochs_unchecked(state, elapsed, params);
    decayed.last_update_block = state.last_update_block + elapsed * epoch;
    decayed
}

/// Replays every event, then decays idle edges up to the final event's block.
pub fn replay(
    ledger: &Ledger,
    params: &ExperienceParams,
    theta: f64,
) -> Result<TrustGraph, LedgerError> {
    let end = ledger.last_block().unwrap_or(0);
    replay_until(ledger, params, theta, end)
}

/// Replays events with `block <= end` and decays idle edges up to `end`.
pub fn replay_until(
    ledger: &Ledger,
    params: &ExperienceParams,
    theta: f64,
    end: u64,
) -> Result<TrustGraph, LedgerError> {
    let mut replayer = Replayer::new(*params, theta, ledger.decay_epoch())?;
    for event in ledger.events().iter().take_while(|e| e.block <= end) {
        replayer.apply(event)?;
    }
    replayer.advance_to(end);
    Ok(replayer.into_graph())
}
