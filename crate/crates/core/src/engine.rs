//! Types shared by the two simulation engines.

use thiserror::Error;

use crate::coding::{CodingError, Sym};
use crate::exchange::ExchangeError;
use crate::model::{PartyId, Transcripts};
use crate::network::Ledger;
use crate::trace::{Trace, TrialReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("engine configuration: {0}")]
    Config(String),
    #[error("consistency check called with {what}: expected length {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("malformed chunk: {0}")]
    MalformedChunk(String),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
}

/// Replace what `party` decodes from its `neighbor`-th neighbour (canonical
/// order) at `step`. Lets tests inject a decoding error at a chosen spot.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOverride {
    pub party: PartyId,
    pub step: usize,
    pub neighbor: usize,
    pub decoded: Vec<Sym>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub record_trace: bool,
    pub record_ledger: bool,
    pub overrides: Vec<DecodeOverride>,
    /// Carried into the report.
    pub seed: u64,
}

impl RunOptions {
    pub fn traced(seed: u64) -> Self {
        Self { record_trace: true, seed, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct EngineOutput {
    /// Each party's output transcripts, truncated to the protocol's round
    /// count (shorter if the party never got that far).
    pub estimates: Transcripts,
    pub report: TrialReport,
    pub trace: Option<Trace>,
    pub ledger: Option<Ledger>,
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), EngineError> {
    if expected == got {
        Ok(())
    } else {
        Err(EngineError::LengthMismatch { what, expected, got })
    }
}

/// Length of the longest common prefix.
pub(crate) fn common_prefix<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}
