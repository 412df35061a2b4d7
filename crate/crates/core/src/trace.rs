//! Per-trial reports and per-(party, step) state traces shared by both
//! engines and consumed by the progress instrumentation.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::model::Topology;

pub const TRACE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineKind {
    Rs,
    Chunked { k: usize },
    Simple { k: usize },
}

/// A tree-code decoding error: `party` decoded some neighbour's history
/// wrongly at `step`, and the wrong part is a suffix of length `suffix`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeErrorEvent {
    pub party: usize,
    pub step: usize,
    pub suffix: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub success: bool,
    pub party_success: Vec<bool>,
    /// Communication steps (the closing decode is not counted).
    pub steps: usize,
    pub per_step_rounds: usize,
    pub rounds: u64,
    /// Back steps per party.
    pub backs: Vec<usize>,
    pub tree_errors: Vec<TreeErrorEvent>,
    /// Symbols decoded by the inner layer, and how many came out wrong.
    pub symbol_decodes: u64,
    pub symbol_errors: u64,
    pub invariant_violations: Vec<String>,
    /// Filled in by the harness from the trace.
    pub progress_violations: usize,
}

impl TrialReport {
    pub fn total_backs(&self) -> usize {
        self.backs.iter().sum()
    }
}

/// State of one party right after one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub party: usize,
    pub step: usize,
    /// Length of the simulated transcript (rounds for the rewind engine,
    /// chunks for the chunked engine). May be -1 for a peripheral that has
    /// backed all the way out.
    pub ell: i64,
    pub backs: usize,
    /// The party's current estimate of its received transcript, flattened
    /// round by round in canonical order.
    pub received_estimate: Vec<u8>,
    pub tree_error: bool,
    pub suffix_mismatch: usize,
    pub sent_back: bool,
    pub inner_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    pub engine: EngineKind,
    pub topology: Topology,
    pub round_count: usize,
    /// Number of communication steps.
    pub steps: usize,
    /// Noiseless received transcripts per party, long enough to cover every
    /// simulated round of the trace.
    pub ground_truth: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
}

impl Trace {
    /// First line: header; then one record per line.
    pub fn write_json_lines(&self, mut w: impl Write) -> io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_json_lines(r: impl BufRead) -> io::Result<Trace> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "empty trace"))??;
        let header: TraceHeader = serde_json::from_str(&first)?;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(Trace { header, records })
    }
}
