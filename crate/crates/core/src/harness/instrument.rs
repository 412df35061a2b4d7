//! Progress accounting over a recorded trace: real progress (the agreeing
//! prefix of a party's estimate), back steps, and the largest number of
//! tree-code decoding errors on any chain of steps that can influence a
//! party. Every `(party, step)` must satisfy `r <= RP + B + X`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PartyId, Topology};
use crate::trace::{EngineKind, StepRecord, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstrumentError {
    #[error("trace incomplete: {0}")]
    TraceIncomplete(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub party: usize,
    pub step: usize,
    pub rp: i64,
    pub backs: usize,
    pub x: usize,
}

impl Progress {
    pub fn satisfied(&self) -> bool {
        self.step as i64 <= self.rp + self.backs as i64 + self.x as i64
    }
}

fn records_by_key(trace: &Trace) -> HashMap<(usize, usize), &StepRecord> {
    trace.records.iter().map(|r| ((r.party, r.step), r)).collect()
}

/// Steps for which each party must have a record.
fn expected_steps(trace: &Trace, party: usize) -> usize {
    match trace.header.engine {
        // The central party of the chunked engine has no closing step.
        EngineKind::Chunked { .. } if party == 0 => trace.header.steps,
        _ => trace.header.steps + 1,
    }
}

fn get<'a>(
    by_key: &HashMap<(usize, usize), &'a StepRecord>,
    party: usize,
    step: usize,
) -> Result<&'a StepRecord, InstrumentError> {
    by_key
        .get(&(party, step))
        .copied()
        .ok_or_else(|| InstrumentError::TraceIncomplete(format!("no record for party {party} at step {step}")))
}

fn first_mismatch(estimate: &[u8], truth: &[u8], unit: usize, units: usize) -> Result<Option<usize>, InstrumentError> {
    if estimate.len() < units * unit || truth.len() < units * unit {
        return Err(InstrumentError::TraceIncomplete(format!(
            "estimate or ground truth shorter than {units} units of {unit} bits"
        )));
    }
    Ok((0..units).find(|&l| estimate[l * unit..(l + 1) * unit] != truth[l * unit..(l + 1) * unit]).map(|l| l + 1))
}

fn real_progress(topo: &Topology, engine: EngineKind, r: &StepRecord, truth: &[u8]) -> Result<i64, InstrumentError> {
    let width = topo.receive_width(topo.party(r.party));
    let central = r.party == 0;
    match engine {
        EngineKind::Rs => {
            let ell = r.ell.max(0) as usize;
            Ok(match first_mismatch(&r.received_estimate, truth, width, ell)? {
                Some(l) => l as i64,
                None => r.ell + 1,
            })
        }
        EngineKind::Chunked { k } | EngineKind::Simple { k } => {
            let ell = r.ell.max(0) as usize;
            Ok(match (first_mismatch(&r.received_estimate, truth, width * k, ell)?, central) {
                (Some(l), true) => l as i64 - 1,
                (Some(l), false) => l as i64,
                (None, true) => r.ell,
                (None, false) => r.ell + 1,
            })
        }
    }
}

/// Real progress, back count and error bound for every `(party, step)`.
pub fn progress(trace: &Trace) -> Result<Vec<Progress>, InstrumentError> {
    let h = &trace.header;
    let topo = h.topology;
    let n = topo.n();
    if h.ground_truth.len() != n {
        return Err(InstrumentError::TraceIncomplete(format!(
            "ground truth for {} parties, expected {n}",
            h.ground_truth.len()
        )));
    }
    let by_key = records_by_key(trace);
    let last = h.steps + 1;
    let err = |q: usize, r: usize| -> Result<usize, InstrumentError> {
        if r == 0 || r > expected_steps(trace, q) {
            return Ok(0);
        }
        Ok(usize::from(get(&by_key, q, r)?.tree_error))
    };

    // x[r][q]
    let mut x = vec![vec![0usize; n]; last + 1];
    match h.engine {
        EngineKind::Rs => {
            for r in 1..=last {
                let prev = &x[r - 1];
                let all = prev.iter().copied().max().unwrap_or(0);
                let mut row = vec![0usize; n];
                for (q, p) in topo.parties().enumerate() {
                    let reach = match p {
                        PartyId::Central => all,
                        PartyId::Peripheral { link, .. } => {
                            let first = 1 + (link - 1) * topo.n1();
                            (first..first + topo.n1()).map(|s| prev[s]).max().unwrap_or(0).max(prev[0])
                        }
                    };
                    row[q] = err(q, r)? + reach;
                }
                x[r] = row;
            }
        }
        EngineKind::Chunked { .. } | EngineKind::Simple { .. } => {
            // Within a step the peripherals act first and the central party
            // second, so a chain may pass through one peripheral and then the
            // central party in every step.
            let mut periph_sum = 0usize;
            let mut central_sum = 0usize;
            for r in 1..=last {
                let mut worst = 0usize;
                for q in 1..n {
                    let e = err(q, r)?;
                    x[r][q] = e + periph_sum + central_sum;
                    worst = worst.max(e);
                }
                periph_sum += worst;
                central_sum += err(0, r)?;
                x[r][0] = periph_sum + central_sum;
            }
        }
    }

    let mut out = Vec::new();
    for q in 0..n {
        for r in 1..=expected_steps(trace, q) {
            let rec = get(&by_key, q, r)?;
            let rp = real_progress(&topo, h.engine, rec, &h.ground_truth[q])?;
            out.push(Progress { party: q, step: r, rp, backs: rec.backs, x: x[r][q] });
        }
    }
    Ok(out)
}

/// Every `(party, step)` where `r > RP + B + X`. Expected to be empty.
pub fn check_progress_bound(trace: &Trace) -> Result<Vec<Progress>, InstrumentError> {
    Ok(progress(trace)?.into_iter().filter(|p| !p.satisfied()).collect())
}

/// Records breaking the step-count law `r = ℓ + 1 + 2B` (`r = ℓ + 2B` for
/// the central party of the chunked engine).
pub fn check_step_law(trace: &Trace) -> Vec<String> {
    trace
        .records
        .iter()
        .filter(|r| {
            let offset = match trace.header.engine {
                EngineKind::Chunked { .. } if r.party == 0 => 0,
                _ => 1,
            };
            r.step as i64 != r.ell + offset + 2 * r.backs as i64
        })
        .map(|r| format!("party {} step {}: ℓ={} B={}", r.party, r.step, r.ell, r.backs))
        .collect()
}
