use crate::coding::{parse, Sym};
use crate::engine::{check_len, EngineError};
use crate::model::{PartyId, Protocol};
use crate::rs::parse_estimate;

use super::tree::{extend_central, extend_peripheral, pack_payload, ProtocolTree};

pub(crate) struct ChunkOutcome {
    pub pass: bool,
    /// `|z| - 1` for a peripheral, `|z|` for the central party.
    pub ell: i64,
    pub z_hat: Vec<Option<Vec<u32>>>,
}

/// Labels past the protocol's end are zeros, so the tree is effectively
/// unbounded here.
const OPEN_DEPTH: usize = usize::MAX / 4;

/// The chunk-by-chunk consistency check at `step`.
///
/// A peripheral passes histories of length `step - 1` (`decoded`, `own`)
/// and estimates of length `step - 2`. The central party decodes in the
/// middle of a step, so its `decoded` histories have length `step` and its
/// estimates `step - 1`.
pub fn cons_check_chunked(
    protocol: &Protocol,
    party: PartyId,
    k: usize,
    decoded: &[Vec<Sym>],
    own: &[Vec<Sym>],
    estimates: &[Vec<Sym>],
    step: usize,
) -> Result<bool, EngineError> {
    check_chunked(protocol, party, k, decoded, own, estimates, step).map(|o| o.pass)
}

pub(crate) fn check_chunked(
    protocol: &Protocol,
    party: PartyId,
    k: usize,
    decoded: &[Vec<Sym>],
    own: &[Vec<Sym>],
    estimates: &[Vec<Sym>],
    step: usize,
) -> Result<ChunkOutcome, EngineError> {
    if step == 0 {
        return Err(EngineError::Config("steps are numbered from 1".into()));
    }
    let topo = protocol.topology();
    let central = party == PartyId::Central;
    check_len("neighbour count", topo.receive_width(party), decoded.len())?;
    check_len("estimate count", topo.receive_width(party), estimates.len())?;
    check_len("own stream count", topo.send_width(party), own.len())?;
    let (dec_len, est_len) = if central { (step, step - 1) } else { (step - 1, step.saturating_sub(2)) };
    for d in decoded {
        check_len("decoded history", dec_len, d.len())?;
    }
    for w in own {
        check_len("own history", step - 1, w.len())?;
    }
    for s in estimates {
        check_len("estimate history", est_len, s.len())?;
    }

    let z: Vec<Vec<u32>> = own
        .iter()
        .map(|w| parse(w).ok_or_else(|| EngineError::Config("own sent string is not parseable".into())))
        .collect::<Result<_, _>>()?;
    if z.iter().any(|zi| zi.len() != z[0].len()) {
        return Err(EngineError::Config("per-link sent strings disagree in length".into()));
    }
    let sigma: Vec<Vec<u32>> = estimates
        .iter()
        .map(|s| {
            if central { parse(s) } else { parse_estimate(s) }
                .ok_or_else(|| EngineError::Config("estimate string is not parseable".into()))
        })
        .collect::<Result<_, _>>()?;
    let ell = if central { z[0].len() as i64 } else { z[0].len() as i64 - 1 };
    let rounds = ell.max(0) as usize;
    for s in &sigma {
        check_len("parsed estimate", rounds, s.len())?;
    }
    let z_hat: Vec<Option<Vec<u32>>> = decoded.iter().map(|d| parse(d)).collect();
    let ell_hat = z_hat.iter().map(|z| z.as_ref().map_or(0, Vec::len)).min().unwrap_or(0) as i64;
    let mut outcome = ChunkOutcome { pass: false, ell, z_hat };
    if ell_hat <= ell {
        return Ok(outcome);
    }
    let tree = ProtocolTree::new(protocol, party, OPEN_DEPTH);
    let mut address = Vec::new();
    let mut chunk = vec![0u32; sigma.len()];
    for l in 0..rounds {
        for (k_, zh) in outcome.z_hat.iter().enumerate() {
            if zh.as_ref().expect("length test passed")[l] != sigma[k_][l] {
                return Ok(outcome);
            }
            chunk[k_] = sigma[k_][l];
        }
        match party {
            PartyId::Central => {
                extend_central(protocol, &mut address, &chunk, k)?;
                let answer = tree.central_levels(&address, k)?;
                if z.iter().zip(&answer).any(|(zi, &a)| zi[l] != a) {
                    return Ok(outcome);
                }
            }
            PartyId::Peripheral { link, pos } => {
                let (mates, c) = chunk.split_at(chunk.len() - 1);
                extend_peripheral(protocol, link, pos, &mut address, mates, c[0], k)?;
                if z[0][l + 1] != pack_payload(&tree.next_levels(&address, k)?) {
                    return Ok(outcome);
                }
            }
        }
    }
    outcome.pass = true;
    Ok(outcome)
}
