//! The noisy network: per-(round, sender, receiver) Bernoulli flips drawn
//! from a keyed counter-based generator, so flip patterns are reproducible and
//! independent of evaluation order or thread count.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PartyId, Topology};
use crate::util::{hash_words, mix64};

/// Version tag written into every ledger line.
pub const LEDGER_SCHEMA: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("crossover probability {0} outside [0, 1/2)")]
    InvalidEpsilon(f64),
    #[error("{party} sent {got} bits this round, expected {expected}")]
    MissingSend { party: PartyId, expected: usize, got: usize },
}

/// Binary symmetric noise with crossover probability `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    epsilon: f64,
    master_seed: u64,
    #[serde(skip)]
    threshold: u64,
}

impl NoiseModel {
    pub fn new(epsilon: f64, master_seed: u64) -> Result<Self, NetworkError> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(NetworkError::InvalidEpsilon(epsilon));
        }
        // epsilon < 1/2, so the product stays well inside u64.
        let threshold = (epsilon * 18_446_744_073_709_551_616.0) as u64;
        Ok(Self { epsilon, master_seed, threshold })
    }

    pub fn noiseless() -> Self {
        Self { epsilon: 0.0, master_seed: 0, threshold: 0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Whether the bit `sender` broadcasts in `round` reaches `receiver`
    /// flipped. Senders and receivers are dense party indices.
    #[inline]
    pub fn flips(&self, round: u64, sender: usize, receiver: usize) -> bool {
        if self.threshold == 0 {
            return false;
        }
        let edge = ((sender as u64) << 32) | receiver as u64;
        hash_words(self.master_seed, &[round, mix64(edge)]) < self.threshold
    }
}

/// Deliver one network-wide round. `sends` must hold one bit per peripheral
/// and `n2` bits for the central party. The result lists, per party, its
/// received bits in canonical order.
pub fn broadcast_round(
    topology: &Topology,
    noise: &NoiseModel,
    round_index: u64,
    sends: &BTreeMap<PartyId, Vec<u8>>,
) -> Result<BTreeMap<PartyId, Vec<u8>>, NetworkError> {
    let mut dense = Vec::with_capacity(topology.n());
    for p in topology.parties() {
        let expected = topology.send_width(p);
        let got = sends.get(&p).map_or(0, Vec::len);
        if got != expected {
            return Err(NetworkError::MissingSend { party: p, expected, got });
        }
        dense.push(sends[&p].clone());
    }
    let heard = topology.route(&dense, |s, r, b| b ^ u8::from(noise.flips(round_index, s, r)));
    Ok(heard.into_iter().enumerate().map(|(i, bits)| (topology.party(i), bits)).collect())
}

/// One link's view of one round, as recorded in the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub round: u64,
    pub link: usize,
    /// Member 0 is the central party, members `1..=n1` the peripherals.
    pub sent: Vec<u8>,
    /// `received[q][s]`: what member `q` got from member `s`.
    pub received: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundLedger {
    pub schema: u32,
    pub round_index: u64,
    pub links: Vec<LinkRecord>,
}

/// Optional recorder of everything sent and received.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    records: Vec<LinkRecord>,
}

impl Ledger {
    pub fn push(&mut self, record: LinkRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Group the per-link records by round, links in ascending order.
    pub fn rounds(&self) -> Vec<RoundLedger> {
        let mut by_round: BTreeMap<u64, Vec<LinkRecord>> = BTreeMap::new();
        for r in &self.records {
            by_round.entry(r.round).or_default().push(r.clone());
        }
        by_round
            .into_iter()
            .map(|(round_index, mut links)| {
                links.sort_by_key(|l| l.link);
                RoundLedger { schema: LEDGER_SCHEMA, round_index, links }
            })
            .collect()
    }

    pub fn write_json_lines(&self, mut w: impl Write) -> io::Result<()> {
        for round in self.rounds() {
            serde_json::to_writer(&mut w, &round)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// The members of one broadcast link exchanging bits round by round.
pub trait LinkChannel {
    /// Number of members, `n1 + 1`.
    fn size(&self) -> usize;

    /// Every member broadcasts `sends[q]`. Returns `received[q][s]`; a
    /// member's own entry is its own bit.
    fn transmit(&mut self, sends: &[u8]) -> Vec<Vec<u8>>;

    /// Rounds consumed so far.
    fn rounds_used(&self) -> u64;
}

/// A link of the noisy network, addressed through global party indices so
/// that flips agree with [`broadcast_round`].
pub struct NoisyLink<'a> {
    noise: &'a NoiseModel,
    link: usize,
    members: Vec<usize>,
    start: u64,
    clock: u64,
    ledger: Option<&'a mut Ledger>,
}

impl<'a> NoisyLink<'a> {
    /// Link `link` (1-based) starting at global round `start`.
    pub fn new(
        topology: &Topology,
        noise: &'a NoiseModel,
        link: usize,
        start: u64,
        ledger: Option<&'a mut Ledger>,
    ) -> Self {
        let members = std::iter::once(0)
            .chain((1..=topology.n1()).map(|pos| topology.index(PartyId::Peripheral { link, pos })))
            .collect();
        Self { noise, link, members, start, clock: start, ledger }
    }
}

impl LinkChannel for NoisyLink<'_> {
    fn size(&self) -> usize {
        self.members.len()
    }

    fn transmit(&mut self, sends: &[u8]) -> Vec<Vec<u8>> {
        assert_eq!(sends.len(), self.members.len(), "every link member must send");
        let round = self.clock;
        let received: Vec<Vec<u8>> = self
            .members
            .iter()
            .enumerate()
            .map(|(q, &rq)| {
                self.members
                    .iter()
                    .enumerate()
                    .map(|(s, &rs)| {
                        if s == q {
                            sends[s]
                        } else {
                            sends[s] ^ u8::from(self.noise.flips(round, rs, rq))
                        }
                    })
                    .collect()
            })
            .collect();
        if let Some(ledger) = self.ledger.as_deref_mut() {
            ledger.push(LinkRecord { round, link: self.link, sent: sends.to_vec(), received: received.clone() });
        }
        self.clock += 1;
        received
    }

    fn rounds_used(&self) -> u64 {
        self.clock - self.start
    }
}

/// Empirical flip counts per directed edge, for diagnostics.
pub fn flip_counts(topology: &Topology, noise: &NoiseModel, rounds: u64) -> HashMap<(usize, usize), u64> {
    let mut counts = HashMap::new();
    let zeros: Vec<Vec<u8>> = topology.parties().map(|p| vec![0; topology.send_width(p)]).collect();
    for round in 0..rounds {
        topology.route(&zeros, |s, r, _| {
            if noise.flips(round, s, r) {
                *counts.entry((s, r)).or_insert(0) += 1;
            } else {
                counts.entry((s, r)).or_insert(0);
            }
            0
        });
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_epsilon() {
        assert!(NoiseModel::new(0.5, 0).is_err());
        assert!(NoiseModel::new(1.0, 0).is_err());
        assert!(NoiseModel::new(-0.1, 0).is_err());
        assert!(NoiseModel::new(0.499, 0).is_ok());
    }

    #[test]
    fn missing_send_is_reported() {
        let topo = Topology::new(2, 2).unwrap();
        let noise = NoiseModel::new(0.1, 1).unwrap();
        let mut sends: BTreeMap<PartyId, Vec<u8>> = topo.parties().map(|p| (p, vec![0; topo.send_width(p)])).collect();
        sends.insert(PartyId::Central, vec![1]);
        assert!(matches!(
            broadcast_round(&topo, &noise, 0, &sends),
            Err(NetworkError::MissingSend { party: PartyId::Central, .. })
        ));
    }

    #[test]
    fn link_view_matches_network_view() {
        let topo = Topology::new(3, 2).unwrap();
        let noise = NoiseModel::new(0.3, 77).unwrap();
        let sends: BTreeMap<PartyId, Vec<u8>> = topo
            .parties()
            .map(|p| (p, (0..topo.send_width(p)).map(|i| (topo.index(p) + i) as u8 & 1).collect()))
            .collect();
        let global = broadcast_round(&topo, &noise, 5, &sends).unwrap();
        for link in 1..=2 {
            let mut l = NoisyLink::new(&topo, &noise, link, 5, None);
            let mut local = vec![sends[&PartyId::Central][link - 1]];
            local.extend((1..=3).map(|pos| sends[&PartyId::Peripheral { link, pos }][0]));
            let got = l.transmit(&local);
            for pos in 1..=3 {
                let p = PartyId::Peripheral { link, pos };
                let expected: Vec<u8> =
                    (1..=3).filter(|&s| s != pos).map(|s| got[pos][s]).chain([got[pos][0]]).collect();
                assert_eq!(global[&p], expected);
                assert_eq!(global[&PartyId::Central][(link - 1) * 3 + pos - 1], got[0][pos]);
            }
        }
    }
}
