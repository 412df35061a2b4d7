//! Network topology, party identities, noiseless protocols and the reference
//! executor that produces ground-truth transcripts.
//!
//! Parties are addressed either by [`PartyId`] or by a dense index: the central
//! party is index 0 and `p_{i,j}` is `1 + (i-1)·n1 + (j-1)`.
//!
//! Inside one round, a peripheral `p_{i,j}` lists what it heard as
//! `p_{i,1}, …, p_{i,n1}` (skipping itself) followed by the central party.
//! The central party lists `p_{1,1}, …, p_{1,n1}, p_{2,1}, …, p_{n2,n1}`.

use std::fmt;
use std::ops::Index;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{hash_bits, hash_words};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("topology needs n1 >= 1 and n2 >= 1, got n1={n1}, n2={n2}")]
    InvalidTopology { n1: usize, n2: usize },
    #[error("protocol round count must be at least 1")]
    ZeroRounds,
    #[error("expected {expected} inputs, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("party {0} is not part of this topology")]
    UnknownParty(PartyId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyId {
    Central,
    /// `link` in `1..=n2`, `pos` in `1..=n1`.
    Peripheral { link: usize, pos: usize },
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Central => write!(f, "p0"),
            PartyId::Peripheral { link, pos } => write!(f, "p{link},{pos}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTopology")]
pub struct Topology {
    n1: usize,
    n2: usize,
}

#[derive(Deserialize)]
struct RawTopology {
    n1: usize,
    n2: usize,
}

impl TryFrom<RawTopology> for Topology {
    type Error = ModelError;
    fn try_from(raw: RawTopology) -> Result<Self, Self::Error> {
        Topology::new(raw.n1, raw.n2)
    }
}

impl Topology {
    pub fn new(n1: usize, n2: usize) -> Result<Self, ModelError> {
        if n1 == 0 || n2 == 0 {
            return Err(ModelError::InvalidTopology { n1, n2 });
        }
        Ok(Self { n1, n2 })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Total number of parties, `n1·n2 + 1`.
    pub fn n(&self) -> usize {
        self.n1 * self.n2 + 1
    }

    pub fn contains(&self, p: PartyId) -> bool {
        match p {
            PartyId::Central => true,
            PartyId::Peripheral { link, pos } => {
                (1..=self.n2).contains(&link) && (1..=self.n1).contains(&pos)
            }
        }
    }

    pub fn index(&self, p: PartyId) -> usize {
        debug_assert!(self.contains(p), "{p} outside topology");
        match p {
            PartyId::Central => 0,
            PartyId::Peripheral { link, pos } => 1 + (link - 1) * self.n1 + (pos - 1),
        }
    }

    pub fn party(&self, idx: usize) -> PartyId {
        assert!(idx < self.n(), "party index {idx} out of range");
        if idx == 0 {
            PartyId::Central
        } else {
            PartyId::Peripheral { link: 1 + (idx - 1) / self.n1, pos: 1 + (idx - 1) % self.n1 }
        }
    }

    pub fn parties(&self) -> impl Iterator<Item = PartyId> + '_ {
        (0..self.n()).map(|i| self.party(i))
    }

    pub fn peripherals(&self) -> impl Iterator<Item = PartyId> + '_ {
        (1..self.n()).map(|i| self.party(i))
    }

    /// Bits a party broadcasts per round: one per adjacent link.
    pub fn send_width(&self, p: PartyId) -> usize {
        match p {
            PartyId::Central => self.n2,
            PartyId::Peripheral { .. } => 1,
        }
    }

    /// Bits a party hears per round.
    pub fn receive_width(&self, p: PartyId) -> usize {
        match p {
            PartyId::Central => self.n1 * self.n2,
            PartyId::Peripheral { .. } => self.n1,
        }
    }

    /// The senders a party hears from, in canonical per-round order.
    pub fn heard_from(&self, p: PartyId) -> Vec<PartyId> {
        match p {
            PartyId::Central => self.peripherals().collect(),
            PartyId::Peripheral { link, pos } => (1..=self.n1)
                .filter(|&j| j != pos)
                .map(|j| PartyId::Peripheral { link, pos: j })
                .chain(std::iter::once(PartyId::Central))
                .collect(),
        }
    }

    /// Deliver one round of broadcasts. `sends[q]` holds the bits of party
    /// with dense index `q` (n2 bits for the central party, one otherwise).
    /// `channel(sender, receiver, bit)` returns the bit the receiver gets.
    /// The result holds, per receiver, its round bits in canonical order.
    pub fn route(
        &self,
        sends: &[Vec<u8>],
        mut channel: impl FnMut(usize, usize, u8) -> u8,
    ) -> Vec<Vec<u8>> {
        let mut out = Vec::with_capacity(self.n());
        let mut central = Vec::with_capacity(self.n1 * self.n2);
        for s in 1..self.n() {
            central.push(channel(s, 0, sends[s][0]));
        }
        out.push(central);
        for r in 1..self.n() {
            let link = (r - 1) / self.n1;
            let first = 1 + link * self.n1;
            let mut bits = Vec::with_capacity(self.n1);
            for s in first..first + self.n1 {
                if s != r {
                    bits.push(channel(s, r, sends[s][0]));
                }
            }
            bits.push(channel(0, r, sends[0][link]));
            out.push(bits);
        }
        out
    }
}

/// The next-bit function of a noiseless protocol, without zero-padding.
///
/// Implementations may assume they are only called for rounds `1..=RC`; the
/// [`Protocol`] wrapper handles everything past that.
pub trait ProtocolLogic: Send + Sync + fmt::Debug {
    fn peripheral_bit(&self, topo: &Topology, link: usize, pos: usize, input: &[u8], received: &[u8]) -> u8;

    /// Fills `out` (length n2) with the bit sent on each link.
    fn central_bits(&self, topo: &Topology, input: &[u8], received: &[u8], out: &mut [u8]);
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolKind {
    Constant { bit: u8 },
    Random { seed: u64 },
    XorEcho,
    ParityAggregate,
}

impl ProtocolKind {
    pub fn logic(&self) -> Arc<dyn ProtocolLogic> {
        match *self {
            ProtocolKind::Constant { bit } => Arc::new(Constant(bit & 1)),
            ProtocolKind::Random { seed } => Arc::new(RandomTable { seed }),
            ProtocolKind::XorEcho => Arc::new(XorEcho),
            ProtocolKind::ParityAggregate => Arc::new(ParityAggregate),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub u8);

impl ProtocolLogic for Constant {
    fn peripheral_bit(&self, _: &Topology, _: usize, _: usize, _: &[u8], _: &[u8]) -> u8 {
        self.0
    }
    fn central_bits(&self, _: &Topology, _: &[u8], _: &[u8], out: &mut [u8]) {
        out.fill(self.0);
    }
}

/// Every (party, input, received prefix) maps to an independent pseudo-random
/// bit. Hashing plays the role of a lazily memoized random table.
#[derive(Debug, Clone, Copy)]
pub struct RandomTable {
    pub seed: u64,
}

impl ProtocolLogic for RandomTable {
    fn peripheral_bit(&self, topo: &Topology, link: usize, pos: usize, input: &[u8], received: &[u8]) -> u8 {
        let idx = topo.index(PartyId::Peripheral { link, pos }) as u64;
        let h = hash_words(self.seed, &[idx, hash_bits(1, input), hash_bits(2, received)]);
        (h >> 63) as u8
    }

    fn central_bits(&self, _: &Topology, input: &[u8], received: &[u8], out: &mut [u8]) {
        let base = hash_words(self.seed, &[0, hash_bits(1, input), hash_bits(2, received)]);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (hash_words(base, &[i as u64 + 1]) >> 63) as u8;
        }
    }
}

/// Round 1: send an input bit. Afterwards: send the XOR of what was heard in
/// the previous round (the central party does this per link).
#[derive(Debug, Clone, Copy)]
pub struct XorEcho;

impl ProtocolLogic for XorEcho {
    fn peripheral_bit(&self, topo: &Topology, _: usize, _: usize, input: &[u8], received: &[u8]) -> u8 {
        if received.is_empty() {
            return input.first().copied().unwrap_or(0);
        }
        let w = topo.n1();
        received[received.len() - w..].iter().fold(0, |a, b| a ^ b)
    }

    fn central_bits(&self, topo: &Topology, input: &[u8], received: &[u8], out: &mut [u8]) {
        let n1 = topo.n1();
        if received.is_empty() {
            for (i, o) in out.iter_mut().enumerate() {
                *o = if input.is_empty() { 0 } else { input[i % input.len()] };
            }
            return;
        }
        let last = &received[received.len() - n1 * topo.n2()..];
        for (i, o) in out.iter_mut().enumerate() {
            *o = last[i * n1..(i + 1) * n1].iter().fold(0, |a, b| a ^ b);
        }
    }
}

/// Peripherals mix a rotating input bit with the last bit heard from the
/// centre; the centre broadcasts the parity of everything it heard last round.
#[derive(Debug, Clone, Copy)]
pub struct ParityAggregate;

impl ProtocolLogic for ParityAggregate {
    fn peripheral_bit(&self, topo: &Topology, _: usize, _: usize, input: &[u8], received: &[u8]) -> u8 {
        let round = received.len() / topo.n1();
        let own = if input.is_empty() { 0 } else { input[round % input.len()] };
        let centre = received.last().copied().unwrap_or(0);
        own ^ centre
    }

    fn central_bits(&self, topo: &Topology, _: &[u8], received: &[u8], out: &mut [u8]) {
        let w = topo.n1() * topo.n2();
        let parity = if received.is_empty() {
            0
        } else {
            received[received.len() - w..].iter().fold(0, |a, b| a ^ b)
        };
        out.fill(parity);
    }
}

/// A deterministic, fully-utilized protocol together with its inputs.
#[derive(Debug, Clone)]
pub struct Protocol {
    topology: Topology,
    round_count: usize,
    logic: Arc<dyn ProtocolLogic>,
    inputs: Vec<Vec<u8>>,
}

impl Protocol {
    /// `inputs` is indexed by dense party index.
    pub fn new(
        topology: Topology,
        round_count: usize,
        logic: Arc<dyn ProtocolLogic>,
        inputs: Vec<Vec<u8>>,
    ) -> Result<Self, ModelError> {
        if round_count == 0 {
            return Err(ModelError::ZeroRounds);
        }
        if inputs.len() != topology.n() {
            return Err(ModelError::InputCount { expected: topology.n(), got: inputs.len() });
        }
        Ok(Self { topology, round_count, logic, inputs })
    }

    /// Convenience constructor: a protocol kind with seeded random inputs.
    pub fn from_kind(
        topology: Topology,
        round_count: usize,
        kind: &ProtocolKind,
        input_width: usize,
        input_seed: u64,
    ) -> Result<Self, ModelError> {
        let inputs = random_inputs(&topology, input_width, input_seed);
        Self::new(topology, round_count, kind.logic(), inputs)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn round_count(&self) -> usize {
        self.round_count
    }

    pub fn input(&self, p: PartyId) -> &[u8] {
        &self.inputs[self.topology.index(p)]
    }

    /// The bits `p` sends in the round following `received`, with
    /// zero-padding once `received` covers `RC` rounds or more.
    pub fn next_bits(&self, p: PartyId, received: &[u8]) -> Vec<u8> {
        let mut out = vec![0u8; self.topology.send_width(p)];
        self.next_bits_into(p, received, &mut out);
        out
    }

    pub fn next_bits_into(&self, p: PartyId, received: &[u8], out: &mut [u8]) {
        let width = self.topology.receive_width(p);
        debug_assert_eq!(received.len() % width, 0, "partial round in received prefix");
        if received.len() / width >= self.round_count {
            out.fill(0);
            return;
        }
        let input = self.input(p);
        match p {
            PartyId::Central => self.logic.central_bits(&self.topology, input, received, out),
            PartyId::Peripheral { link, pos } => {
                out[0] = self.logic.peripheral_bit(&self.topology, link, pos, input, received) & 1;
            }
        }
    }

    pub fn peripheral_bit(&self, link: usize, pos: usize, received: &[u8]) -> u8 {
        let mut out = [0u8];
        self.next_bits_into(PartyId::Peripheral { link, pos }, received, &mut out);
        out[0]
    }
}

/// Seeded uniformly random input strings, one per party.
pub fn random_inputs(topology: &Topology, width: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..topology.n())
        .map(|_| (0..width).map(|_| rng.gen_range(0..=1u8)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub sent: Vec<u8>,
    pub received: Vec<u8>,
}

/// Per-party transcripts, indexed by dense party index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcripts {
    pub topology: Topology,
    pub rounds: usize,
    pub parties: Vec<Transcript>,
}

impl Transcripts {
    pub fn get(&self, p: PartyId) -> &Transcript {
        &self.parties[self.topology.index(p)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (PartyId, &Transcript)> {
        self.parties.iter().enumerate().map(|(i, t)| (self.topology.party(i), t))
    }

    /// Keep only the first `rounds` rounds of every transcript.
    pub fn truncated(&self, rounds: usize) -> Transcripts {
        let topo = self.topology;
        let parties = self
            .iter()
            .map(|(p, t)| Transcript {
                sent: t.sent[..rounds * topo.send_width(p)].to_vec(),
                received: t.received[..rounds * topo.receive_width(p)].to_vec(),
            })
            .collect();
        Transcripts { topology: topo, rounds, parties }
    }
}

impl Index<PartyId> for Transcripts {
    type Output = Transcript;
    fn index(&self, p: PartyId) -> &Transcript {
        self.get(p)
    }
}

/// Run the protocol over a perfect network for exactly `RC` rounds.
pub fn run_noiseless(protocol: &Protocol) -> Transcripts {
    run_noiseless_rounds(protocol, protocol.round_count())
}

/// Run the zero-padded protocol for an arbitrary number of rounds. The engines
/// compare against this when their simulated depth exceeds `RC`.
pub fn run_noiseless_rounds(protocol: &Protocol, rounds: usize) -> Transcripts {
    let topo = *protocol.topology();
    let mut parties = vec![Transcript::default(); topo.n()];
    let mut sends: Vec<Vec<u8>> = topo.parties().map(|p| vec![0; topo.send_width(p)]).collect();
    for _ in 0..rounds {
        for (q, p) in topo.parties().enumerate() {
            protocol.next_bits_into(p, &parties[q].received, &mut sends[q]);
            parties[q].sent.extend_from_slice(&sends[q]);
        }
        let heard = topo.route(&sends, |_, _, b| b);
        for (q, bits) in heard.into_iter().enumerate() {
            parties[q].received.extend(bits);
        }
    }
    Transcripts { topology: topo, rounds, parties }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_index_round_trips() {
        let topo = Topology::new(3, 4).unwrap();
        for i in 0..topo.n() {
            assert_eq!(topo.index(topo.party(i)), i);
        }
        assert_eq!(topo.index(PartyId::Peripheral { link: 2, pos: 1 }), 4);
    }

    #[test]
    fn rejects_empty_topology() {
        assert!(Topology::new(0, 1).is_err());
        assert!(Topology::new(1, 0).is_err());
        assert!(Topology::new(1, 1).is_ok());
    }

    #[test]
    fn heard_from_order() {
        let topo = Topology::new(3, 2).unwrap();
        let p = PartyId::Peripheral { link: 2, pos: 2 };
        assert_eq!(
            topo.heard_from(p),
            vec![
                PartyId::Peripheral { link: 2, pos: 1 },
                PartyId::Peripheral { link: 2, pos: 3 },
                PartyId::Central
            ]
        );
        assert_eq!(topo.heard_from(PartyId::Central).len(), 6);
    }

    #[test]
    fn zero_padding_after_round_count() {
        let topo = Topology::new(2, 1).unwrap();
        let proto = Protocol::new(topo, 1, Arc::new(Constant(1)), vec![vec![]; 3]).unwrap();
        assert_eq!(proto.next_bits(PartyId::Central, &[]), vec![1]);
        assert_eq!(proto.next_bits(PartyId::Central, &[1, 1]), vec![0]);
        let t = run_noiseless_rounds(&proto, 3);
        assert_eq!(t.get(PartyId::Central).sent, vec![1, 0, 0]);
    }

    #[test]
    fn deserializing_rejects_bad_topology() {
        assert!(serde_json::from_str::<Topology>(r#"{"n1":0,"n2":2}"#).is_err());
        let t: Topology = serde_json::from_str(r#"{"n1":2,"n2":3}"#).unwrap();
        assert_eq!(t.n(), 7);
    }
}
