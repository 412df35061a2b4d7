//! The tree view of a protocol and the noiseless k-chunk scheme.
//!
//! A party's tree has one level per round; the edge taken at a level is the
//! round's received bits (canonical order, first bit most significant), and
//! each node carries the bits the party sends next. A peripheral's chunk
//! message lists the labels of the first `k` levels below its current node,
//! level by level and lexicographically within a level, packed with the
//! first node in the most significant bit. The central party answers with,
//! per link, the `k` bits it sends along the extended path.

use crate::coding::CodingError;
use crate::engine::EngineError;
use crate::model::{PartyId, Protocol, Transcript, Transcripts};
use crate::util::to_bits;

/// Largest peripheral chunk message handled, in bits.
pub const MAX_PAYLOAD_BITS: usize = 24;

/// Nodes in the first `k` levels of a `2^n1`-ary tree, i.e.
/// `(2^(n1·k) - 1) / (2^n1 - 1)`. `None` on overflow.
pub fn payload_width(n1: usize, k: usize) -> Option<usize> {
    let mut total = 0usize;
    for d in 0..k {
        let shift = u32::try_from(n1 * d).ok().filter(|&s| s < usize::BITS - 1)?;
        total = total.checked_add(1usize << shift)?;
    }
    Some(total)
}

/// Index of the first node of level `d` in a chunk message.
pub(crate) fn level_offset(n1: usize, d: usize) -> usize {
    (0..d).map(|t| 1usize << (n1 * t)).sum()
}

pub(crate) fn bit_at(value: u32, width: usize, index: usize) -> u8 {
    ((value >> (width - 1 - index)) & 1) as u8
}

pub(crate) fn pack_bits(bits: &[u8]) -> u64 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b))
}

/// Pack a chunk message (first node most significant).
pub fn pack_payload(bits: &[u8]) -> u32 {
    debug_assert!(bits.len() <= 32);
    pack_bits(bits) as u32
}

/// One party's protocol tree, labels evaluated on demand.
#[derive(Debug, Clone, Copy)]
pub struct ProtocolTree<'a> {
    protocol: &'a Protocol,
    owner: PartyId,
    depth: usize,
}

impl<'a> ProtocolTree<'a> {
    /// `depth` is the padded depth; levels past the protocol's round count
    /// are labelled with zeros.
    pub fn new(protocol: &'a Protocol, owner: PartyId, depth: usize) -> Self {
        Self { protocol, owner, depth }
    }

    pub fn owner(&self) -> PartyId {
        self.owner
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Bits per edge; the tree has `2^edge_bits` children per node.
    pub fn edge_bits(&self) -> usize {
        self.protocol.topology().receive_width(self.owner)
    }

    fn level_of(&self, address: &[u8]) -> usize {
        address.len() / self.edge_bits()
    }

    /// Label of the node reached by `address`.
    pub fn label(&self, address: &[u8]) -> Vec<u8> {
        self.protocol.next_bits(self.owner, address)
    }

    fn check_room(&self, from: usize, k: usize) -> Result<(), EngineError> {
        if from + k > self.depth {
            return Err(CodingError::DepthExceeded { requested: from + k, max: self.depth }.into());
        }
        Ok(())
    }

    /// Labels of the `k`-level subtree rooted at `address`, level order.
    /// Peripheral trees only.
    pub fn next_levels(&self, address: &[u8], k: usize) -> Result<Vec<u8>, EngineError> {
        if self.owner == PartyId::Central {
            return Err(EngineError::Config("the central party answers with central_levels".into()));
        }
        self.check_room(self.level_of(address), k)?;
        let n1 = self.edge_bits();
        let width = payload_width(n1, k)
            .ok_or_else(|| EngineError::Config(format!("chunk message for n1={n1}, k={k} is too wide")))?;
        let mut out = Vec::with_capacity(width);
        let mut node = address.to_vec();
        for d in 0..k {
            for e in 0..1u64 << (n1 * d) {
                node.truncate(address.len());
                node.extend(to_bits(e, n1 * d));
                out.push(self.label(&node)[0]);
            }
        }
        Ok(out)
    }

    /// The central party's answer for the chunk ending at `address`: per
    /// link, the `k` bits along the path from `k` levels up, packed with the
    /// earliest round most significant.
    pub fn central_levels(&self, address: &[u8], k: usize) -> Result<Vec<u32>, EngineError> {
        if self.owner != PartyId::Central {
            return Err(EngineError::Config("only the central party answers with central_levels".into()));
        }
        let level = self.level_of(address);
        if level < k {
            return Err(EngineError::Config(format!("path of depth {level} is shorter than a chunk")));
        }
        self.check_room(level - k, k)?;
        let w = self.edge_bits();
        let n2 = self.protocol.topology().n2();
        let mut out = vec![0u32; n2];
        for d in 0..k {
            let bits = self.label(&address[..(level - k + d) * w]);
            for (o, b) in out.iter_mut().zip(bits) {
                *o = (*o << 1) | u32::from(b);
            }
        }
        Ok(out)
    }
}

/// A chunk message as handed to the replay functions: packed into a word by
/// the noisy engine, or a plain bit vector when no symbol has to carry it.
pub trait ChunkMessage {
    /// Whether the message is a valid `width`-bit message.
    fn fits(&self, width: usize) -> bool;
    fn bit(&self, width: usize, index: usize) -> u8;
}

impl ChunkMessage for u32 {
    fn fits(&self, width: usize) -> bool {
        width >= 32 || *self >> width == 0
    }

    fn bit(&self, width: usize, index: usize) -> u8 {
        bit_at(*self, width, index)
    }
}

impl ChunkMessage for Vec<u8> {
    fn fits(&self, width: usize) -> bool {
        self.len() == width && self.iter().all(|&b| b <= 1)
    }

    fn bit(&self, _width: usize, index: usize) -> u8 {
        self[index]
    }
}

fn check_values<M: ChunkMessage>(what: &str, values: &[M], expected: usize, width: usize) -> Result<(), EngineError> {
    if values.len() != expected {
        return Err(EngineError::MalformedChunk(format!("{} {what} messages, expected {expected}", values.len())));
    }
    if let Some(i) = values.iter().position(|v| !v.fits(width)) {
        return Err(EngineError::MalformedChunk(format!("{what} message {i} is not a {width}-bit message")));
    }
    Ok(())
}

/// Extend peripheral `(link, pos)`'s path by one chunk. `mates` are the
/// chunk messages of the other link members in position order, `central`
/// the central party's `k` bits for this link.
pub fn extend_peripheral<M: ChunkMessage>(
    protocol: &Protocol,
    link: usize,
    pos: usize,
    address: &mut Vec<u8>,
    mates: &[M],
    central: u32,
    k: usize,
) -> Result<(), EngineError> {
    let n1 = protocol.topology().n1();
    let width = payload_width(n1, k).unwrap_or(usize::MAX);
    check_values("mate", mates, n1 - 1, width)?;
    check_values("central", &[central], 1, k)?;
    let me = PartyId::Peripheral { link, pos };
    // In-chunk edge index of every link member, for reading its message.
    let mut edge = vec![0u64; n1 + 1];
    let mut bits = vec![0u8; n1 + 1];
    let mut heard = Vec::with_capacity(n1);
    for d in 0..k {
        let offset = level_offset(n1, d);
        bits[0] = ((central >> (k - 1 - d)) & 1) as u8;
        for j in 1..=n1 {
            bits[j] = if j == pos {
                protocol.next_bits(me, address)[0]
            } else {
                let slot = if j < pos { j - 1 } else { j - 2 };
                mates[slot].bit(width, offset + edge[j] as usize)
            };
        }
        for j in 1..=n1 {
            heard.clear();
            heard.extend((1..=n1).filter(|&s| s != j).map(|s| bits[s]));
            heard.push(bits[0]);
            edge[j] = (edge[j] << n1) | pack_bits(&heard);
        }
        address.extend((1..=n1).filter(|&s| s != pos).map(|s| bits[s]));
        address.push(bits[0]);
    }
    Ok(())
}

/// Extend the central party's path by one chunk from the messages of all
/// peripherals (link-major order).
pub fn extend_central<M: ChunkMessage>(
    protocol: &Protocol,
    address: &mut Vec<u8>,
    payloads: &[M],
    k: usize,
) -> Result<(), EngineError> {
    let topo = protocol.topology();
    let (n1, n2) = (topo.n1(), topo.n2());
    let width = payload_width(n1, k).unwrap_or(usize::MAX);
    check_values("peripheral", payloads, n1 * n2, width)?;
    let mut edge = vec![0u64; n1 * n2];
    let mut bits = vec![0u8; n1 * n2];
    let mut heard = Vec::with_capacity(n1);
    for d in 0..k {
        let offset = level_offset(n1, d);
        let c = protocol.next_bits(PartyId::Central, address);
        for (q, b) in bits.iter_mut().enumerate() {
            *b = payloads[q].bit(width, offset + edge[q] as usize);
        }
        for i in 0..n2 {
            for j in 0..n1 {
                heard.clear();
                heard.extend((0..n1).filter(|&s| s != j).map(|s| bits[i * n1 + s]));
                heard.push(c[i]);
                let q = i * n1 + j;
                edge[q] = (edge[q] << n1) | pack_bits(&heard);
            }
        }
        address.extend_from_slice(&bits);
    }
    Ok(())
}

/// Bits `party` sends along `address`, one round per level, for `rounds`
/// rounds.
pub(crate) fn sent_along(protocol: &Protocol, party: PartyId, address: &[u8], rounds: usize) -> Vec<u8> {
    let w = protocol.topology().receive_width(party);
    (0..rounds).flat_map(|t| protocol.next_bits(party, &address[..t * w])).collect()
}

/// Run the k-chunk scheme over a perfect network and return each party's
/// transcripts truncated to the protocol's round count.
pub fn run_chunked_noiseless(protocol: &Protocol, k: usize) -> Result<Transcripts, EngineError> {
    if k == 0 || k > 31 {
        return Err(EngineError::Config(format!("chunk size {k} outside 1..=31")));
    }
    let topo = *protocol.topology();
    let rc = protocol.round_count();
    let chunks = rc.div_ceil(k);
    let depth = chunks * k;
    let mut addr: Vec<Vec<u8>> = vec![Vec::new(); topo.n()];
    for _ in 0..chunks {
        let mut payloads = Vec::with_capacity(topo.n() - 1);
        for (q, p) in topo.parties().enumerate().skip(1) {
            payloads.push(ProtocolTree::new(protocol, p, depth).next_levels(&addr[q], k)?);
        }
        extend_central(protocol, &mut addr[0], &payloads, k)?;
        let answer = ProtocolTree::new(protocol, PartyId::Central, depth).central_levels(&addr[0], k)?;
        let n1 = topo.n1();
        for (q, p) in topo.parties().enumerate().skip(1) {
            let PartyId::Peripheral { link, pos } = p else { unreachable!() };
            let first = (link - 1) * n1;
            let mates: Vec<Vec<u8>> = (1..=n1).filter(|&j| j != pos).map(|j| payloads[first + j - 1].clone()).collect();
            extend_peripheral(protocol, link, pos, &mut addr[q], &mates, answer[link - 1], k)?;
        }
    }
    let parties = topo
        .parties()
        .zip(addr)
        .map(|(p, a)| {
            let w = topo.receive_width(p);
            Transcript { sent: sent_along(protocol, p, &a, rc), received: a[..rc * w].to_vec() }
        })
        .collect();
    Ok(Transcripts { topology: topo, rounds: rc, parties })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{run_noiseless, ProtocolKind, Topology};

    fn random(n1: usize, n2: usize, rc: usize, seed: u64) -> Protocol {
        Protocol::from_kind(Topology::new(n1, n2).unwrap(), rc, &ProtocolKind::Random { seed }, 6, seed).unwrap()
    }

    #[test]
    fn widths_follow_the_node_count() {
        assert_eq!(payload_width(2, 2), Some(5));
        assert_eq!(payload_width(3, 1), Some(1));
        assert_eq!(payload_width(1, 3), Some(7));
        assert_eq!(payload_width(64, 2), None);
    }

    #[test]
    fn single_level_is_the_next_bit() {
        let p = random(3, 2, 4, 5);
        let me = PartyId::Peripheral { link: 2, pos: 3 };
        let t = ProtocolTree::new(&p, me, 4);
        let addr = vec![1, 0, 1, 1, 1, 0];
        assert_eq!(t.next_levels(&addr, 1).unwrap(), p.next_bits(me, &addr));
    }

    #[test]
    fn two_levels_match_direct_evaluation() {
        let p = random(2, 2, 6, 8);
        let me = PartyId::Peripheral { link: 1, pos: 2 };
        let t = ProtocolTree::new(&p, me, 6);
        let addr = vec![0, 1];
        let got = t.next_levels(&addr, 2).unwrap();
        assert_eq!(got.len(), 5);
        assert_eq!(got[0], p.next_bits(me, &addr)[0]);
        for e in 0..4u64 {
            let mut a = addr.clone();
            a.extend(to_bits(e, 2));
            assert_eq!(got[1 + e as usize], p.next_bits(me, &a)[0]);
        }
        assert!(matches!(
            t.next_levels(&[0; 10], 2),
            Err(EngineError::Coding(CodingError::DepthExceeded { .. }))
        ));
    }

    #[test]
    fn chunked_scheme_matches_the_protocol() {
        for (n1, n2) in [(1, 1), (2, 2), (3, 1), (1, 4)] {
            for rc in 1..=6 {
                for k in 1..=rc {
                    let p = random(n1, n2, rc, (rc * 10 + k) as u64);
                    assert_eq!(run_chunked_noiseless(&p, k).unwrap(), run_noiseless(&p), "{n1}x{n2} rc={rc} k={k}");
                }
            }
        }
    }

    #[test]
    fn wrong_widths_are_rejected() {
        let p = random(2, 1, 4, 1);
        let mut a = Vec::new();
        assert!(matches!(extend_peripheral(&p, 1, 1, &mut a, &[0, 0], 0, 2), Err(EngineError::MalformedChunk(_))));
        assert!(matches!(extend_peripheral(&p, 1, 1, &mut a, &[32], 0, 2), Err(EngineError::MalformedChunk(_))));
        assert!(matches!(extend_central(&p, &mut a, &[0], 2), Err(EngineError::MalformedChunk(_))));
    }
}
