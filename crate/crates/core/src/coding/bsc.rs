use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CodingError;
use crate::util::{hamming_packed, pack, unpack};

/// Largest message length decoded by exhaustive nearest-codeword search.
const EXHAUSTIVE_LIMIT: usize = 12;
/// Random generator matrices tried per linear code; the one with the largest
/// minimum distance wins.
const GENERATOR_TRIES: usize = 24;

#[derive(Debug, Clone)]
struct LinearCode {
    k: usize,
    n: usize,
    /// All `2^k` codewords, packed, indexed by message value.
    words: Vec<Vec<u64>>,
}

impl LinearCode {
    fn random(k: usize, n: usize, rng: &mut ChaCha8Rng) -> LinearCode {
        if k == 1 {
            // A single message bit: plain repetition is optimal.
            return LinearCode::from_rows(1, n, &[vec![1; n]]);
        }
        let mut best: Option<(u32, LinearCode)> = None;
        let mut tries = 0;
        while tries < GENERATOR_TRIES || best.is_none() {
            tries += 1;
            let rows: Vec<Vec<u8>> =
                (0..k).map(|_| (0..n).map(|_| rng.gen_range(0..=1u8)).collect()).collect();
            let code = LinearCode::from_rows(k, n, &rows);
            let d = code.min_weight();
            if d == 0 {
                continue; // rank deficient
            }
            if best.as_ref().is_none_or(|(bd, _)| d > *bd) {
                best = Some((d, code));
            }
        }
        best.map(|(_, c)| c).expect("loop exits only with a code")
    }

    fn from_rows(k: usize, n: usize, rows: &[Vec<u8>]) -> LinearCode {
        let packed: Vec<Vec<u64>> = rows.iter().map(|r| pack(r)).collect();
        let words = (0..1usize << k)
            .map(|msg| {
                let mut w = vec![0u64; n.div_ceil(64)];
                for (i, row) in packed.iter().enumerate() {
                    // Row 0 is the most significant message bit.
                    if (msg >> (k - 1 - i)) & 1 == 1 {
                        for (a, b) in w.iter_mut().zip(row) {
                            *a ^= b;
                        }
                    }
                }
                w
            })
            .collect();
        LinearCode { k, n, words }
    }

    fn min_weight(&self) -> u32 {
        self.words[1..].iter().map(|w| w.iter().map(|x| x.count_ones()).sum()).min().unwrap_or(0)
    }

    fn encode(&self, msg: u64) -> Vec<u8> {
        unpack(&self.words[msg as usize], self.n)
    }

    fn decode(&self, received: &[u8]) -> u64 {
        let r = pack(received);
        let mut best = (u32::MAX, 0usize);
        for (i, w) in self.words.iter().enumerate() {
            let d = hamming_packed(w, &r);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1 as u64
    }
}

#[derive(Debug, Clone)]
struct Block {
    /// First message bit covered (big-endian position) and its length.
    offset: usize,
    code: LinearCode,
}

#[derive(Debug, Clone)]
enum Inner {
    Linear(LinearCode),
    /// `copies` independent encodings, each splitting the message into
    /// blocks small enough for exhaustive decoding; bits are recovered by
    /// majority over the copies.
    Concatenated { copies: Vec<Vec<Block>>, copy_len: usize },
}

/// A block code for the binary symmetric channel.
#[derive(Debug, Clone)]
pub struct BscCode {
    k_in: usize,
    m_out: usize,
    inner: Inner,
}

pub fn build_bsc_code(k_in: usize, m_out: usize, seed: u64) -> Result<BscCode, CodingError> {
    if k_in == 0 || k_in > 63 {
        return Err(CodingError::InvalidParameter(format!("message length {k_in} outside 1..=63")));
    }
    if m_out < k_in {
        return Err(CodingError::InvalidRate { k_in, m_out });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if k_in <= EXHAUSTIVE_LIMIT {
        let code = LinearCode::random(k_in, m_out, &mut rng);
        return Ok(BscCode { k_in, m_out, inner: Inner::Linear(code) });
    }
    let mut rho = 3;
    while rho > 1 && rho * k_in > m_out {
        rho -= 2;
    }
    let copy_len = m_out / rho;
    let blocks = k_in.div_ceil(EXHAUSTIVE_LIMIT);
    let mut copies = Vec::with_capacity(rho);
    for _ in 0..rho {
        let mut copy = Vec::with_capacity(blocks);
        let mut offset = 0;
        let mut used = 0;
        for b in 0..blocks {
            let k = k_in / blocks + usize::from(b < k_in % blocks);
            let n = copy_len / blocks + usize::from(b < copy_len % blocks);
            if n < k {
                return Err(CodingError::InvalidRate { k_in, m_out });
            }
            copy.push(Block { offset, code: LinearCode::random(k, n, &mut rng) });
            offset += k;
            used += n;
        }
        debug_assert_eq!(used, copy_len);
        copies.push(copy);
    }
    Ok(BscCode { k_in, m_out, inner: Inner::Concatenated { copies, copy_len } })
}

impl BscCode {
    pub fn message_len(&self) -> usize {
        self.k_in
    }

    pub fn block_len(&self) -> usize {
        self.m_out
    }

    /// Encode the low `k_in` bits of `msg`.
    pub fn encode(&self, msg: u64) -> Vec<u8> {
        debug_assert!(self.k_in == 64 || msg >> self.k_in == 0);
        match &self.inner {
            Inner::Linear(c) => c.encode(msg),
            Inner::Concatenated { copies, copy_len } => {
                let mut out = Vec::with_capacity(self.m_out);
                for copy in copies {
                    for block in copy {
                        let shift = self.k_in - block.offset - block.code.k;
                        let part = (msg >> shift) & ((1u64 << block.code.k) - 1);
                        out.extend(block.code.encode(part));
                    }
                }
                debug_assert_eq!(out.len(), copies.len() * copy_len);
                out.resize(self.m_out, 0);
                out
            }
        }
    }

    pub fn decode(&self, received: &[u8]) -> u64 {
        assert_eq!(received.len(), self.m_out, "received block length");
        match &self.inner {
            Inner::Linear(c) => c.decode(received),
            Inner::Concatenated { copies, copy_len } => {
                let mut votes = vec![0usize; self.k_in];
                for (ci, copy) in copies.iter().enumerate() {
                    let mut pos = ci * copy_len;
                    for block in copy {
                        let part = block.code.decode(&received[pos..pos + block.code.n]);
                        pos += block.code.n;
                        for b in 0..block.code.k {
                            if (part >> (block.code.k - 1 - b)) & 1 == 1 {
                                votes[block.offset + b] += 1;
                            }
                        }
                    }
                }
                votes.iter().fold(0u64, |acc, &v| (acc << 1) | u64::from(2 * v > copies.len()))
            }
        }
    }

    /// Minimum distance for exhaustively decoded codes; `None` otherwise.
    pub fn min_distance(&self) -> Option<u32> {
        match &self.inner {
            Inner::Linear(c) => Some(c.min_weight()),
            Inner::Concatenated { .. } => None,
        }
    }

    /// All codewords, for exhaustively decoded codes.
    pub fn codewords(&self) -> Option<Vec<Vec<u8>>> {
        match &self.inner {
            Inner::Linear(c) => Some((0..1u64 << c.k).map(|m| c.encode(m)).collect()),
            Inner::Concatenated { .. } => None,
        }
    }
}
