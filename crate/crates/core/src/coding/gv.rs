use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::CodingError;
use crate::util::{hamming_packed, pack, unpack};

/// Expansion factor `ceil(10/δ²)` for which a random code is known to work.
pub fn asymptotic_expansion(delta: f64) -> usize {
    (10.0 / (delta * delta) - 1e-9).ceil() as usize
}

/// A code `{0,1}^m → {0,1}^{mK}` whose codewords are pairwise further apart
/// than `(1/2 - δ)·K·m`.
#[derive(Debug, Clone, Serialize)]
pub struct GvCode {
    m: usize,
    expansion: usize,
    delta: f64,
    #[serde(skip)]
    words: Vec<Vec<u64>>,
}

/// An attempt restarts after this many rejections in a row.
const STALL: usize = 50_000;
const ATTEMPTS: usize = 256;

/// Greedy construction in Varshamov's linear form: draw random generator
/// rows and keep a row when it lies further than the threshold from every
/// word spanned so far. Each kept row doubles the codebook, and the distance
/// between any two spanned words is the distance from some kept row to an
/// earlier word, so the check suffices.
pub fn build_gv_code(m: usize, delta: f64, expansion: Option<usize>, seed: u64) -> Result<GvCode, CodingError> {
    if m == 0 || m > 16 {
        return Err(CodingError::InvalidParameter(format!("GV message length {m} outside 1..=16")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(CodingError::InvalidParameter(format!("delta {delta} outside (0, 1/2)")));
    }
    let k = expansion.unwrap_or_else(|| asymptotic_expansion(delta));
    let len = m * k;
    let threshold = (0.5 - delta) * len as f64;
    let need = 1usize << m;

    if m == 1 {
        // Two antipodal words: the best possible pair.
        let words = vec![pack(&vec![0; len]), pack(&vec![1; len])];
        return finish(m, k, delta, words, threshold);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ATTEMPTS {
        let mut words: Vec<Vec<u64>> = vec![vec![0; len.div_ceil(64)]];
        let mut rejected = 0;
        while rejected < STALL {
            let row = random_word(&mut rng, len);
            rejected += 1;
            if words.iter().all(|w| f64::from(hamming_packed(w, &row)) > threshold) {
                rejected = 0;
                let coset: Vec<Vec<u64>> =
                    words.iter().map(|w| w.iter().zip(&row).map(|(a, b)| a ^ b).collect()).collect();
                words.extend(coset);
                if words.len() == need {
                    return finish(m, k, delta, words, threshold);
                }
            }
        }
    }
    Err(CodingError::ConstructionFailed { what: "GV code", attempts: ATTEMPTS })
}

/// A uniformly random packed word of `len` bits.
fn random_word(rng: &mut ChaCha8Rng, len: usize) -> Vec<u64> {
    let mut words: Vec<u64> = (0..len.div_ceil(64)).map(|_| rng.gen()).collect();
    if !len.is_multiple_of(64) {
        *words.last_mut().unwrap() &= (1u64 << (len % 64)) - 1;
    }
    words
}

fn finish(m: usize, k: usize, delta: f64, words: Vec<Vec<u64>>, threshold: f64) -> Result<GvCode, CodingError> {
    let code = GvCode { m, expansion: k, delta, words };
    if f64::from(code.min_distance()) > threshold {
        Ok(code)
    } else {
        Err(CodingError::ConstructionFailed { what: "GV code", attempts: 1 })
    }
}

impl GvCode {
    pub fn message_len(&self) -> usize {
        self.m
    }

    pub fn expansion(&self) -> usize {
        self.expansion
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn block_len(&self) -> usize {
        self.m * self.expansion
    }

    /// Every pair of codewords is strictly further apart than this.
    pub fn distance_threshold(&self) -> f64 {
        (0.5 - self.delta) * self.block_len() as f64
    }

    /// Message bits are read big-endian: bit 0 is the most significant.
    fn index(bits: &[u8]) -> usize {
        bits.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b & 1))
    }

    pub fn encode(&self, msg: &[u8]) -> Vec<u8> {
        assert_eq!(msg.len(), self.m, "GV message length");
        unpack(&self.words[Self::index(msg)], self.block_len())
    }

    pub fn codeword(&self, index: usize) -> Vec<u8> {
        unpack(&self.words[index], self.block_len())
    }

    /// Nearest codeword over the known positions (`None` marks an erasure);
    /// ties go to the smallest message.
    pub fn decode_masked(&self, received: &[Option<u8>]) -> Vec<u8> {
        assert_eq!(received.len(), self.block_len());
        let mask: Vec<u8> = received.iter().map(|r| u8::from(r.is_some())).collect();
        let value: Vec<u8> = received.iter().map(|r| r.unwrap_or(0)).collect();
        let (mask, value) = (pack(&mask), pack(&value));
        let mut best = (u32::MAX, 0usize);
        for (i, w) in self.words.iter().enumerate() {
            let d: u32 = w
                .iter()
                .zip(&value)
                .zip(&mask)
                .map(|((a, b), m)| ((a ^ b) & m).count_ones())
                .sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        (0..self.m).map(|b| ((best.1 >> (self.m - 1 - b)) & 1) as u8).collect()
    }

    pub fn decode(&self, received: &[u8]) -> Vec<u8> {
        let r: Vec<Option<u8>> = received.iter().map(|&b| Some(b)).collect();
        self.decode_masked(&r)
    }

    pub fn min_distance(&self) -> u32 {
        let mut best = u32::MAX;
        for i in 0..self.words.len() {
            for j in i + 1..self.words.len() {
                best = best.min(hamming_packed(&self.words[i], &self.words[j]));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymptotic_expansion_value() {
        assert_eq!(asymptotic_expansion(0.025), 16000);
    }

    #[test]
    fn single_bit_is_repetition() {
        let c = build_gv_code(1, 0.025, Some(8), 0).unwrap();
        assert_eq!(c.codeword(0), vec![0; 8]);
        assert_eq!(c.codeword(1), vec![1; 8]);
        assert_eq!(c.min_distance(), 8);
    }

    #[test]
    fn erasures_are_ignored() {
        let c = build_gv_code(2, 0.025, Some(8), 4).unwrap();
        let mut r: Vec<Option<u8>> = c.encode(&[1, 0]).into_iter().map(Some).collect();
        for x in r.iter_mut().take(8) {
            *x = None;
        }
        assert_eq!(c.decode_masked(&r), vec![1, 0]);
    }
}
