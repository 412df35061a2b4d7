//! The chunked scheme: instead of one round per step, every step simulates
//! `k` rounds at once. Peripherals advertise the labels of the next `k`
//! levels of their protocol tree, the central party resolves the realized
//! path and answers with its own `k` bits per link. The noisy version runs
//! the rewind machinery over these chunk messages, with separate tree codes
//! and block codes for the peripheral and central alphabets.

mod check;
mod sim;
mod tree;

use serde::{Deserialize, Serialize};

use crate::coding::{build_bsc_code, BscCode, TreeCode, TreeCodeOptions};
use crate::engine::EngineError;
use crate::model::Topology;
use crate::util::{ceil_log2, loglog2};

pub use check::cons_check_chunked;
pub use sim::{run_chunked, run_simple};
pub use tree::{
    extend_central, extend_peripheral, pack_payload, payload_width, run_chunked_noiseless, ChunkMessage, ProtocolTree,
    MAX_PAYLOAD_BITS,
};

/// Paths per verification level above which the tree codes are only
/// verified to a shallower depth.
const VERIFY_BUDGET: u64 = 2048;

fn default_c_ecc() -> f64 {
    24.0
}

/// Configuration of the chunked engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkConfig {
    /// Chunk size; defaults to `ceil(loglog n2 / n1)`, at least 1.
    #[serde(default)]
    pub k: Option<usize>,
    /// Block codes get `ceil(c_ecc · max(1, log2 n2))` bits unless a width
    /// is given.
    #[serde(default = "default_c_ecc")]
    pub c_ecc: f64,
    #[serde(default)]
    pub ecc_nc_width: Option<usize>,
    #[serde(default)]
    pub ecc_c_width: Option<usize>,
    /// Tree code output symbol widths, in bits.
    #[serde(default)]
    pub tree_bits_nc: Option<u32>,
    #[serde(default)]
    pub tree_bits_c: Option<u32>,
    /// Code every chunk message directly and skip tree codes and rewinds.
    #[serde(default)]
    pub fallback_simple: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            k: None,
            c_ecc: default_c_ecc(),
            ecc_nc_width: None,
            ecc_c_width: None,
            tree_bits_nc: None,
            tree_bits_c: None,
            fallback_simple: false,
            seed: 0,
        }
    }
}

pub fn default_chunk_size(topology: &Topology) -> usize {
    let k = (loglog2(topology.n2() as f64) / topology.n1() as f64 - 1e-9).ceil();
    (k as usize).max(1)
}

/// Everything the chunked engines need besides the protocol and the noise.
#[derive(Debug, Clone)]
pub struct ChunkAlphabets {
    pub k: usize,
    /// Peripheral chunk message width.
    pub payload_nc: usize,
    /// Central chunk message width (`k`).
    pub payload_c: usize,
    /// Absent in the simple variant.
    pub tree_nc: Option<TreeCode>,
    pub tree_c: Option<TreeCode>,
    pub ecc_nc: BscCode,
    pub ecc_c: BscCode,
}

fn default_tree_bits(arity: u64) -> u32 {
    let need = ceil_log2(arity);
    need.max((need + 4).min(12))
}

fn chunk_tree(payload: usize, bits: Option<u32>, depth: usize, seed: u64) -> Result<TreeCode, EngineError> {
    let arity = (1u64 << payload) + 1;
    let bits = bits.unwrap_or_else(|| default_tree_bits(arity));
    if bits > 31 {
        return Err(EngineError::Config(format!("tree symbols of {bits} bits are too wide")));
    }
    let mut verify = 0;
    while verify < depth && arity.saturating_pow(verify as u32 + 1) <= VERIFY_BUDGET {
        verify += 1;
    }
    let opts = TreeCodeOptions { symbols: Some(1 << bits), depth: Some(depth), ..TreeCodeOptions::default() };
    Ok(TreeCode::build(arity as u32, 0.5, verify, seed, opts)?)
}

impl ChunkAlphabets {
    pub fn build(config: &ChunkConfig, topology: &Topology, round_count: usize) -> Result<Self, EngineError> {
        let k = config.k.unwrap_or_else(|| default_chunk_size(topology));
        if k == 0 {
            return Err(EngineError::Config("k must be at least 1".into()));
        }
        let payload_nc = payload_width(topology.n1(), k)
            .filter(|&w| w <= MAX_PAYLOAD_BITS)
            .ok_or_else(|| {
                EngineError::Config(format!(
                    "chunk messages for n1={}, k={k} exceed {MAX_PAYLOAD_BITS} bits",
                    topology.n1()
                ))
            })?;
        if config.c_ecc.is_nan() || config.c_ecc <= 0.0 {
            return Err(EngineError::Config(format!("c_ecc must be positive, got {}", config.c_ecc)));
        }
        let default_width = (config.c_ecc * (topology.n2() as f64).log2().max(1.0) - 1e-9).ceil() as usize;
        let steps = 2 * round_count.div_ceil(k);
        let (tree_nc, tree_c, in_nc, in_c) = if config.fallback_simple {
            (None, None, payload_nc, k)
        } else {
            let tnc = chunk_tree(payload_nc, config.tree_bits_nc, steps + 1, config.seed ^ 0x7E4E)?;
            let tc = chunk_tree(k, config.tree_bits_c, steps + 1, config.seed ^ 0x7E43)?;
            let (a, b) = (tnc.symbol_bits() as usize, tc.symbol_bits() as usize);
            (Some(tnc), Some(tc), a, b)
        };
        let width = |explicit: Option<usize>, k_in: usize| -> Result<usize, EngineError> {
            match explicit {
                Some(w) if w < k_in => {
                    Err(EngineError::Config(format!("block length {w} shorter than the {k_in}-bit message")))
                }
                Some(w) => Ok(w),
                None => Ok(default_width.max(k_in)),
            }
        };
        let ecc_nc = build_bsc_code(in_nc, width(config.ecc_nc_width, in_nc)?, config.seed ^ 0xECC0)?;
        let ecc_c = build_bsc_code(in_c, width(config.ecc_c_width, in_c)?, config.seed ^ 0xECC1)?;
        Ok(Self { k, payload_nc, payload_c: k, tree_nc, tree_c, ecc_nc, ecc_c })
    }

    pub fn is_simple(&self) -> bool {
        self.tree_nc.is_none()
    }

    /// Communication steps for a protocol of `round_count` rounds.
    pub fn steps(&self, round_count: usize) -> usize {
        let chunks = round_count.div_ceil(self.k);
        if self.is_simple() {
            chunks
        } else {
            2 * chunks
        }
    }

    /// Both halves of a step: peripherals, then the central party.
    pub fn per_step_rounds(&self) -> usize {
        self.ecc_nc.block_len() + self.ecc_c.block_len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_k_is_one_at_small_scale() {
        assert_eq!(default_chunk_size(&Topology::new(2, 16).unwrap()), 1);
        assert_eq!(default_chunk_size(&Topology::new(1, 256).unwrap()), 3);
    }

    #[test]
    fn alphabets_have_the_derived_widths() {
        let topo = Topology::new(2, 4).unwrap();
        let a = ChunkAlphabets::build(&ChunkConfig { k: Some(2), ..ChunkConfig::default() }, &topo, 6).unwrap();
        assert_eq!(a.payload_nc, 5);
        assert_eq!(a.tree_nc.as_ref().unwrap().arity(), 33);
        assert_eq!(a.tree_c.as_ref().unwrap().arity(), 5);
        assert_eq!(a.ecc_nc.block_len(), 48);
        assert_eq!(a.steps(6), 6);
        assert!(a.tree_nc.as_ref().unwrap().depth() >= 7);
    }
}
