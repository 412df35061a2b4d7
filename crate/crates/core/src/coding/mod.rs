//! Coding primitives: the back-symbol alphabet and PARSE, tree codes, the
//! greedy Gilbert–Varshamov inner code, random block codes for the binary
//! symmetric channel, and repetition/majority decoding.

mod bsc;
mod gv;
mod repetition;
mod symbols;
mod tree_code;

pub use bsc::{build_bsc_code, BscCode};
pub use gv::{build_gv_code, asymptotic_expansion, GvCode};
pub use repetition::{majority_decode, majority_error_exact, majority_or_zero, rho_error_bound};
pub use symbols::{parse, parse_len, Sym, SymbolCodec};
pub use tree_code::{
    binary_entropy, build_tree_code, default_alphabet_size, NodeKey, TreeCode, TreeCodeDescriptor,
    TreeCodeOptions, Violation,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodingError {
    #[error("{what}: no valid construction within {attempts} attempts")]
    ConstructionFailed { what: &'static str, attempts: usize },
    #[error("depth {requested} exceeds the labelled depth {max}")]
    DepthExceeded { requested: usize, max: usize },
    #[error("block length {m_out} is shorter than message length {k_in}")]
    InvalidRate { k_in: usize, m_out: usize },
    #[error("majority of an even number of bits is undefined")]
    EvenLength,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
