//! Simulation and coding library for interactive protocols over networks of
//! intersecting noisy broadcast links.
//!
//! A network has `n2` broadcast links of `n1` peripheral parties each, all of
//! them joined by one central party. Every party broadcasts one bit per round
//! on each link it belongs to, and every receiver sees each bit through its
//! own binary symmetric channel.
//!
//! The crate provides the reference noiseless executor ([`model`]), coding
//! primitives ([`coding`]), the noisy network ([`network`]), the per-link
//! bit-exchange layer ([`exchange`]), two robust simulation engines
//! ([`rs`] and [`chunked`]) and an experiment harness ([`harness`]).

pub mod coding;
pub mod model;
pub mod util;
pub mod exchange;
pub mod network;
pub mod trace;
pub mod engine;
pub mod rs;
pub mod chunked;
pub mod harness;
