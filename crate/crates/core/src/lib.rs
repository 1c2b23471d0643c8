//! Explain a trained classifier by distilling it into a surrogate built
//! from clustered per-layer activations.
//!
//! Pipeline: train a [`baseline`] network, dump activations at selected
//! layers ([`store`]), cluster each layer with deep embedded clustering
//! ([`dec`]), map clusters to labels through empirical posteriors and
//! average the layers ([`surrogate`]), then explain predictions with
//! similar training samples and per-cluster concepts ([`explain`]).

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
pub mod dec;
pub mod error;
pub mod explain;
pub mod gradcheck;
pub mod kmeans;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod store;
pub mod surrogate;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use tensor::Tensor;

/// Stage seed: `seed` plus the FNV-1a hash of `tag`, wrapping.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seed.wrapping_add(h)
}
