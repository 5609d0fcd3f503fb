//! Named sub-seeds.
//!
//! Every random stream in the toolkit is derived from a single user seed by
//! xoring in the FNV-1a hash of a stream label, so two subcommands sharing a
//! seed never share a stream.

use std::hash::Hasher;

use fnv::FnvHasher;

/// Label of the document-sampling stream used during ingestion.
pub const RESERVOIR: &str = "reservoir";
/// Label of the label-shuffling stream used by the permutation test.
pub const PERMUTATION: &str = "permutation";

/// 64-bit FNV-1a hash of `bytes`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(bytes);
    hasher.finish()
}

/// `seed ⊕ fnv1a(label)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    seed ^ fnv1a(label.as_bytes())
}
