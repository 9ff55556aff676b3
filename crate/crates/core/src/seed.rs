//! Seed derivation and content digests.

use sha2::{Digest, Sha256};

/// Deterministic 64-bit seed derived from a tag and integer fields.
pub fn derive_seed(master: u64, tag: &str, fields: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    for f in fields {
        h.update(f.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
