//! Small shared helpers.

use sha2::{Digest, Sha256};

/// Derives an independent RNG seed from a base seed and a purpose tag, so
/// that unrelated random streams (weight init, dropout, shuffling, data
/// synthesis) never alias even when the run shares one top-level seed.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Hex rendering of a 32-byte digest.
pub fn hex32(bytes: &[u8; 32]) -> String {
    let mut s = String::with_capacity(64);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
