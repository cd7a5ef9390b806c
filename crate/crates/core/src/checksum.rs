//! SHA-256 digests of numeric payloads, used in manifests and sidecars.

use sha2::{Digest, Sha256};

/// Hex SHA-256 of the little-endian bytes of `values`.
pub fn f64_digest(values: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Hex SHA-256 of raw bytes.
pub fn bytes_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
