//! Version string and configuration hashing embedded in every artifact.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// `git describe` of the build, or the package version outside a checkout.
pub const VERSION: &str = env!("ROCKCAP_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// SHA-256 of the JSON encoding of `value`.
pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("value serializes"))
}
