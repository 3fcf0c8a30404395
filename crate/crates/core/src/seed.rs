//! Deterministic seed derivation and content hashing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one 64-bit seed. Order-sensitive.
pub fn hash64(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(GOLDEN, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash64(parts))
}

/// First 8 bytes of the SHA-256 of `text`, big-endian.
pub fn content_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Stable 64-bit seed for a string label (dataset names and the like).
pub fn str_seed(s: &str) -> u64 {
    content_hash(s)
}
