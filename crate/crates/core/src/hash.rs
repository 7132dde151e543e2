//! Deterministic hashing primitives shared by the routing policies and the
//! simulator's correctness oracle.
//!
//! Everything here is pinned: session-affinity routing and the simulated
//! response draws must produce identical results for identical inputs on
//! every platform and in every run, so we avoid `std::hash` (whose output
//! is allowed to change between Rust releases) and implement FNV-1a plus a
//! SplitMix64-style finalizer by hand.

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// SplitMix64 finalizer. FNV-1a alone has weak avalanche in the low bits;
/// this pass makes the output usable as a uniform draw.
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    x
}

/// Maps a 64-bit hash to [0, 1) using the top 53 bits.
pub fn hash_to_unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Domain-separated draw for a simulated model response: one fixed value
/// per (seed, model, query) triple, independent of attempt index.
pub fn response_draw(seed: u64, model_id: &str, query_id: &str) -> u64 {
    let mut buf = Vec::with_capacity(8 + model_id.len() + query_id.len() + 2);
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.push(0x1f);
    buf.extend_from_slice(model_id.as_bytes());
    buf.push(0x1f);
    buf.extend_from_slice(query_id.as_bytes());
    mix64(fnv1a_64(&buf))
}

/// Formats 128 random bits in the canonical 8-4-4-4-12 hex layout.
pub fn format_uuid(bits: u128) -> String {
    let hex = format!("{bits:032x}");
    format!(
        "{}-{}-{}-{}-{}",
        &hex[0..8],
        &hex[8..12],
        &hex[12..16],
        &hex[16..20],
        &hex[20..32]
    )
}
