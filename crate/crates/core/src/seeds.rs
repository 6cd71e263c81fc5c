//! Deterministic seed derivation. Every stochastic stage derives its own
//! seed from the master seed plus a label and index, so stages can run in
//! any order (or in parallel) without perturbing each other's streams.

/// SplitMix64 finalizer; good avalanche behaviour for seed mixing.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, label, index)`. Stable across runs
/// and platforms; distinct labels or indices give unrelated streams.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64 ^ master.rotate_left(17);
    for &b in label.as_bytes() {
        h = (h ^ b as u64).wrapping_mul(0x1000_0000_01B3);
    }
    h ^= index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    splitmix64(h)
}
