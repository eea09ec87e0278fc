//! Deterministic seed derivation for independent random streams.

/// Mixes `base` with each of `parts` into a new 64-bit seed. Distinct part
/// tuples give statistically independent streams.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix(base);
    for &v in parts {
        h = splitmix(h ^ v.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
