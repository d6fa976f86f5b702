//! Deterministic seed derivation for independent random streams.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of `master`. Distinct `(master, stream)` pairs
/// give statistically independent seeds; the result does not depend on
/// evaluation order or thread count.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix(mix(master) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Stream tags for the stages of one analysis.
pub mod stream {
    pub const SAMPLING: u64 = 0x5A4D;
    pub const PERMUTATION: u64 = 0x9E4D;
    pub const MONTH: u64 = 0x4D0E;
    pub const SYNTH_EMBEDDINGS: u64 = 0x5E3B;
}
