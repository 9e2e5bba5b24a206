//! Per-trial seed derivation, independent of scheduling order.

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for trial `index` of cell `(truth, t)` under `master`.
pub fn trial_seed(master: u64, truth: usize, t: f64, index: u64) -> u64 {
    [truth as u64, t.to_bits(), index]
        .into_iter()
        .fold(splitmix64(master), |acc, part| splitmix64(acc ^ part))
}
