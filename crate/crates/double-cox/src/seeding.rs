//! Deterministic seed derivation for replicated simulations.
//!
//! Replication streams must be reproducible from a single master seed and
//! stable under any parallel execution schedule, so sub-seeds are pure
//! functions of (master seed, cell index, replication index) built from the
//! SplitMix64 finalizer.

/// SplitMix64 mixing step: a bijective 64-bit finalizer with good avalanche
/// behavior.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for one replication: `master ^ mix(cell, rep)` where
/// `mix(c, r) = splitmix64(splitmix64(c * phi) + r)` and `phi` is the 64-bit
/// golden-ratio constant.
pub fn replication_seed(master: u64, cell: u64, rep: u64) -> u64 {
    master ^ splitmix64(splitmix64(cell.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(rep))
}

/// Tagged auxiliary stream derived from a base seed (calibration draws,
/// dataset generation, multistart perturbations, ...). Different tag
/// strings give independent streams over the same base seed.
pub fn stream_seed(base: u64, tag: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in tag.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    base ^ splitmix64(hash.wrapping_mul(0xD605_BBB5_8C8A_BC2D))
}
