//! Seed derivation. Every random stage draws its RNG seed from the scenario
//! seed plus fixed stage/agent tags, so pipelines are reproducible without
//! any global RNG state.

/// Well-known stage tags for derived seeds.
pub mod stage {
    pub const RAYCAST: u64 = 1;
    pub const GEOM_AUG: u64 = 2;
    pub const TARGETS_ROAD: u64 = 3;
    pub const TARGETS_OBJECT: u64 = 4;
    pub const ANCHOR_NEG: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a list of tags. Mixing is
/// order-sensitive: `derive_seed(s, &[a, b]) != derive_seed(s, &[b, a])`.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &t in tags {
        state = splitmix64(state ^ t.wrapping_mul(0xD134_2543_DE82_EF95));
    }
    state
}
