//! Seed derivation. Every randomized stage draws from its own stream derived
//! from (base seed, salt), so the schedule of parallel workers never changes
//! results.

/// One splitmix64 step.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed from a base seed and a salt (restart index,
/// iteration number, voxel-pair key, ...). Both inputs are fully mixed.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut state = base;
    let a = splitmix64(&mut state);
    let mut state = a ^ salt;
    splitmix64(&mut state)
}

/// Uniform f64 in [0, 1) from a 64-bit word (53 mantissa bits).
pub(crate) fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Cheap counter-based generator for per-item randomness: successive words
/// are splitmix64 outputs from a derived state.
pub(crate) struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(base: u64, salt: u64) -> Self {
        CounterRng {
            state: derive_seed(base, salt),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }
}
