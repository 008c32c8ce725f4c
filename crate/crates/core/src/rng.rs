//! Counter-based deterministic random numbers.
//!
//! Everything random in the harness (weights, mutation sites, jitter
//! decisions, campaign scheduling) is a pure function of explicit 64-bit
//! seeds, so any case can be replayed bit-exactly from logged metadata.

/// One round of the splitmix64 output function.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a seed with a sequence of counters into a fresh 64-bit value.
///
/// `hash(seed, &[a, b])` and `hash(seed, &[a, c])` are statistically
/// independent streams; this is the keyed counter generator used for
/// weights `(edge seed, parameter index)` and jitter `(seed, edge, step)`.
pub fn hash(seed: u64, counters: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x6a09_e667_f3bc_c908);
    for &c in counters {
        h = splitmix64(h ^ c.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    h
}

/// Uniform value in `[0, 1)` with 24 explicit bits, exact in f32.
#[inline]
pub fn unit_f32(bits: u64) -> f32 {
    ((bits >> 40) as f32) / (1u32 << 24) as f32
}

/// Uniform value in `[0, 1)` with 53 explicit bits, exact in f64.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    ((bits >> 11) as f64) / (1u64 << 53) as f64
}

/// Small sequential generator for shuffles and draws inside one decision.
///
/// Never persisted; every instance is keyed by an explicit seed derived
/// from the campaign master seed.
#[derive(Debug, Clone)]
pub struct SplitMix {
    state: u64,
}

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        splitmix64(self.state)
    }

    /// Uniform index in `0..n`. Modulo bias is negligible for the small
    /// ranges used here (sites, rules, pool indices).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    pub fn unit_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }
}
