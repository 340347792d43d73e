//! Counter-based uniform generator for model weights.
//!
//! Weight `index` of parameter `stream` under `seed` is
//!
//! ```text
//! key   = mix64(seed * 0x9E3779B97F4A7C15 ^ stream * 0xD1B54A32D192ED03)
//! bits  = mix64(key + (index + 1) * 0x9E3779B97F4A7C15)
//! value = (bits >> 11) * 2^-53            in [0, 1)
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer and all arithmetic wraps modulo
//! 2^64. Any implementation of these three lines reproduces the same weights.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MUL: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            key: mix64(seed.wrapping_mul(GOLDEN) ^ stream.wrapping_mul(STREAM_MUL)),
        }
    }

    #[inline]
    pub fn bits(&self, index: u64) -> u64 {
        mix64(self.key.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&self, index: u64) -> f64 {
        (self.bits(index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    #[inline]
    pub fn symmetric(&self, index: u64) -> f64 {
        2.0 * self.uniform(index) - 1.0
    }
}
