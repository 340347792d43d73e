//! Seeded synthetic stand-ins for face photographs.
//!
//! These are smooth low-frequency color fields, not faces. The embedders are
//! not face-specific, so any fixed image with spatial structure serves as an
//! identity; numbers obtained on them say nothing about real recognition
//! systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::ImageBuffer;

const WAVES: usize = 8;
/// highest spatial frequency, in cycles per image side
const MAX_FREQ: f64 = 3.0;

/// A `size × size` RGB image that depends only on `seed`.
pub fn synthetic_face(seed: u64, size: usize) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_FACE);
    let mut channels = Vec::with_capacity(3);
    for _ in 0..3 {
        let base: f64 = rng.gen_range(0.35..0.65);
        let waves: Vec<(f64, f64, f64, f64)> = (0..WAVES)
            .map(|_| {
                (
                    rng.gen_range(-MAX_FREQ..MAX_FREQ),
                    rng.gen_range(-MAX_FREQ..MAX_FREQ),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.02..0.08),
                )
            })
            .collect();
        channels.push((base, waves));
    }
    let n = size as f64;
    ImageBuffer::from_fn(size, size, 3, |r, c, k| {
        let (base, waves) = &channels[k];
        let (y, x) = ((r as f64 + 0.5) / n, (c as f64 + 0.5) / n);
        let v = waves.iter().fold(*base, |acc, &(fx, fy, phase, amp)| {
            acc + amp * (std::f64::consts::TAU * (fx * x + fy * y) + phase).cos()
        });
        v.clamp(0.0, 1.0)
    })
}
