//! Differentiable adversarial-sticker optimization.
//!
//! A rectangular sticker texture is bent onto a parabolic hat surface,
//! pitched, composited into a face image, warped to a recognition template
//! and embedded. The sticker pixels are then optimized with a two-stage
//! momentum sign-gradient loop to push the embedding away from an anchor
//! identity, averaging gradients over randomly jittered transformation
//! parameters.

pub mod attack;
pub mod cli;
pub mod config;
pub mod embedder;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod gradcheck;
pub mod image;
pub mod ppm;
pub mod render;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod tv;

pub use embedder::{cosine_sim, Embedder, EmbedderConfig, EmbedderKind, Embedding};
pub use error::{Error, Result};
pub use geometry::{arclen, arclen_inverse, BendPitchParams, StickerSpec};
pub use image::{clip01, composite, ImageBuffer};
pub use ppm::{load_ppm, save_ppm};
pub use render::{render, RenderPlan};
pub use sampler::{bilinear_sample, bilinear_sample_vjp, SamplingGrid};
