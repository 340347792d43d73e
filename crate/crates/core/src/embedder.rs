//! Deterministic, differentiable stand-ins for a face-recognition network.
//!
//! Two architectures share one interface:
//!
//! * `toy_cnn`: input mapped to `[-1, 1]`, four 3×3 stride-2 convolutions
//!   (8, 16, 32, 64 channels, zero padding 1, no bias) each followed by ReLU,
//!   global average pooling, and a dense map to the embedding.
//! * `linear`: one dense map from the flattened (row, column, channel) input.
//!
//! Every weight is `√3 · symmetric(seed, stream, index) / √fan_in` drawn from
//! [`CounterRng`], so identical configs give identical weights everywhere.
//! Each 3×3 kernel of the toy_cnn is then shifted to zero mean and rescaled
//! by `√(9/8)` to keep its variance. Without that the pooled features of any
//! smooth image point in nearly the same direction and the similarity
//! gradient is too weak to beat the TV term.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::render::TEMPLATE_SIZE;
use crate::rng::CounterRng;

pub const DEFAULT_DIM: usize = 64;
const CONV_CHANNELS: [usize; 4] = [8, 16, 32, 64];
const WEIGHT_MAGIC: &[u8; 4] = b"AEMB";

/// An embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, k: f64) -> Embedding {
        Embedding(self.0.iter().map(|v| v * k).collect())
    }
}

fn nonzero_norms(u: &Embedding, v: &Embedding) -> Result<(f64, f64)> {
    if u.dim() != v.dim() {
        return Err(Error::Shape(format!("embedding dims {} vs {}", u.dim(), v.dim())));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || !nu.is_finite() {
        return Err(Error::ZeroNorm("cosine similarity (first argument)"));
    }
    if nv == 0.0 || !nv.is_finite() {
        return Err(Error::ZeroNorm("cosine similarity (second argument)"));
    }
    Ok((nu, nv))
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_sim(u: &Embedding, v: &Embedding) -> Result<f64> {
    let (nu, nv) = nonzero_norms(u, v)?;
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Gradient of [`cosine_sim`] with respect to `u`:
/// `v/(‖u‖‖v‖) − (u·v)·u/(‖u‖³‖v‖)`.
pub fn cosine_sim_grad(u: &Embedding, v: &Embedding) -> Result<Embedding> {
    let (nu, nv) = nonzero_norms(u, v)?;
    let dot = u.dot(v);
    let inv = 1.0 / (nu * nv);
    let k = dot / (nu * nu * nu * nv);
    Ok(Embedding(
        u.0.iter().zip(&v.0).map(|(a, b)| b * inv - k * a).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    ToyCnn,
    Linear,
}

impl EmbedderKind {
    fn code(self) -> u32 {
        match self {
            EmbedderKind::ToyCnn => 0,
            EmbedderKind::Linear => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(EmbedderKind::ToyCnn),
            1 => Ok(EmbedderKind::Linear),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

impl FromStr for EmbedderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy_cnn" => Ok(EmbedderKind::ToyCnn),
            "linear" => Ok(EmbedderKind::Linear),
            other => Err(Error::UnknownKind(other.into())),
        }
    }
}

impl fmt::Display for EmbedderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedderKind::ToyCnn => "toy_cnn",
            EmbedderKind::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub seed: u32,
    /// side of the square RGB input
    pub input: usize,
    pub dim: usize,
}

impl EmbedderConfig {
    pub fn new(kind: EmbedderKind, seed: u32) -> Self {
        Self {
            kind,
            seed,
            input: TEMPLATE_SIZE,
            dim: DEFAULT_DIM,
        }
    }

    /// `toy_cnn-s1`, `linear-s7`, ...
    pub fn label(&self) -> String {
        format!("{}-s{}", self.kind, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input < 2 || self.dim == 0 {
            return Err(Error::InvalidParams(format!(
                "embedder input {} / dim {}",
                self.input, self.dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Conv {
    in_c: usize,
    out_c: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    /// `[out][in][ky][kx]`
    w: Vec<f64>,
}

impl Conv {
    fn new(in_c: usize, out_c: usize, in_h: usize, in_w: usize, w: Vec<f64>) -> Self {
        Self {
            in_c,
            out_c,
            in_h,
            in_w,
            out_h: (in_h - 1) / 2 + 1,
            out_w: (in_w - 1) / 2 + 1,
            w,
        }
    }

    fn forward(&self, input: &[f64]) -> Vec<f64> {
        let (ih, iw, oh, ow) = (self.in_h, self.in_w, self.out_h, self.out_w);
        let mut out = vec![0.0; self.out_c * oh * ow];
        for o in 0..self.out_c {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            for i in 0..self.in_c {
                let src = &input[i * ih * iw..(i + 1) * ih * iw];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let w = self.w[((o * self.in_c + i) * 3 + ky) * 3 + kx];
                        for oy in 0..oh {
                            let iy = 2 * oy + ky;
                            if iy == 0 || iy > ih {
                                continue;
                            }
                            let row = &src[(iy - 1) * iw..iy * iw];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            for (ox, o_v) in orow.iter_mut().enumerate() {
                                let ix = 2 * ox + kx;
                                if ix == 0 || ix > iw {
                                    continue;
                                }
                                *o_v += w * row[ix - 1];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn backward(&self, d_out: &[f64]) -> Vec<f64> {
        let (ih, iw, oh, ow) = (self.in_h, self.in_w, self.out_h, self.out_w);
        let mut d_in = vec![0.0; self.in_c * ih * iw];
        for o in 0..self.out_c {
            let plane = &d_out[o * oh * ow..(o + 1) * oh * ow];
            for i in 0..self.in_c {
                let dst = &mut d_in[i * ih * iw..(i + 1) * ih * iw];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let w = self.w[((o * self.in_c + i) * 3 + ky) * 3 + kx];
                        for oy in 0..oh {
                            let iy = 2 * oy + ky;
                            if iy == 0 || iy > ih {
                                continue;
                            }
                            let row = &mut dst[(iy - 1) * iw..iy * iw];
                            let orow = &plane[oy * ow..(oy + 1) * ow];
                            for (ox, g) in orow.iter().enumerate() {
                                let ix = 2 * ox + kx;
                                if ix == 0 || ix > iw {
                                    continue;
                                }
                                row[ix - 1] += w * g;
                            }
                        }
                    }
                }
            }
        }
        d_in
    }
}

#[derive(Debug, Clone)]
struct ToyCnn {
    convs: Vec<Conv>,
    /// `[dim][64]`
    dense: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Dense {
    /// `[dim][n]`
    w: Vec<f64>,
    n: usize,
}

#[derive(Debug, Clone)]
enum Model {
    ToyCnn(ToyCnn),
    Linear(Dense),
}

/// Intermediate values kept by a forward pass for the VJP.
#[derive(Debug, Clone)]
pub struct Tape {
    /// post-ReLU activations per conv layer (toy_cnn only)
    activations: Vec<Vec<f64>>,
}

impl Tape {
    /// Sign pattern of every ReLU; two inputs with equal patterns lie on the
    /// same linear piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.activations
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > 0.0))
            .collect()
    }
}

fn draw_weights(seed: u32, stream: u64, count: usize, fan_in: usize) -> Vec<f64> {
    let rng = CounterRng::new(seed as u64, stream);
    let scale = 3f64.sqrt() / (fan_in as f64).sqrt();
    (0..count as u64).map(|i| scale * rng.symmetric(i)).collect()
}

fn zero_mean_kernels(w: &mut [f64]) {
    let rescale = (9.0f64 / 8.0).sqrt();
    for k in w.chunks_exact_mut(9) {
        let mean = k.iter().sum::<f64>() / 9.0;
        for v in k.iter_mut() {
            *v = (*v - mean) * rescale;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Embedder {
    config: EmbedderConfig,
    model: Model,
}

impl Embedder {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        let weights = Self::generate(&config);
        Self::from_parts(config, weights)
    }

    fn layer_sizes(config: &EmbedderConfig) -> Vec<(usize, usize)> {
        match config.kind {
            EmbedderKind::ToyCnn => {
                let mut sizes = Vec::new();
                let mut in_c = 3;
                for &c in &CONV_CHANNELS {
                    sizes.push((c * in_c * 9, in_c * 9));
                    in_c = c;
                }
                sizes.push((config.dim * in_c, in_c));
                sizes
            }
            EmbedderKind::Linear => {
                let n = config.input * config.input * 3;
                vec![(config.dim * n, n)]
            }
        }
    }

    fn generate(config: &EmbedderConfig) -> Vec<Vec<f64>> {
        Self::layer_sizes(config)
            .into_iter()
            .enumerate()
            .map(|(stream, (count, fan_in))| {
                let mut w = draw_weights(config.seed, stream as u64, count, fan_in);
                if config.kind == EmbedderKind::ToyCnn && stream < CONV_CHANNELS.len() {
                    zero_mean_kernels(&mut w);
                }
                w
            })
            .collect()
    }

    fn from_parts(config: EmbedderConfig, mut weights: Vec<Vec<f64>>) -> Result<Self> {
        let model = match config.kind {
            EmbedderKind::ToyCnn => {
                let dense = weights.pop().expect("dense layer");
                let mut convs = Vec::new();
                let (mut in_c, mut h) = (3, config.input);
                for (w, &c) in weights.into_iter().zip(&CONV_CHANNELS) {
                    let conv = Conv::new(in_c, c, h, h, w);
                    h = conv.out_h;
                    in_c = c;
                    convs.push(conv);
                }
                Model::ToyCnn(ToyCnn { convs, dense })
            }
            EmbedderKind::Linear => Model::Linear(Dense {
                w: weights.pop().expect("dense layer"),
                n: config.input * config.input * 3,
            }),
        };
        Ok(Self { config, model })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn label(&self) -> String {
        self.config.label()
    }

    fn check_input(&self, img: &ImageBuffer) -> Result<()> {
        let s = self.config.input;
        if img.shape() != (s, s, 3) {
            return Err(Error::Shape(format!(
                "embedder expects {s}x{s}x3, got {:?}",
                img.shape()
            )));
        }
        Ok(())
    }

    pub fn embed(&self, img: &ImageBuffer) -> Result<Embedding> {
        self.forward(img).map(|(e, _)| e)
    }

    /// Forward pass that also records what the VJP needs.
    pub fn forward(&self, img: &ImageBuffer) -> Result<(Embedding, Tape)> {
        self.check_input(img)?;
        let dim = self.config.dim;
        match &self.model {
            Model::Linear(dense) => {
                let x = img.data();
                let e = (0..dim)
                    .map(|d| {
                        dense.w[d * dense.n..(d + 1) * dense.n]
                            .iter()
                            .zip(x)
                            .map(|(w, v)| w * v)
                            .sum()
                    })
                    .collect();
                Ok((Embedding(e), Tape { activations: Vec::new() }))
            }
            Model::ToyCnn(net) => {
                let s = self.config.input;
                // HWC [0,1] → CHW [-1,1]
                let mut x = vec![0.0; 3 * s * s];
                for (p, px) in img.data().chunks_exact(3).enumerate() {
                    for k in 0..3 {
                        x[k * s * s + p] = 2.0 * px[k] - 1.0;
                    }
                }
                let mut activations = Vec::with_capacity(net.convs.len());
                for conv in &net.convs {
                    let mut y = conv.forward(&x);
                    for v in &mut y {
                        *v = v.max(0.0);
                    }
                    activations.push(y.clone());
                    x = y;
                }
                let last = net.convs.last().expect("conv layers");
                let area = (last.out_h * last.out_w) as f64;
                let pooled: Vec<f64> = x
                    .chunks_exact(last.out_h * last.out_w)
                    .map(|c| c.iter().sum::<f64>() / area)
                    .collect();
                let c = pooled.len();
                let e = (0..dim)
                    .map(|d| {
                        net.dense[d * c..(d + 1) * c]
                            .iter()
                            .zip(&pooled)
                            .map(|(w, v)| w * v)
                            .sum()
                    })
                    .collect();
                Ok((Embedding(e), Tape { activations }))
            }
        }
    }

    /// VJP: embedding-shaped cotangent → input-image cotangent.
    pub fn backward(&self, tape: &Tape, cotangent: &Embedding) -> Result<ImageBuffer> {
        let dim = self.config.dim;
        if cotangent.dim() != dim {
            return Err(Error::Shape(format!(
                "embedding cotangent dim {} vs {dim}",
                cotangent.dim()
            )));
        }
        let s = self.config.input;
        match &self.model {
            Model::Linear(dense) => {
                let mut g = vec![0.0; dense.n];
                for (d, &c) in cotangent.0.iter().enumerate() {
                    for (gi, w) in g.iter_mut().zip(&dense.w[d * dense.n..(d + 1) * dense.n]) {
                        *gi += c * w;
                    }
                }
                ImageBuffer::from_vec(s, s, 3, g)
            }
            Model::ToyCnn(net) => {
                if tape.activations.len() != net.convs.len() {
                    return Err(Error::Shape("tape does not belong to this model".into()));
                }
                let last = net.convs.last().expect("conv layers");
                let area = last.out_h * last.out_w;
                let c = last.out_c;
                let mut d_pooled = vec![0.0; c];
                for (d, &ct) in cotangent.0.iter().enumerate() {
                    for (g, w) in d_pooled.iter_mut().zip(&net.dense[d * c..(d + 1) * c]) {
                        *g += ct * w;
                    }
                }
                let mut grad: Vec<f64> = d_pooled
                    .iter()
                    .flat_map(|&g| std::iter::repeat(g / area as f64).take(area))
                    .collect();
                for (conv, act) in net.convs.iter().zip(&tape.activations).rev() {
                    for (g, &a) in grad.iter_mut().zip(act) {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    grad = conv.backward(&grad);
                }
                // CHW [-1,1] → HWC [0,1]
                let mut out = vec![0.0; 3 * s * s];
                for p in 0..s * s {
                    for k in 0..3 {
                        out[p * 3 + k] = 2.0 * grad[k * s * s + p];
                    }
                }
                ImageBuffer::from_vec(s, s, 3, out)
            }
        }
    }

    /// One-shot VJP of [`Embedder::embed`] at `img`.
    pub fn embed_vjp(&self, img: &ImageBuffer, cotangent: &Embedding) -> Result<ImageBuffer> {
        let (_, tape) = self.forward(img)?;
        self.backward(&tape, cotangent)
    }

    /// All weights in generation order.
    pub fn weights(&self) -> Vec<f64> {
        match &self.model {
            Model::Linear(d) => d.w.clone(),
            Model::ToyCnn(net) => net
                .convs
                .iter()
                .flat_map(|c| c.w.iter().copied())
                .chain(net.dense.iter().copied())
                .collect(),
        }
    }

    /// Flat dump: 16-byte header (magic `AEMB`, kind, seed, dim as
    /// little-endian u32) followed by every weight as little-endian f64.
    pub fn to_weight_bytes(&self) -> Vec<u8> {
        let weights = self.weights();
        let mut out = Vec::with_capacity(16 + 8 * weights.len());
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&self.config.kind.code().to_le_bytes());
        out.extend_from_slice(&self.config.seed.to_le_bytes());
        out.extend_from_slice(&(self.config.dim as u32).to_le_bytes());
        for w in weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Inverse of [`Embedder::to_weight_bytes`]; the input side is not part of
    /// the header and must be supplied.
    pub fn from_weight_bytes(bytes: &[u8], input: usize) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != WEIGHT_MAGIC {
            return Err(Error::WeightFormat("missing AEMB header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let config = EmbedderConfig {
            kind: EmbedderKind::from_code(word(4))?,
            seed: word(8),
            input,
            dim: word(12) as usize,
        };
        let sizes = Self::layer_sizes(&config);
        let total: usize = sizes.iter().map(|s| s.0).sum();
        let payload = &bytes[16..];
        if payload.len() != 8 * total {
            return Err(Error::WeightFormat(format!(
                "expected {} weight bytes, found {}",
                8 * total,
                payload.len()
            )));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let weights = sizes
            .iter()
            .map(|&(count, _)| values.by_ref().take(count).collect())
            .collect();
        Self::from_parts(config, weights)
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_weight_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_weights(path: impl AsRef<Path>, input: usize) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_weight_bytes(&bytes, input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(s: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(s, s, 3, |_, _, _| rng.gen())
    }

    #[test]
    fn cosine_examples() {
        let u = Embedding(vec![0.3, -1.2, 2.0]);
        assert!((cosine_sim(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&u, &u.scaled(-1.0)).unwrap(), -1.0);
        let e1 = Embedding(vec![1.0, 0.0]);
        let e2 = Embedding(vec![0.0, 1.0]);
        assert_eq!(cosine_sim(&e1, &e2).unwrap(), 0.0);
        assert!(matches!(
            cosine_sim(&e1, &Embedding(vec![0.0, 0.0])),
            Err(Error::ZeroNorm(_))
        ));
    }

    #[test]
    fn cosine_grad_matches_finite_differences() {
        let u = Embedding(vec![0.3, -1.2, 2.0, 0.5]);
        let v = Embedding(vec![-0.7, 0.1, 1.1, 0.9]);
        let g = cosine_sim_grad(&u, &v).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut p = u.clone();
            p.0[i] += h;
            let mut m = u.clone();
            m.0[i] -= h;
            let fd = (cosine_sim(&p, &v).unwrap() - cosine_sim(&m, &v).unwrap()) / (2.0 * h);
            assert!((fd - g.0[i]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(
            u in proptest::collection::vec(-3.0f64..3.0, 8),
            v in proptest::collection::vec(-3.0f64..3.0, 8),
            a in 0.01f64..100.0, b in 0.01f64..100.0,
        ) {
            let (u, v) = (Embedding(u), Embedding(v));
            prop_assume!(u.norm() > 1e-3 && v.norm() > 1e-3);
            let c = cosine_sim(&u, &v).unwrap();
            prop_assert!((cosine_sim(&u.scaled(a), &v.scaled(b)).unwrap() - c).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("toy_cnn".parse::<EmbedderKind>().unwrap(), EmbedderKind::ToyCnn);
        assert_eq!("linear".parse::<EmbedderKind>().unwrap(), EmbedderKind::Linear);
        assert!(matches!("resnet".parse::<EmbedderKind>(), Err(Error::UnknownKind(_))));
    }

    #[test]
    fn same_seed_same_weights() {
        for kind in [EmbedderKind::ToyCnn, EmbedderKind::Linear] {
            let a = Embedder::new(EmbedderConfig::new(kind, 3)).unwrap();
            let b = Embedder::new(EmbedderConfig::new(kind, 3)).unwrap();
            assert_eq!(a.weights(), b.weights());
        }
    }

    #[test]
    fn seed_sensitivity() {
        let img = random_image(112, 1);
        let a = Embedder::new(EmbedderConfig::new(EmbedderKind::ToyCnn, 1)).unwrap();
        let b = Embedder::new(EmbedderConfig::new(EmbedderKind::ToyCnn, 2)).unwrap();
        assert_ne!(a.weights(), b.weights());
        assert_ne!(a.embed(&img).unwrap(), b.embed(&img).unwrap());
    }

    #[test]
    fn toy_cnn_shapes() {
        let e = Embedder::new(EmbedderConfig::new(EmbedderKind::ToyCnn, 1)).unwrap();
        let out = e.embed(&random_image(112, 2)).unwrap();
        assert_eq!(out.dim(), 64);
        assert!(out.norm() > 0.0);
        assert_eq!(e.weights().len(), 8 * 27 + 16 * 72 + 32 * 144 + 64 * 288 + 64 * 64);
        assert!(e.embed(&random_image(28, 2)).is_err());
    }

    #[test]
    fn conv_kernels_are_zero_mean() {
        let e = Embedder::new(EmbedderConfig::new(EmbedderKind::ToyCnn, 5)).unwrap();
        let conv_len = 8 * 27 + 16 * 72 + 32 * 144 + 64 * 288;
        for k in e.weights()[..conv_len].chunks_exact(9) {
            assert!(k.iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn linear_matches_direct_matmul() {
        let cfg = EmbedderConfig {
            input: 8,
            dim: 5,
            ..EmbedderConfig::new(EmbedderKind::Linear, 4)
        };
        let e = Embedder::new(cfg).unwrap();
        let img = random_image(8, 3);
        let w = e.weights();
        let n = 8 * 8 * 3;
        for d in 0..5 {
            let mut acc = 0.0;
            for j in 0..n {
                acc += w[d * n + j] * img.data()[j];
            }
            assert!((acc - e.embed(&img).unwrap().0[d]).abs() < 1e-12);
        }
        let zero = e.embed(&ImageBuffer::zeros(8, 8, 3)).unwrap();
        assert!(zero.0.iter().all(|&v| v == 0.0));
        let mut scaled = img.clone();
        scaled.data_mut().iter_mut().for_each(|v| *v *= 0.37);
        let (a, b) = (e.embed(&scaled).unwrap(), e.embed(&img).unwrap().scaled(0.37));
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn check_vjp(e: &Embedder, img: &ImageBuffer, probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ct = Embedding((0..e.config().dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (_, tape) = e.forward(img).unwrap();
        let g = e.backward(&tape, &ct).unwrap();
        let pattern = tape.relu_pattern();
        let h = 1e-6;
        let mut worst = 0.0f64;
        let mut done = 0;
        while done < probes {
            let i = rng.gen_range(0..img.data().len());
            let mut p = img.clone();
            p.data_mut()[i] += h;
            let mut m = img.clone();
            m.data_mut()[i] -= h;
            let (ep, tp) = e.forward(&p).unwrap();
            let (em, tm) = e.forward(&m).unwrap();
            if tp.relu_pattern() != pattern || tm.relu_pattern() != pattern {
                continue;
            }
            let fd: f64 = ep.0.iter().zip(&em.0).zip(&ct.0).map(|((a, b), c)| (a - b) * c).sum::<f64>() / (2.0 * h);
            let an = g.data()[i];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
            done += 1;
        }
        worst
    }

    #[test]
    fn toy_cnn_vjp_matches_finite_differences() {
        let e = Embedder::new(EmbedderConfig::new(EmbedderKind::ToyCnn, 7)).unwrap();
        let err = check_vjp(&e, &random_image(112, 8), 20, 9);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_vjp_matches_finite_differences() {
        let e = Embedder::new(EmbedderConfig::new(EmbedderKind::Linear, 7)).unwrap();
        let err = check_vjp(&e, &random_image(112, 8), 20, 10);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn weight_dump_round_trip() {
        for kind in [EmbedderKind::ToyCnn, EmbedderKind::Linear] {
            let cfg = EmbedderConfig { input: 16, dim: 8, ..EmbedderConfig::new(kind, 77) };
            let e = Embedder::new(cfg).unwrap();
            let bytes = e.to_weight_bytes();
            assert_eq!(&bytes[..4], b"AEMB");
            assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 77);
            let back = Embedder::from_weight_bytes(&bytes, 16).unwrap();
            assert_eq!(back.config(), e.config());
            assert_eq!(back.weights(), e.weights());
            assert!(Embedder::from_weight_bytes(&bytes[..bytes.len() - 8], 16).is_err());
            assert!(Embedder::from_weight_bytes(b"NOPE", 16).is_err());
        }
    }
}
