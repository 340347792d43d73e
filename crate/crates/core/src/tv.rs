//! Isotropic total variation of an image and its subgradient.

use crate::image::ImageBuffer;

/// Radicand regularizer used by [`tv_loss_grad`].
pub const TV_EPS_SQ: f64 = 1e-16;

/// `Σ_{i,j,k} √((x[i,j]−x[i+1,j])² + (x[i,j]−x[i,j+1])²)` per channel,
/// with differences that leave the image counted as 0.
pub fn tv_loss(img: &ImageBuffer) -> f64 {
    let (h, w, ch) = img.shape();
    let d = img.data();
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let base = (r * w + c) * ch;
            for k in 0..ch {
                let v = d[base + k];
                let dv = if r + 1 < h { v - d[base + w * ch + k] } else { 0.0 };
                let dh = if c + 1 < w { v - d[base + ch + k] } else { 0.0 };
                total += (dv * dv + dh * dh).sqrt();
            }
        }
    }
    total
}

/// Subgradient of [`tv_loss`], each radicand regularized by [`TV_EPS_SQ`].
pub fn tv_loss_grad(img: &ImageBuffer) -> ImageBuffer {
    let (h, w, ch) = img.shape();
    let d = img.data();
    let mut grad = ImageBuffer::zeros(h, w, ch);
    let g = grad.data_mut();
    for r in 0..h {
        for c in 0..w {
            let base = (r * w + c) * ch;
            for k in 0..ch {
                let i = base + k;
                let v = d[i];
                let down = (r + 1 < h).then(|| i + w * ch);
                let right = (c + 1 < w).then(|| i + ch);
                let dv = down.map_or(0.0, |j| v - d[j]);
                let dh = right.map_or(0.0, |j| v - d[j]);
                if dv == 0.0 && dh == 0.0 {
                    continue;
                }
                let inv = 1.0 / (dv * dv + dh * dh + TV_EPS_SQ).sqrt();
                g[i] += (dv + dh) * inv;
                if let Some(j) = down {
                    g[j] -= dv * inv;
                }
                if let Some(j) = right {
                    g[j] -= dh * inv;
                }
            }
        }
    }
    grad
}
