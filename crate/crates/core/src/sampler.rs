//! Bilinear grid sampling and its vector-Jacobian product.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Per-output-pixel source coordinates of an inverse warp.
///
/// Coordinates are in source-image pixel units with pixel centers at
/// integers. Pixels whose mask is `false` produce zero and carry no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    pub out_height: usize,
    pub out_width: usize,
    pub src_x: Vec<f64>,
    pub src_y: Vec<f64>,
    pub mask: Vec<bool>,
}

impl SamplingGrid {
    /// Grid with every pixel sampling itself.
    pub fn identity(height: usize, width: usize) -> Self {
        let n = height * width;
        let mut src_x = Vec::with_capacity(n);
        let mut src_y = Vec::with_capacity(n);
        for r in 0..height {
            for c in 0..width {
                src_x.push(c as f64);
                src_y.push(r as f64);
            }
        }
        Self {
            out_height: height,
            out_width: width,
            src_x,
            src_y,
            mask: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.src_x.len() != n || self.src_y.len() != n || self.mask.len() != n {
            return Err(Error::Shape(format!(
                "grid {}x{} has coordinate/mask lengths {}/{}/{}",
                self.out_height,
                self.out_width,
                self.src_x.len(),
                self.src_y.len(),
                self.mask.len()
            )));
        }
        let bad = (0..n).any(|i| self.mask[i] && !(self.src_x[i].is_finite() && self.src_y[i].is_finite()));
        if bad {
            return Err(Error::NonFinite("sampling grid"));
        }
        Ok(())
    }
}

/// The four neighbours of a clamped sample position and its fractional offsets.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    /// pixel indices: top-left, top-right, bottom-left, bottom-right
    pub idx: [usize; 4],
    pub fx: f64,
    pub fy: f64,
    /// whether the coordinate was inside the clamp range (else its derivative is 0)
    pub free_x: bool,
    pub free_y: bool,
}

impl Tap {
    #[inline]
    pub fn new(height: usize, width: usize, x: f64, y: f64) -> Self {
        let max_x = (width - 1) as f64;
        let max_y = (height - 1) as f64;
        let cx = x.clamp(0.0, max_x);
        let cy = y.clamp(0.0, max_y);
        let x0 = cx.floor() as usize;
        let y0 = cy.floor() as usize;
        let x1 = (x0 + 1).min(width - 1);
        let y1 = (y0 + 1).min(height - 1);
        Tap {
            idx: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
            fx: cx - x0 as f64,
            fy: cy - y0 as f64,
            free_x: x > 0.0 && x < max_x,
            free_y: y > 0.0 && y < max_y,
        }
    }

    /// Interpolated value of one channel. The nested-lerp form returns
    /// constants exactly.
    #[inline]
    pub fn sample(&self, data: &[f64], channels: usize, k: usize) -> f64 {
        let v00 = data[self.idx[0] * channels + k];
        let v01 = data[self.idx[1] * channels + k];
        let v10 = data[self.idx[2] * channels + k];
        let v11 = data[self.idx[3] * channels + k];
        let top = v00 + self.fx * (v01 - v00);
        let bot = v10 + self.fx * (v11 - v10);
        top + self.fy * (bot - top)
    }

    #[inline]
    pub fn weights(&self) -> [f64; 4] {
        let (fx, fy) = (self.fx, self.fy);
        [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy]
    }

    /// Adds `ct * weight` onto the four neighbours of channel `k`.
    #[inline]
    pub fn scatter(&self, grad: &mut [f64], channels: usize, k: usize, ct: f64) {
        let w = self.weights();
        for (i, wi) in self.idx.iter().zip(w) {
            grad[i * channels + k] += ct * wi;
        }
    }

    /// Derivatives of the channel-`k` sample with respect to the source
    /// coordinates `(x, y)`.
    #[inline]
    pub fn coord_grad(&self, data: &[f64], channels: usize, k: usize) -> (f64, f64) {
        let v00 = data[self.idx[0] * channels + k];
        let v01 = data[self.idx[1] * channels + k];
        let v10 = data[self.idx[2] * channels + k];
        let v11 = data[self.idx[3] * channels + k];
        let dx = if self.free_x {
            (1.0 - self.fy) * (v01 - v00) + self.fy * (v11 - v10)
        } else {
            0.0
        };
        let dy = if self.free_y {
            let top = v00 + self.fx * (v01 - v00);
            let bot = v10 + self.fx * (v11 - v10);
            bot - top
        } else {
            0.0
        };
        (dx, dy)
    }
}

/// Samples `src` at every valid grid point with bilinear interpolation and
/// replicate-edge clamping. Invalid grid pixels are zero.
pub fn bilinear_sample(src: &ImageBuffer, grid: &SamplingGrid) -> Result<ImageBuffer> {
    grid.validate()?;
    let (h, w, ch) = src.shape();
    let mut out = ImageBuffer::zeros(grid.out_height, grid.out_width, ch);
    let data = src.data();
    let out_data = out.data_mut();
    for p in 0..grid.len() {
        if !grid.mask[p] {
            continue;
        }
        let tap = Tap::new(h, w, grid.src_x[p], grid.src_y[p]);
        for k in 0..ch {
            out_data[p * ch + k] = tap.sample(data, ch, k);
        }
    }
    Ok(out)
}

/// Cotangents of [`bilinear_sample`]'s inputs.
#[derive(Debug, Clone)]
pub struct SampleGrads {
    pub src: ImageBuffer,
    pub src_x: Vec<f64>,
    pub src_y: Vec<f64>,
}

/// Vector-Jacobian product of [`bilinear_sample`] for an output-shaped
/// cotangent.
pub fn bilinear_sample_vjp(
    src: &ImageBuffer,
    grid: &SamplingGrid,
    cotangent: &ImageBuffer,
) -> Result<SampleGrads> {
    grid.validate()?;
    let (h, w, ch) = src.shape();
    if cotangent.shape() != (grid.out_height, grid.out_width, ch) {
        return Err(Error::Shape(format!(
            "cotangent {:?} for a {}x{}x{ch} output",
            cotangent.shape(),
            grid.out_height,
            grid.out_width
        )));
    }
    let mut d_src = ImageBuffer::zeros(h, w, ch);
    let mut d_x = vec![0.0; grid.len()];
    let mut d_y = vec![0.0; grid.len()];
    let data = src.data();
    let ct = cotangent.data();
    let gsrc = d_src.data_mut();
    for p in 0..grid.len() {
        if !grid.mask[p] {
            continue;
        }
        let tap = Tap::new(h, w, grid.src_x[p], grid.src_y[p]);
        for k in 0..ch {
            let c = ct[p * ch + k];
            tap.scatter(gsrc, ch, k, c);
            let (gx, gy) = tap.coord_grad(data, ch, k);
            d_x[p] += c * gx;
            d_y[p] += c * gy;
        }
    }
    Ok(SampleGrads {
        src: d_src,
        src_x: d_x,
        src_y: d_y,
    })
}
