//! Dense image container and the pixel-wise operations of the warp pipeline.
//!
//! Coordinates follow one convention everywhere in the crate: pixel centers
//! sit at integer coordinates, `(0, 0)` is the center of the top-left pixel,
//! `x` grows rightward (columns) and `y` grows downward (rows).

use crate::error::{Error, Result};

/// Row-major `height × width × channels` image of double-precision intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(row, col, channel)` for every element.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(r, c, k));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    /// The channel values of one pixel.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_shape(&self, other: &ImageBuffer, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Elementwise projection onto the unit interval.
pub fn clip01(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    clip01_in_place(&mut out);
    out
}

pub fn clip01_in_place(img: &mut ImageBuffer) {
    for v in img.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

fn check_mask(base: &ImageBuffer, mask: &[bool]) -> Result<()> {
    if mask.len() != base.pixel_count() {
        return Err(Error::Shape(format!(
            "mask has {} entries for {} pixels",
            mask.len(),
            base.pixel_count()
        )));
    }
    Ok(())
}

/// `overlay` where `mask` is set, `base` elsewhere. The mask is per pixel and
/// selects all channels together.
pub fn composite(base: &ImageBuffer, overlay: &ImageBuffer, mask: &[bool]) -> Result<ImageBuffer> {
    base.check_shape(overlay, "composite")?;
    check_mask(base, mask)?;
    let ch = base.channels();
    let mut out = base.clone();
    for (p, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        out.data[p * ch..(p + 1) * ch].copy_from_slice(&overlay.data[p * ch..(p + 1) * ch]);
    }
    Ok(out)
}

/// Splits an output cotangent of [`composite`] into `(d_base, d_overlay)`.
pub fn composite_vjp(cotangent: &ImageBuffer, mask: &[bool]) -> Result<(ImageBuffer, ImageBuffer)> {
    check_mask(cotangent, mask)?;
    let (h, w, ch) = cotangent.shape();
    let mut d_base = cotangent.clone();
    let mut d_overlay = ImageBuffer::zeros(h, w, ch);
    for (p, &inside) in mask.iter().enumerate() {
        if inside {
            let span = p * ch..(p + 1) * ch;
            d_overlay.data[span.clone()].copy_from_slice(&cotangent.data[span.clone()]);
            d_base.data[span].fill(0.0);
        }
    }
    Ok((d_base, d_overlay))
}
