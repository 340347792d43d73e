//! Sticker → face → template rendering and its gradient onto sticker texels.
//!
//! The sticker is composited into the full-resolution face first and only
//! then resampled to the template, so template pixels near the sticker
//! border mix sticker and face values the way a real alignment step would.
//! [`RenderPlan`] evaluates this two-stage chain lazily: only face pixels the
//! template actually reads are composited. The result is bit-identical to
//! `bilinear_sample(composite(face, bilinear_sample(sticker, placement), mask), template)`.

use crate::error::{Error, Result};
use crate::geometry::{
    build_placement_grid, build_template_grid, BendPitchParams, PlacementMap, StickerSpec,
};
use crate::image::{composite, ImageBuffer};
use crate::sampler::{bilinear_sample, Tap};

/// Side of the square recognition template.
pub const TEMPLATE_SIZE: usize = 112;
/// Side of the square face image the sticker is composited into.
pub const FACE_SIZE: usize = 600;

#[derive(Debug, Clone, Copy)]
enum Source {
    Face(usize),
    Sticker(Tap),
}

/// Precomputed sampling chain for one parameter draw.
#[derive(Debug, Clone)]
pub struct RenderPlan {
    spec: StickerSpec,
    face_shape: (usize, usize),
    tmpl: usize,
    /// template tap per output pixel, over face pixels
    taps: Vec<Tap>,
    /// what each face-tap neighbour reads, 4 per output pixel
    sources: Vec<Source>,
}

impl RenderPlan {
    pub fn new(
        spec: StickerSpec,
        p: &BendPitchParams,
        face_h: usize,
        face_w: usize,
        tmpl: usize,
    ) -> Result<Self> {
        let placement = PlacementMap::new(spec, p)?;
        let grid = build_template_grid(p, face_h, face_w, tmpl)?;
        let mut taps = Vec::with_capacity(grid.len());
        let mut sources = Vec::with_capacity(4 * grid.len());
        for i in 0..grid.len() {
            let tap = Tap::new(face_h, face_w, grid.src_x[i], grid.src_y[i]);
            for &fi in &tap.idx {
                let (r, c) = (fi / face_w, fi % face_w);
                sources.push(match placement.texel(c as f64, r as f64) {
                    Some((sx, sy)) => {
                        Source::Sticker(Tap::new(spec.tex_height, spec.tex_width, sx, sy))
                    }
                    None => Source::Face(fi),
                });
            }
            taps.push(tap);
        }
        Ok(Self {
            spec,
            face_shape: (face_h, face_w),
            tmpl,
            taps,
            sources,
        })
    }

    fn check_inputs(&self, sticker: &ImageBuffer, face: &ImageBuffer) -> Result<()> {
        if sticker.shape() != (self.spec.tex_height, self.spec.tex_width, 3) {
            return Err(Error::Shape(format!(
                "sticker {:?}, plan expects {}x{}x3",
                sticker.shape(),
                self.spec.tex_height,
                self.spec.tex_width
            )));
        }
        if face.shape() != (self.face_shape.0, self.face_shape.1, 3) {
            return Err(Error::Shape(format!(
                "face {:?}, plan expects {}x{}x3",
                face.shape(),
                self.face_shape.0,
                self.face_shape.1
            )));
        }
        Ok(())
    }

    pub fn template_size(&self) -> usize {
        self.tmpl
    }

    /// Number of composited face pixels the template reads from the sticker.
    pub fn sticker_tap_count(&self) -> usize {
        self.sources
            .iter()
            .filter(|s| matches!(s, Source::Sticker(_)))
            .count()
    }

    pub fn forward(&self, sticker: &ImageBuffer, face: &ImageBuffer) -> Result<ImageBuffer> {
        self.check_inputs(sticker, face)?;
        let mut out = ImageBuffer::zeros(self.tmpl, self.tmpl, 3);
        let (sd, fd) = (sticker.data(), face.data());
        let od = out.data_mut();
        for (t, tap) in self.taps.iter().enumerate() {
            let src = &self.sources[4 * t..4 * t + 4];
            for k in 0..3 {
                let v: [f64; 4] = std::array::from_fn(|j| match src[j] {
                    Source::Face(fi) => fd[fi * 3 + k],
                    Source::Sticker(st) => st.sample(sd, 3, k),
                });
                let top = v[0] + tap.fx * (v[1] - v[0]);
                let bot = v[2] + tap.fx * (v[3] - v[2]);
                od[t * 3 + k] = top + tap.fy * (bot - top);
            }
        }
        Ok(out)
    }

    /// Pulls a template-shaped cotangent back onto sticker texels,
    /// accumulating into `grad`.
    pub fn backward_into(&self, cotangent: &ImageBuffer, grad: &mut ImageBuffer) -> Result<()> {
        if cotangent.shape() != (self.tmpl, self.tmpl, 3) {
            return Err(Error::Shape(format!(
                "template cotangent {:?}, expected {}x{}x3",
                cotangent.shape(),
                self.tmpl,
                self.tmpl
            )));
        }
        if grad.shape() != (self.spec.tex_height, self.spec.tex_width, 3) {
            return Err(Error::Shape("sticker gradient buffer".into()));
        }
        let ct = cotangent.data();
        let gd = grad.data_mut();
        for (t, tap) in self.taps.iter().enumerate() {
            let w = tap.weights();
            for (j, src) in self.sources[4 * t..4 * t + 4].iter().enumerate() {
                if let Source::Sticker(st) = src {
                    for k in 0..3 {
                        st.scatter(gd, 3, k, ct[t * 3 + k] * w[j]);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn backward(&self, cotangent: &ImageBuffer) -> Result<ImageBuffer> {
        let mut grad = ImageBuffer::zeros(self.spec.tex_height, self.spec.tex_width, 3);
        self.backward_into(cotangent, &mut grad)?;
        Ok(grad)
    }
}

fn sticker_spec_of(sticker: &ImageBuffer) -> Result<StickerSpec> {
    if sticker.channels() != 3 {
        return Err(Error::Shape("sticker must have 3 channels".into()));
    }
    StickerSpec::new(sticker.height(), sticker.width())
}

/// Renders the sticker onto the face and warps to a `tmpl × tmpl` template.
pub fn render_with(
    sticker: &ImageBuffer,
    face: &ImageBuffer,
    p: &BendPitchParams,
    tmpl: usize,
) -> Result<ImageBuffer> {
    let plan = RenderPlan::new(sticker_spec_of(sticker)?, p, face.height(), face.width(), tmpl)?;
    plan.forward(sticker, face)
}

/// [`render_with`] at the canonical 112×112 template.
pub fn render(sticker: &ImageBuffer, face: &ImageBuffer, p: &BendPitchParams) -> Result<ImageBuffer> {
    render_with(sticker, face, p, TEMPLATE_SIZE)
}

/// VJP of [`render_with`]: template cotangent → sticker cotangent.
pub fn render_vjp(
    sticker: &ImageBuffer,
    face: &ImageBuffer,
    p: &BendPitchParams,
    cotangent: &ImageBuffer,
) -> Result<ImageBuffer> {
    let plan = RenderPlan::new(
        sticker_spec_of(sticker)?,
        p,
        face.height(),
        face.width(),
        cotangent.height(),
    )?;
    plan.check_inputs(sticker, face)?;
    plan.backward(cotangent)
}

/// The full-resolution face with the bent sticker composited in, plus the
/// sticker footprint mask.
pub fn composite_face(
    sticker: &ImageBuffer,
    face: &ImageBuffer,
    p: &BendPitchParams,
) -> Result<(ImageBuffer, Vec<bool>)> {
    if face.channels() != 3 {
        return Err(Error::Shape("face must have 3 channels".into()));
    }
    let grid = build_placement_grid(sticker_spec_of(sticker)?, p, face.height(), face.width())?;
    let warped = bilinear_sample(sticker, &grid)?;
    let out = composite(face, &warped, &grid.mask)?;
    Ok((out, grid.mask))
}

/// The face warped to the template with no sticker.
pub fn face_template(face: &ImageBuffer, p: &BendPitchParams, tmpl: usize) -> Result<ImageBuffer> {
    let grid = build_template_grid(p, face.height(), face.width(), tmpl)?;
    bilinear_sample(face, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(h, w, 3, |_, _, _| rng.gen())
    }

    fn small_params() -> BendPitchParams {
        BendPitchParams {
            place_scale: 20.0,
            place_tx: 30.0,
            place_ty: 25.0,
            tmpl_theta: 0.05,
            ..BendPitchParams::nominal(60, 60, 28)
        }
    }

    #[test]
    fn fused_matches_two_stage_composition() {
        let sticker = random_image(20, 45, 1);
        let face = random_image(60, 60, 2);
        let p = small_params();
        let fused = render_with(&sticker, &face, &p, 28).unwrap();
        let (composited, _) = composite_face(&sticker, &face, &p).unwrap();
        let literal = face_template(&composited, &p, 28).unwrap();
        assert_eq!(fused, literal);
    }

    #[test]
    fn fused_matches_at_canonical_size() {
        let sticker = random_image(400, 900, 3);
        let face = random_image(600, 600, 4);
        let p = BendPitchParams::nominal(600, 600, 112);
        let fused = render(&sticker, &face, &p).unwrap();
        let (composited, mask) = composite_face(&sticker, &face, &p).unwrap();
        assert!(mask.iter().any(|&m| m));
        assert_eq!(fused, face_template(&composited, &p, 112).unwrap());
    }

    #[test]
    fn invisible_sticker_on_constant_face() {
        let sticker = ImageBuffer::filled(400, 900, 3, 0.3);
        let face = ImageBuffer::filled(600, 600, 3, 0.3);
        let p = BendPitchParams::nominal(600, 600, 112);
        let out = render(&sticker, &face, &p).unwrap();
        assert_eq!(out, face_template(&face, &p, 112).unwrap());
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let sticker = random_image(20, 45, 5);
        let face = random_image(60, 60, 6);
        let p = small_params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ct = ImageBuffer::from_fn(28, 28, 3, |_, _, _| rng.gen_range(-1.0..1.0));
        // difference elementwise before contracting, to avoid cancellation
        let dloss = |sp: &ImageBuffer, sm: &ImageBuffer| -> f64 {
            let op = render_with(sp, &face, &p, 28).unwrap();
            let om = render_with(sm, &face, &p, 28).unwrap();
            op.data()
                .iter()
                .zip(om.data())
                .zip(ct.data())
                .map(|((a, b), c)| (a - b) * c)
                .sum()
        };
        let g = render_vjp(&sticker, &face, &p, &ct).unwrap();
        let h = 1e-6;
        let mut max_err = 0.0f64;
        let mut nonzero = 0;
        for i in 0..sticker.data().len() {
            let mut sp = sticker.clone();
            sp.data_mut()[i] += h;
            let mut sm = sticker.clone();
            sm.data_mut()[i] -= h;
            let fd = dloss(&sp, &sm) / (2.0 * h);
            let an = g.data()[i];
            if an != 0.0 {
                nonzero += 1;
            }
            max_err = max_err.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
        }
        assert!(nonzero > 100, "{nonzero}");
        assert!(max_err < 1e-4, "{max_err}");
    }

    #[test]
    fn shape_errors() {
        let p = BendPitchParams::nominal(600, 600, 112);
        let face = ImageBuffer::zeros(600, 600, 3);
        assert!(render(&ImageBuffer::zeros(900, 400, 3), &face, &p).is_err());
        assert!(render(&ImageBuffer::zeros(400, 900, 1), &face, &p).is_err());
        let plan = RenderPlan::new(StickerSpec::default(), &p, 600, 600, 112).unwrap();
        assert!(plan.forward(&ImageBuffer::zeros(400, 900, 3), &ImageBuffer::zeros(60, 60, 3)).is_err());
        assert!(plan.backward(&ImageBuffer::zeros(28, 28, 3)).is_err());
    }
}
