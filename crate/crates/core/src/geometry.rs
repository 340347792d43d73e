//! Sticker geometry: the length-preserving parabolic bend, the pitch
//! rotation, placement on the face image and the face→template affine.
//!
//! The sticker lives in normalized units: its half-width is 1 and its
//! half-height is `tex_height / tex_width`. Bending maps a flat point
//! `(x, y, 0)` onto the parabolic cylinder `z = a·x'²`, choosing `x'` so that
//! the arc length from the center to `x'` equals `x`. Pitch rotates the bent
//! sticker about its horizontal midline, and the result is projected
//! orthographically onto the face plane.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::SamplingGrid;

/// Signed arc length of `z = a·x²` from `0` to `t`.
///
/// `sign(t)·(|t|/2·√(1+4a²t²) + asinh(2a|t|)/(4a))`, with the flat limit
/// `t` at `a = 0`.
pub fn arclen(a: f64, t: f64) -> f64 {
    if a == 0.0 {
        return t;
    }
    let at = t.abs();
    let two_a_t = 2.0 * a * at;
    let len = 0.5 * at * (1.0 + two_a_t * two_a_t).sqrt() + two_a_t.asinh() / (4.0 * a);
    len.copysign(t)
}

/// Derivative of [`arclen`] with respect to `t`.
#[inline]
pub fn arclen_slope(a: f64, t: f64) -> f64 {
    let two_a_t = 2.0 * a * t;
    (1.0 + two_a_t * two_a_t).sqrt()
}

/// Inverse of [`arclen`] in its second argument: the coordinate whose arc
/// length from the vertex is `s`.
///
/// Safeguarded Newton on the bracket `[0, |s|]`; `arclen` is odd and
/// strictly increasing with slope ≥ 1, so the root always lies inside.
pub fn arclen_inverse(a: f64, s: f64) -> f64 {
    if a == 0.0 || s == 0.0 {
        return s;
    }
    let target = s.abs();
    let (mut lo, mut hi) = (0.0f64, target);
    let mut x = target / arclen_slope(a, 0.5 * target);
    for _ in 0..200 {
        let f = arclen(a, x) - target;
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let mut next = x - f / arclen_slope(a, x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-16 * target.max(1.0) || hi - lo <= f64::EPSILON * target {
            x = next;
            break;
        }
        x = next;
    }
    x.copysign(s)
}

/// Dimensions of the sticker texture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StickerSpec {
    pub tex_height: usize,
    pub tex_width: usize,
}

impl Default for StickerSpec {
    fn default() -> Self {
        Self {
            tex_height: 400,
            tex_width: 900,
        }
    }
}

impl StickerSpec {
    pub const HALF_WIDTH: f64 = 1.0;

    pub fn new(tex_height: usize, tex_width: usize) -> Result<Self> {
        let spec = Self {
            tex_height,
            tex_width,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tex_width > self.tex_height && self.tex_height > 0) {
            return Err(Error::InvalidParams(format!(
                "sticker must be wider than tall, got {}x{}",
                self.tex_height, self.tex_width
            )));
        }
        Ok(())
    }

    /// Half of the physical sticker height in normalized units.
    pub fn half_height(&self) -> f64 {
        Self::HALF_WIDTH * self.tex_height as f64 / self.tex_width as f64
    }

    /// Texels per normalized unit (identical on both axes).
    pub fn texels_per_unit(&self) -> f64 {
        self.tex_width as f64 / (2.0 * Self::HALF_WIDTH)
    }

    /// Normalized `(x, y)` to texel `(col, row)`; the sticker edges
    /// `x = ±1` land on the outer pixel boundaries.
    #[inline]
    pub fn to_texel(&self, x: f64, y: f64) -> (f64, f64) {
        let k = self.texels_per_unit();
        (
            x * k + (self.tex_width as f64 - 1.0) / 2.0,
            y * k + (self.tex_height as f64 - 1.0) / 2.0,
        )
    }

    #[inline]
    pub fn from_texel(&self, col: f64, row: f64) -> (f64, f64) {
        let k = self.texels_per_unit();
        (
            (col - (self.tex_width as f64 - 1.0) / 2.0) / k,
            (row - (self.tex_height as f64 - 1.0) / 2.0) / k,
        )
    }
}

/// One draw of the bend, pitch, placement and template parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BendPitchParams {
    /// parabola rate, per normalized sticker unit
    pub a: f64,
    /// pitch angle in radians
    pub phi: f64,
    /// face pixels per normalized sticker unit
    pub place_scale: f64,
    pub place_theta: f64,
    /// sticker center in face pixels
    pub place_tx: f64,
    pub place_ty: f64,
    pub tmpl_scale: f64,
    pub tmpl_theta: f64,
    pub tmpl_tx: f64,
    pub tmpl_ty: f64,
}

impl BendPitchParams {
    /// Number of scalar parameters, in field order.
    pub const COUNT: usize = 10;

    pub const NAMES: [&'static str; Self::COUNT] = [
        "a",
        "phi",
        "place_scale",
        "place_theta",
        "place_tx",
        "place_ty",
        "tmpl_scale",
        "tmpl_theta",
        "tmpl_tx",
        "tmpl_ty",
    ];

    /// Default hat placement for a `face_h × face_w` image warped to a
    /// square template of side `tmpl`: sticker two thirds of the face wide,
    /// centered horizontally, just above the eye line.
    pub fn nominal(face_h: usize, face_w: usize, tmpl: usize) -> Self {
        Self {
            a: 0.4,
            phi: 20f64.to_radians(),
            place_scale: face_w as f64 / 3.0,
            place_theta: 0.0,
            place_tx: (face_w as f64 - 1.0) / 2.0,
            place_ty: 0.3 * face_h as f64,
            tmpl_scale: tmpl as f64 / face_w as f64,
            tmpl_theta: 0.0,
            tmpl_tx: 0.0,
            tmpl_ty: 0.0,
        }
    }

    pub fn to_array(&self) -> [f64; Self::COUNT] {
        [
            self.a,
            self.phi,
            self.place_scale,
            self.place_theta,
            self.place_tx,
            self.place_ty,
            self.tmpl_scale,
            self.tmpl_theta,
            self.tmpl_tx,
            self.tmpl_ty,
        ]
    }

    pub fn from_array(v: [f64; Self::COUNT]) -> Self {
        Self {
            a: v[0],
            phi: v[1],
            place_scale: v[2],
            place_theta: v[3],
            place_tx: v[4],
            place_ty: v[5],
            tmpl_scale: v[6],
            tmpl_theta: v[7],
            tmpl_tx: v[8],
            tmpl_ty: v[9],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transformation parameters"));
        }
        if self.a < 0.0 {
            return Err(Error::InvalidParams(format!("parabola rate {} < 0", self.a)));
        }
        if self.phi.abs() >= FRAC_PI_2 {
            return Err(Error::InvalidParams(format!("|pitch| {} >= pi/2", self.phi)));
        }
        if self.place_scale <= 0.0 || self.tmpl_scale <= 0.0 {
            return Err(Error::InvalidParams("scales must be positive".into()));
        }
        Ok(())
    }
}

/// The inverse sticker map: face pixel → sticker texel.
#[derive(Debug, Clone)]
pub struct PlacementMap {
    spec: StickerSpec,
    a: f64,
    cos_phi: f64,
    sin_phi: f64,
    cos_t: f64,
    sin_t: f64,
    inv_scale: f64,
    tx: f64,
    ty: f64,
    half_height: f64,
    u_max: f64,
    /// squared radius in face pixels outside which no pixel can be covered
    reject_r2: f64,
}

impl PlacementMap {
    pub fn new(spec: StickerSpec, p: &BendPitchParams) -> Result<Self> {
        p.validate()?;
        spec.validate()?;
        let half_height = spec.half_height();
        let u_max = arclen_inverse(p.a, StickerSpec::HALF_WIDTH);
        let v_max = half_height * p.phi.cos() + p.a * u_max * u_max * p.phi.sin().abs();
        let r = p.place_scale * (u_max * u_max + v_max * v_max).sqrt() + 2.0;
        Ok(Self {
            spec,
            a: p.a,
            cos_phi: p.phi.cos(),
            sin_phi: p.phi.sin(),
            cos_t: p.place_theta.cos(),
            sin_t: p.place_theta.sin(),
            inv_scale: 1.0 / p.place_scale,
            tx: p.place_tx,
            ty: p.place_ty,
            half_height,
            u_max,
            reject_r2: r * r,
        })
    }

    /// Normalized sticker coordinates `(x, y)` seen at face point
    /// `(px, py)`, whether or not they fall on the sticker.
    #[inline]
    pub fn normalized(&self, px: f64, py: f64) -> (f64, f64) {
        let dx = px - self.tx;
        let dy = py - self.ty;
        let u = (self.cos_t * dx + self.sin_t * dy) * self.inv_scale;
        let v = (-self.sin_t * dx + self.cos_t * dy) * self.inv_scale;
        let x = arclen(self.a, u);
        let depth = self.a * u * u;
        let y = (v + depth * self.sin_phi) / self.cos_phi;
        (x, y)
    }

    /// Texel coordinates `(col, row)` if the face point is covered by the sticker.
    #[inline]
    pub fn texel(&self, px: f64, py: f64) -> Option<(f64, f64)> {
        let dx = px - self.tx;
        let dy = py - self.ty;
        if dx * dx + dy * dy > self.reject_r2 {
            return None;
        }
        let u = (self.cos_t * dx + self.sin_t * dy) * self.inv_scale;
        if u.abs() > self.u_max * (1.0 + 1e-12) {
            return None;
        }
        let (x, y) = self.normalized(px, py);
        if x.abs() <= StickerSpec::HALF_WIDTH && y.abs() <= self.half_height {
            Some(self.spec.to_texel(x, y))
        } else {
            None
        }
    }

    pub fn spec(&self) -> StickerSpec {
        self.spec
    }
}

/// Forward sticker map: normalized flat-sticker point → face-image point.
/// Bends with [`arclen_inverse`], pitches, projects and places.
pub fn forward_point(p: &BendPitchParams, x: f64, y: f64) -> (f64, f64) {
    let u = arclen_inverse(p.a, x);
    let depth = p.a * u * u;
    let v = y * p.phi.cos() - depth * p.phi.sin();
    let (c, s) = (p.place_theta.cos(), p.place_theta.sin());
    (
        p.place_tx + p.place_scale * (c * u - s * v),
        p.place_ty + p.place_scale * (s * u + c * v),
    )
}

/// Grid over the face image that samples the sticker texture.
pub fn build_placement_grid(
    spec: StickerSpec,
    p: &BendPitchParams,
    face_h: usize,
    face_w: usize,
) -> Result<SamplingGrid> {
    let map = PlacementMap::new(spec, p)?;
    let n = face_h * face_w;
    let mut grid = SamplingGrid {
        out_height: face_h,
        out_width: face_w,
        src_x: vec![0.0; n],
        src_y: vec![0.0; n],
        mask: vec![false; n],
    };
    for r in 0..face_h {
        for c in 0..face_w {
            if let Some((col, row)) = map.texel(c as f64, r as f64) {
                let i = r * face_w + c;
                grid.src_x[i] = col;
                grid.src_y[i] = row;
                grid.mask[i] = true;
            }
        }
    }
    Ok(grid)
}

/// Similarity transform from face pixels to template pixels, about the
/// image centers: `t = c_t + s·R(θ)·(f − c_f) + (tx, ty)`.
#[derive(Debug, Clone, Copy)]
pub struct TemplateAffine {
    cos_t: f64,
    sin_t: f64,
    scale: f64,
    tx: f64,
    ty: f64,
    face_cx: f64,
    face_cy: f64,
    tmpl_cx: f64,
    tmpl_cy: f64,
}

impl TemplateAffine {
    pub fn new(p: &BendPitchParams, face_h: usize, face_w: usize, tmpl: usize) -> Self {
        Self {
            cos_t: p.tmpl_theta.cos(),
            sin_t: p.tmpl_theta.sin(),
            scale: p.tmpl_scale,
            tx: p.tmpl_tx,
            ty: p.tmpl_ty,
            face_cx: (face_w as f64 - 1.0) / 2.0,
            face_cy: (face_h as f64 - 1.0) / 2.0,
            tmpl_cx: (tmpl as f64 - 1.0) / 2.0,
            tmpl_cy: (tmpl as f64 - 1.0) / 2.0,
        }
    }

    /// Face point → template point.
    pub fn forward(&self, fx: f64, fy: f64) -> (f64, f64) {
        let dx = fx - self.face_cx;
        let dy = fy - self.face_cy;
        (
            self.tmpl_cx + self.scale * (self.cos_t * dx - self.sin_t * dy) + self.tx,
            self.tmpl_cy + self.scale * (self.sin_t * dx + self.cos_t * dy) + self.ty,
        )
    }

    /// Template point → face point.
    #[inline]
    pub fn inverse(&self, tx: f64, ty: f64) -> (f64, f64) {
        let dx = (tx - self.tmpl_cx - self.tx) / self.scale;
        let dy = (ty - self.tmpl_cy - self.ty) / self.scale;
        (
            self.face_cx + self.cos_t * dx + self.sin_t * dy,
            self.face_cy - self.sin_t * dx + self.cos_t * dy,
        )
    }
}

/// Grid over the `tmpl × tmpl` template that samples the face image.
pub fn build_template_grid(
    p: &BendPitchParams,
    face_h: usize,
    face_w: usize,
    tmpl: usize,
) -> Result<SamplingGrid> {
    p.validate()?;
    let affine = TemplateAffine::new(p, face_h, face_w, tmpl);
    let n = tmpl * tmpl;
    let mut src_x = Vec::with_capacity(n);
    let mut src_y = Vec::with_capacity(n);
    for r in 0..tmpl {
        for c in 0..tmpl {
            let (x, y) = affine.inverse(c as f64, r as f64);
            src_x.push(x);
            src_y.push(y);
        }
    }
    Ok(SamplingGrid {
        out_height: tmpl,
        out_width: tmpl,
        src_x,
        src_y,
        mask: vec![true; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Composite Simpson on `√(1 + 4a²t²)`, refined until converged.
    fn quad_arclen(a: f64, t: f64) -> f64 {
        let f = |x: f64| (1.0 + 4.0 * a * a * x * x).sqrt();
        let simpson = |n: usize| {
            let h = t / n as f64;
            let mut s = f(0.0) + f(t);
            for i in 1..n {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let mut n = 64;
        let mut prev = simpson(n);
        loop {
            n *= 2;
            let cur = simpson(n);
            if (cur - prev).abs() < 1e-14 || n > 1 << 20 {
                return cur;
            }
            prev = cur;
        }
    }

    #[test]
    fn arclen_examples() {
        assert_eq!(arclen(0.3, 0.0), 0.0);
        assert_eq!(arclen(0.0, 0.7), 0.7);
        assert!((arclen(0.5, 1.0) - quad_arclen(0.5, 1.0)).abs() < 1e-10);
    }

    #[test]
    fn arclen_inverse_examples() {
        assert_eq!(arclen_inverse(0.4, 0.0), 0.0);
        assert_eq!(arclen_inverse(0.0, 0.3), 0.3);
        assert!((arclen_inverse(0.5, arclen(0.5, 0.8)) - 0.8).abs() < 1e-9);
        let x = arclen_inverse(0.4, 1.0);
        assert!((quad_arclen(0.4, x) - 1.0).abs() < 1e-8);
        assert!((arclen_inverse(0.4, -1.0) + x).abs() < 1e-15);
    }

    #[test]
    fn flat_limit_continuity() {
        for i in -10..=10 {
            let t = i as f64 / 10.0;
            assert!((arclen(1e-9, t) - arclen(0.0, t)).abs() < 1e-6);
            assert!((arclen_inverse(1e-9, t) - t).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn arclen_odd_and_monotone(a in 0.0f64..2.0, t in -1.0f64..1.0, d in 1e-6f64..0.5) {
            prop_assert!((arclen(a, -t) + arclen(a, t)).abs() < 1e-15);
            prop_assert!(arclen(a, t + d) > arclen(a, t));
            if t.abs() > 1e-3 {
                prop_assert!(arclen(a + 0.05, t).abs() > arclen(a, t).abs());
            }
        }

        #[test]
        fn inverse_composes(a in 0.0f64..1.5, s in -1.2f64..1.2) {
            prop_assert!((arclen(a, arclen_inverse(a, s)) - s).abs() < 1e-10);
        }
    }

    #[test]
    fn params_validation() {
        let good = BendPitchParams::nominal(600, 600, 112);
        assert!(good.validate().is_ok());
        for bad in [
            BendPitchParams { a: -0.1, ..good },
            BendPitchParams { phi: PI / 2.0, ..good },
            BendPitchParams { place_scale: 0.0, ..good },
            BendPitchParams { tmpl_scale: -1.0, ..good },
            BendPitchParams { tmpl_tx: f64::NAN, ..good },
        ] {
            assert!(bad.validate().is_err());
        }
        assert!(StickerSpec::new(900, 400).is_err());
    }

    fn flat(scale: f64, cx: f64, cy: f64) -> BendPitchParams {
        BendPitchParams {
            a: 0.0,
            phi: 0.0,
            place_scale: scale,
            place_theta: 0.0,
            place_tx: cx,
            place_ty: cy,
            ..BendPitchParams::nominal(100, 100, 28)
        }
    }

    #[test]
    fn flat_placement_is_affine() {
        let spec = StickerSpec::new(4, 9).unwrap();
        let p = flat(9.0, 40.0, 30.0);
        let grid = build_placement_grid(spec, &p, 100, 100).unwrap();
        // 9 texels over 2 units at 9 px/unit: 1 texel = 2 face pixels
        let i = 30 * 100 + 40;
        assert!(grid.mask[i]);
        assert!((grid.src_x[i] - 4.0).abs() < 1e-12);
        assert!((grid.src_y[i] - 1.5).abs() < 1e-12);
        let j = 30 * 100 + 42;
        assert!((grid.src_x[j] - 5.0).abs() < 1e-12);
        assert!((grid.src_y[j] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn pitch_foreshortens_vertically() {
        let spec = StickerSpec::default();
        let p0 = flat(100.0, 300.0, 300.0);
        let p1 = BendPitchParams { phi: PI / 6.0, ..p0 };
        let (m0, m1) = (PlacementMap::new(spec, &p0).unwrap(), PlacementMap::new(spec, &p1).unwrap());
        for (px, py) in [(310.0, 320.0), (250.0, 280.0), (333.0, 301.0)] {
            let (x0, y0) = m0.normalized(px, py);
            let (x1, y1) = m1.normalized(px, py);
            assert!((x1 - x0).abs() < 1e-15);
            assert!((y1 / y0 - 1.0 / (PI / 6.0).cos()).abs() < 1e-12);
        }
        assert!((1.0 / (PI / 6.0).cos() - 1.1547).abs() < 1e-4);
    }

    #[test]
    fn inverse_recovers_forward_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = StickerSpec::default();
        for _ in 0..20 {
            let p = BendPitchParams {
                a: rng.gen_range(0.0..1.0),
                phi: rng.gen_range(-0.6..0.6),
                place_theta: rng.gen_range(-0.2..0.2),
                ..BendPitchParams::nominal(600, 600, 112)
            };
            let map = PlacementMap::new(spec, &p).unwrap();
            for _ in 0..50 {
                let x = rng.gen_range(-0.999..0.999);
                let y = rng.gen_range(-0.44..0.44);
                let (px, py) = forward_point(&p, x, y);
                let (bx, by) = map.normalized(px, py);
                assert!((bx - x).abs() < 1e-8 && (by - y).abs() < 1e-8);
                assert!(map.texel(px, py).is_some());
            }
        }
    }

    /// Splats a dense set of texel samples through the forward map and
    /// measures the horizontal extent they cover.
    fn splat_half_width(p: &BendPitchParams) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=2000 {
            let x = -1.0 + 2.0 * i as f64 / 2000.0;
            for j in 0..=20 {
                let y = -0.4 + 0.8 * j as f64 / 20.0;
                let (px, _) = forward_point(p, x, y);
                lo = lo.min(px);
                hi = hi.max(px);
            }
        }
        (hi - lo) / 2.0
    }

    #[test]
    fn bent_footprint_matches_forward_splat() {
        let spec = StickerSpec::default();
        let p = BendPitchParams {
            a: 0.4,
            phi: 0.0,
            place_scale: 200.0,
            place_theta: 0.0,
            place_tx: 300.0,
            place_ty: 300.0,
            ..BendPitchParams::nominal(600, 600, 112)
        };
        let grid = build_placement_grid(spec, &p, 600, 600).unwrap();
        let row = 300;
        let cols: Vec<usize> = (0..600).filter(|&c| grid.mask[row * 600 + c]).collect();
        let measured = (cols[cols.len() - 1] - cols[0] + 1) as f64 / 2.0;
        let splat = splat_half_width(&p);
        let expected = arclen_inverse(0.4, 1.0) * 200.0;
        assert!((splat - expected).abs() < 1e-3);
        assert!((measured - expected).abs() <= 0.5, "{measured} vs {expected}");
    }

    #[test]
    fn mask_area_shrinks_with_bend() {
        let spec = StickerSpec::default();
        let base = BendPitchParams::nominal(600, 600, 112);
        let areas: Vec<usize> = [0.0, 0.2, 0.4]
            .iter()
            .map(|&a| {
                build_placement_grid(spec, &BendPitchParams { a, ..base }, 600, 600)
                    .unwrap()
                    .valid_count()
            })
            .collect();
        assert!(areas[0] > areas[1] && areas[1] > areas[2], "{areas:?}");
    }

    #[test]
    fn nominal_template_maps_corners() {
        let p = BendPitchParams::nominal(600, 600, 112);
        let aff = TemplateAffine::new(&p, 600, 600, 112);
        // outer pixel boundaries coincide
        for (t, f) in [(-0.5, -0.5), (111.5, 599.5)] {
            let (x, y) = aff.inverse(t, t);
            assert!((x - f).abs() < 1e-9 && (y - f).abs() < 1e-9);
        }
        let grid = build_template_grid(&p, 600, 600, 112).unwrap();
        assert_eq!(grid.len(), 112 * 112);
        assert!(grid.mask.iter().all(|&m| m));
        // pixel (0,0) center sits 600/112/2 face pixels in from the corner
        assert!((grid.src_x[0] - (-0.5 + 600.0 / 224.0)).abs() < 1e-9);
    }

    #[test]
    fn template_translation_shift() {
        let p = BendPitchParams::nominal(600, 600, 112);
        let g0 = build_template_grid(&p, 600, 600, 112).unwrap();
        let g1 = build_template_grid(&BendPitchParams { tmpl_tx: 1.0, ..p }, 600, 600, 112).unwrap();
        for i in (0..g0.len()).step_by(97) {
            assert!((g0.src_x[i] - g1.src_x[i] - 600.0 / 112.0).abs() < 1e-9);
            assert!((g0.src_y[i] - g1.src_y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn template_affine_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let p = BendPitchParams {
                tmpl_scale: rng.gen_range(0.1..0.3),
                tmpl_theta: rng.gen_range(-0.3..0.3),
                tmpl_tx: rng.gen_range(-5.0..5.0),
                tmpl_ty: rng.gen_range(-5.0..5.0),
                ..BendPitchParams::nominal(600, 600, 112)
            };
            let grid = build_template_grid(&p, 600, 600, 112).unwrap();
            let aff = TemplateAffine::new(&p, 600, 600, 112);
            for i in (0..grid.len()).step_by(13) {
                let (tx, ty) = aff.forward(grid.src_x[i], grid.src_y[i]);
                assert!((tx - (i % 112) as f64).abs() < 1e-9);
                assert!((ty - (i / 112) as f64).abs() < 1e-9);
            }
        }
    }
}
