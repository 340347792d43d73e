//! Central finite-difference checks of every VJP in the pipeline.
//!
//! Each check perturbs one input coordinate by `±FD_STEP`, differences the
//! outputs elementwise, contracts with a random cotangent and compares with
//! the analytic VJP entry. The relative error is
//! `|fd − an| / max(|fd|, |an|, floor)`; the floor absorbs entries whose true
//! value is below the finite-difference roundoff.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::{total_loss, total_loss_grad};
use crate::embedder::{cosine_sim, cosine_sim_grad, Embedder, EmbedderConfig, EmbedderKind, Embedding};
use crate::error::{Error, Result};
use crate::geometry::BendPitchParams;
use crate::image::{composite, composite_vjp, ImageBuffer};
use crate::render::{render_vjp, render_with};
use crate::sampler::{bilinear_sample, bilinear_sample_vjp, SamplingGrid};
use crate::tv::{tv_loss, tv_loss_grad};

pub const FD_STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;
pub const SAMPLER_TOLERANCE: f64 = 1e-5;

pub const COMPONENTS: [&str; 8] = [
    "sampler",
    "composite",
    "render",
    "tv",
    "cosine",
    "toy_cnn",
    "linear",
    "total_loss",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// fewer probes, small linear embedder
    Reduced,
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduced" => Ok(Scale::Reduced),
            "full" => Ok(Scale::Full),
            other => Err(Error::InvalidParams(format!("unknown gradcheck scale {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub scale: Scale,
    pub seed: u64,
    /// scale this component's analytic gradient by `1 + 1e-2`, to prove the
    /// harness notices
    pub fault: Option<String>,
}

impl GradcheckOptions {
    pub fn new(scale: Scale) -> Self {
        Self {
            scale,
            seed: 1,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentResult {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub probes: usize,
}

impl ComponentResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

impl fmt::Display for ComponentResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<11} max_rel_err {:.3e} (tol {:.0e}, {} probes) {}",
            self.name,
            self.max_rel_err,
            self.tolerance,
            self.probes,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

fn rel_err(fd: f64, an: f64, floor: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(floor)
}

fn contract(a: &[f64], b: &[f64], ct: &[f64]) -> f64 {
    a.iter().zip(b).zip(ct).map(|((x, y), c)| (x - y) * c).sum()
}

fn random_image(h: usize, w: usize, ch: usize, rng: &mut ChaCha8Rng) -> ImageBuffer {
    ImageBuffer::from_fn(h, w, ch, |_, _, _| rng.gen())
}

fn random_cotangent(h: usize, w: usize, ch: usize, rng: &mut ChaCha8Rng) -> ImageBuffer {
    ImageBuffer::from_fn(h, w, ch, |_, _, _| rng.gen_range(-1.0..1.0))
}

fn perturbed(img: &ImageBuffer, i: usize, delta: f64) -> ImageBuffer {
    let mut out = img.clone();
    out.data_mut()[i] += delta;
    out
}

struct Checker {
    rng: ChaCha8Rng,
    full: bool,
    fault: Option<String>,
}

impl Checker {
    fn corruption(&self, name: &str) -> f64 {
        if self.fault.as_deref() == Some(name) {
            1.0 + 1e-2
        } else {
            1.0
        }
    }

    fn sampler(&mut self) -> Result<ComponentResult> {
        let k = self.corruption("sampler");
        let rng = &mut self.rng;
        let src = random_image(6, 7, 2, rng);
        let n = if self.full { 40 } else { 12 };
        // some coordinates outside the image to exercise clamping
        let grid = SamplingGrid {
            out_height: 1,
            out_width: n,
            src_x: (0..n).map(|_| rng.gen_range(-1.5..7.5)).collect(),
            src_y: (0..n).map(|_| rng.gen_range(-1.5..6.5)).collect(),
            mask: (0..n).map(|i| i % 7 != 3).collect(),
        };
        let ct = random_cotangent(1, n, 2, rng);
        let g = bilinear_sample_vjp(&src, &grid, &ct)?;
        let h = FD_STEP;
        let mut worst = 0.0f64;
        let mut probes = 0;
        for i in 0..src.data().len() {
            let op = bilinear_sample(&perturbed(&src, i, h), &grid)?;
            let om = bilinear_sample(&perturbed(&src, i, -h), &grid)?;
            let fd = contract(op.data(), om.data(), ct.data()) / (2.0 * h);
            worst = worst.max(rel_err(fd, k * g.src.data()[i], 1e-8));
            probes += 1;
        }
        for p in 0..n {
            for axis in 0..2 {
                let coord = if axis == 0 { grid.src_x[p] } else { grid.src_y[p] };
                // the derivative jumps at texel centers and clamp edges
                if (coord - coord.round()).abs() < 10.0 * h {
                    continue;
                }
                let mut gp = grid.clone();
                let mut gm = grid.clone();
                if axis == 0 {
                    gp.src_x[p] += h;
                    gm.src_x[p] -= h;
                } else {
                    gp.src_y[p] += h;
                    gm.src_y[p] -= h;
                }
                let op = bilinear_sample(&src, &gp)?;
                let om = bilinear_sample(&src, &gm)?;
                let fd = contract(op.data(), om.data(), ct.data()) / (2.0 * h);
                let an = if axis == 0 { g.src_x[p] } else { g.src_y[p] };
                worst = worst.max(rel_err(fd, k * an, 1e-8));
                probes += 1;
            }
        }
        Ok(ComponentResult {
            name: "sampler",
            max_rel_err: worst,
            tolerance: SAMPLER_TOLERANCE,
            probes,
        })
    }

    fn composite(&mut self) -> Result<ComponentResult> {
        let k = self.corruption("composite");
        let rng = &mut self.rng;
        let base = random_image(5, 6, 3, rng);
        let over = random_image(5, 6, 3, rng);
        let mask: Vec<bool> = (0..30).map(|_| rng.gen_bool(0.5)).collect();
        let ct = random_cotangent(5, 6, 3, rng);
        let (db, dov) = composite_vjp(&ct, &mask)?;
        let h = FD_STEP;
        let mut worst = 0.0f64;
        let mut probes = 0;
        for i in 0..base.data().len() {
            let op = composite(&perturbed(&base, i, h), &over, &mask)?;
            let om = composite(&perturbed(&base, i, -h), &over, &mask)?;
            let fd = contract(op.data(), om.data(), ct.data()) / (2.0 * h);
            worst = worst.max(rel_err(fd, k * db.data()[i], 1e-8));
            let op = composite(&base, &perturbed(&over, i, h), &mask)?;
            let om = composite(&base, &perturbed(&over, i, -h), &mask)?;
            let fd = contract(op.data(), om.data(), ct.data()) / (2.0 * h);
            worst = worst.max(rel_err(fd, k * dov.data()[i], 1e-8));
            probes += 2;
        }
        Ok(ComponentResult {
            name: "composite",
            max_rel_err: worst,
            tolerance: TOLERANCE,
            probes,
        })
    }

    fn render(&mut self) -> Result<ComponentResult> {
        let k = self.corruption("render");
        let rng = &mut self.rng;
        let sticker = random_image(20, 45, 3, rng);
        let face = random_image(60, 60, 3, rng);
        let p = BendPitchParams {
            place_scale: 20.0,
            place_tx: 30.0,
            place_ty: 25.0,
            tmpl_theta: 0.05,
            ..BendPitchParams::nominal(60, 60, 28)
        };
        let ct = random_cotangent(28, 28, 3, rng);
        let g = render_vjp(&sticker, &face, &p, &ct)?;
        let h = FD_STEP;
        let n = sticker.data().len();
        let indices: Vec<usize> = if self.full {
            (0..n).collect()
        } else {
            // probe where the analytic gradient is nonzero, plus a few zeros
            let mut nz: Vec<usize> = (0..n).filter(|&i| g.data()[i] != 0.0).collect();
            nz.truncate(150);
            nz.extend((0..20).map(|_| rng.gen_range(0..n)));
            nz
        };
        let mut worst = 0.0f64;
        for &i in &indices {
            let op = render_with(&perturbed(&sticker, i, h), &face, &p, 28)?;
            let om = render_with(&perturbed(&sticker, i, -h), &face, &p, 28)?;
            let fd = contract(op.data(), om.data(), ct.data()) / (2.0 * h);
            worst = worst.max(rel_err(fd, k * g.data()[i], 1e-8));
        }
        Ok(ComponentResult {
            name: "render",
            max_rel_err: worst,
            tolerance: TOLERANCE,
            probes: indices.len(),
        })
    }

    fn tv(&mut self) -> Result<ComponentResult> {
        let k = self.corruption("tv");
        let size = if self.full { 16 } else { 8 };
        let img = random_image(size, size + 1, 3, &mut self.rng);
        let g = tv_loss_grad(&img);
        let h = FD_STEP;
        // roundoff of the difference quotient is about eps·|tv|/h
        let floor = 1e-5 * tv_loss(&img).max(1.0);
        let mut worst = 0.0f64;
        for i in 0..img.data().len() {
            let fd = (tv_loss(&perturbed(&img, i, h)) - tv_loss(&perturbed(&img, i, -h))) / (2.0 * h);
            worst = worst.max(rel_err(fd, k * g.data()[i], floor));
        }
        Ok(ComponentResult {
            name: "tv",
            max_rel_err: worst,
            tolerance: TOLERANCE,
            probes: img.data().len(),
        })
    }

    fn cosine(&mut self) -> Result<ComponentResult> {
        let k = self.corruption("cosine");
        let rng = &mut self.rng;
        let trials = if self.full { 20 } else { 5 };
        let h = FD_STEP;
        let mut worst = 0.0f64;
        let mut probes = 0;
        for _ in 0..trials {
            let u = Embedding((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let v = Embedding((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let g = cosine_sim_grad(&u, &v)?;
            for i in 0..16 {
                let mut up = u.clone();
                up.0[i] += h;
                let mut um = u.clone();
                um.0[i] -= h;
                let fd = (cosine_sim(&up, &v)? - cosine_sim(&um, &v)?) / (2.0 * h);
                worst = worst.max(rel_err(fd, k * g.0[i], 1e-8));
                probes += 1;
            }
        }
        Ok(ComponentResult {
            name: "cosine",
            max_rel_err: worst,
            tolerance: TOLERANCE,
            probes,
        })
    }

    fn embedder(&mut self, kind: EmbedderKind) -> Result<ComponentResult> {
        let (name, input) = match kind {
            EmbedderKind::ToyCnn => ("toy_cnn", 112),
            EmbedderKind::Linear => ("linear", if self.full { 112 } else { 32 }),
        };
        let e = Embedder::new(EmbedderConfig {
            input,
            ..EmbedderConfig::new(kind, 7)
        })?;
        let k = self.corruption(name);
        let rng = &mut self.rng;
        let img = random_image(input, input, 3, rng);
        let ct = Embedding((0..e.config().dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (_, tape) = e.forward(&img)?;
        let g = e.backward(&tape, &ct)?;
        let pattern = tape.relu_pattern();
        let probes = if self.full { 20 } else { 8 };
        let h = FD_STEP;
        let mut worst = 0.0f64;
        let mut done = 0;
        let mut attempts = 0;
        while done < probes && attempts < 50 * probes {
            attempts += 1;
            let i = rng.gen_range(0..img.data().len());
            let (ep, tp) = e.forward(&perturbed(&img, i, h))?;
            let (em, tm) = e.forward(&perturbed(&img, i, -h))?;
            // a probe that crosses a ReLU kink measures a one-sided slope
            if tp.relu_pattern() != pattern || tm.relu_pattern() != pattern {
                continue;
            }
            let fd = contract(&ep.0, &em.0, &ct.0) / (2.0 * h);
            worst = worst.max(rel_err(fd, k * g.data()[i], 1e-8));
            done += 1;
        }
        Ok(ComponentResult {
            name,
            max_rel_err: worst,
            tolerance: TOLERANCE,
            probes: done,
        })
    }

    fn total_loss(&mut self) -> Result<ComponentResult> {
        let k = self.corruption("total_loss");
        let e = Embedder::new(EmbedderConfig {
            input: 16,
            dim: 16,
            ..EmbedderConfig::new(EmbedderKind::ToyCnn, 3)
        })?;
        let rng = &mut self.rng;
        let sticker = random_image(20, 45, 3, rng);
        let face = random_image(48, 48, 3, rng);
        let p = BendPitchParams {
            place_scale: 16.0,
            place_tx: 24.0,
            place_ty: 20.0,
            ..BendPitchParams::nominal(48, 48, 16)
        };
        let anchor = Embedding((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let lambda = 1e-4;
        let (_, g) = total_loss_grad(&sticker, &face, &p, &anchor, lambda, &e)?;
        let h = FD_STEP;
        let pattern = |s: &ImageBuffer| -> Result<Vec<bool>> {
            let tmpl = render_with(s, &face, &p, 16)?;
            Ok(e.forward(&tmpl)?.1.relu_pattern())
        };
        let reference = pattern(&sticker)?;
        let n = sticker.data().len();
        let mut nz: Vec<usize> = (0..n).filter(|&i| g.data()[i] != 0.0).collect();
        let probes = if self.full { 120 } else { 30 };
        // mix of texels seen by the template and texels reached only by TV
        let stride = (nz.len() / probes).max(1);
        nz = nz.into_iter().step_by(stride).take(probes).collect();
        let mut worst = 0.0f64;
        let mut done = 0;
        for i in nz {
            let sp = perturbed(&sticker, i, h);
            let sm = perturbed(&sticker, i, -h);
            if pattern(&sp)? != reference || pattern(&sm)? != reference {
                continue;
            }
            let fp = total_loss(&sp, &face, &p, &anchor, lambda, &e)?;
            let fm = total_loss(&sm, &face, &p, &anchor, lambda, &e)?;
            // terms differenced separately so the large TV value cannot
            // swamp the similarity difference
            let fd = ((fp.sim - fm.sim) + lambda * (fp.tv - fm.tv)) / (2.0 * h);
            worst = worst.max(rel_err(fd, k * g.data()[i], 1e-8));
            done += 1;
        }
        Ok(ComponentResult {
            name: "total_loss",
            max_rel_err: worst,
            tolerance: TOLERANCE,
            probes: done,
        })
    }
}

/// Runs every check in [`COMPONENTS`] order.
pub fn run(opts: &GradcheckOptions) -> Result<Vec<ComponentResult>> {
    if let Some(f) = &opts.fault {
        if !COMPONENTS.contains(&f.as_str()) {
            return Err(Error::InvalidParams(format!("unknown gradcheck component {f:?}")));
        }
    }
    let mut c = Checker {
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        full: opts.scale == Scale::Full,
        fault: opts.fault.clone(),
    };
    Ok(vec![
        c.sampler()?,
        c.composite()?,
        c.render()?,
        c.tv()?,
        c.cosine()?,
        c.embedder(EmbedderKind::ToyCnn)?,
        c.embedder(EmbedderKind::Linear)?,
        c.total_loss()?,
    ])
}
