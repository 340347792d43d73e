//! Expectation-over-transformation sticker optimization.
//!
//! Each iteration draws a batch of jittered transformation parameters,
//! averages the sticker gradient of
//! `cos(embed(render(sticker)), anchor) + λ·TV(sticker)` over the batch,
//! accumulates the L1-normalized gradient into a momentum buffer and moves
//! every texel by `−step·sign(momentum)`, clipping to `[0, 1]`.
//!
//! The schedule has two stages (coarse then fine step and momentum). Once a
//! stage has run its minimum number of iterations, a least-squares line is
//! fitted to the trailing window of validation similarities after every
//! iteration; a non-negative slope ends the stage. Momentum is reset when
//! the second stage starts.

use std::fmt::Write as _;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::{cosine_sim, cosine_sim_grad, Embedder, Embedding};
use crate::error::{Error, Result};
use crate::geometry::{BendPitchParams, StickerSpec};
use crate::image::{clip01_in_place, ImageBuffer};
use crate::render::RenderPlan;
use crate::tv::{tv_loss, tv_loss_grad};

/// Uniform jitter around a base parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    pub base: BendPitchParams,
    /// half-range per parameter, same field layout as `base`
    pub half: BendPitchParams,
    pub batch_size: usize,
    pub seed: u64,
}

impl JitterSpec {
    /// Default half-ranges: `a` ±10%, pitch ±3°, placement ±2 px, ±2°, ±2%
    /// scale; template ±1 px, ±1°, ±1% scale.
    pub fn default_half_ranges(base: &BendPitchParams) -> BendPitchParams {
        BendPitchParams {
            a: 0.1 * base.a,
            phi: 3f64.to_radians(),
            place_scale: 0.02 * base.place_scale,
            place_theta: 2f64.to_radians(),
            place_tx: 2.0,
            place_ty: 2.0,
            tmpl_scale: 0.01 * base.tmpl_scale,
            tmpl_theta: 1f64.to_radians(),
            tmpl_tx: 1.0,
            tmpl_ty: 1.0,
        }
    }

    pub fn new(base: BendPitchParams, batch_size: usize, seed: u64) -> Self {
        Self {
            half: Self::default_half_ranges(&base),
            base,
            batch_size,
            seed,
        }
    }

    /// Every draw equals `base`.
    pub fn fixed(base: BendPitchParams, batch_size: usize) -> Self {
        Self {
            base,
            half: BendPitchParams::from_array([0.0; BendPitchParams::COUNT]),
            batch_size,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let half = self.half.to_array();
        if half.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::InvalidParams("jitter half-ranges must be finite and >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch size must be positive".into()));
        }
        // every corner of the jitter box must stay valid
        let lo = BendPitchParams::from_array(std::array::from_fn(|i| self.base.to_array()[i] - half[i]));
        let hi = BendPitchParams::from_array(std::array::from_fn(|i| self.base.to_array()[i] + half[i]));
        lo.validate()
            .and(hi.validate())
            .map_err(|e| Error::InvalidParams(format!("jitter range leaves the valid domain: {e}")))
    }
}

/// Stateful sampler; successive batches continue the same random stream.
#[derive(Debug, Clone)]
pub struct JitterSampler {
    spec: JitterSpec,
    rng: ChaCha8Rng,
}

impl JitterSampler {
    pub fn new(spec: JitterSpec) -> Result<Self> {
        spec.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Ok(Self { spec, rng })
    }

    pub fn spec(&self) -> &JitterSpec {
        &self.spec
    }

    pub fn sample_batch(&mut self) -> Vec<BendPitchParams> {
        let base = self.spec.base.to_array();
        let half = self.spec.half.to_array();
        (0..self.spec.batch_size)
            .map(|_| {
                BendPitchParams::from_array(std::array::from_fn(|i| {
                    let u: f64 = self.rng.gen();
                    base[i] + half[i] * (2.0 * u - 1.0)
                }))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub step: f64,
    pub momentum: f64,
    pub min_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StickerInit {
    Gray,
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub lambda_tv: f64,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    /// trailing validation values fitted by the slope rule
    pub window: usize,
    pub max_iters: usize,
    pub init: StickerInit,
    /// worker threads for the batch (0 or 1 = serial)
    pub threads: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            lambda_tv: 1e-4,
            stage1: StageConfig {
                step: 5.0 / 255.0,
                momentum: 0.9,
                min_iters: 100,
            },
            stage2: StageConfig {
                step: 1.0 / 255.0,
                momentum: 0.995,
                min_iters: 200,
            },
            window: 100,
            max_iters: 2000,
            init: StickerInit::Gray,
            threads: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            if !(s.step > 0.0 && s.step.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} step must be positive")));
            }
            if !(0.0..1.0).contains(&s.momentum) {
                return Err(Error::InvalidParams(format!("{name} momentum must lie in [0, 1)")));
            }
            if self.window > s.min_iters {
                return Err(Error::InvalidParams(format!(
                    "window {} exceeds {name} min_iters {}",
                    self.window, s.min_iters
                )));
            }
        }
        if self.window < 2 {
            return Err(Error::InvalidParams("slope window needs at least 2 points".into()));
        }
        if !(self.lambda_tv >= 0.0 && self.lambda_tv.is_finite()) {
            return Err(Error::InvalidParams("lambda_tv must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn stage(&self, stage: u8) -> &StageConfig {
        if stage == 1 {
            &self.stage1
        } else {
            &self.stage2
        }
    }
}

pub fn initial_sticker(spec: StickerSpec, init: StickerInit) -> ImageBuffer {
    match init {
        StickerInit::Gray => ImageBuffer::filled(spec.tex_height, spec.tex_width, 3, 0.5),
        StickerInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ImageBuffer::from_fn(spec.tex_height, spec.tex_width, 3, |_, _, _| rng.gen())
        }
    }
}

/// The two loss terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub sim: f64,
    pub tv: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn new(sim: f64, tv: f64, lambda: f64) -> Self {
        Self {
            sim,
            tv,
            total: sim + lambda * tv,
        }
    }
}

/// Similarity of one rendered template to the anchor and the template-space
/// cotangent of that similarity.
fn similarity_and_template_grad(
    plan: &RenderPlan,
    sticker: &ImageBuffer,
    face: &ImageBuffer,
    embedder: &Embedder,
    anchor: &Embedding,
) -> Result<(f64, ImageBuffer)> {
    let template = plan.forward(sticker, face)?;
    let (emb, tape) = embedder.forward(&template)?;
    let sim = cosine_sim(&emb, anchor)?;
    let d_emb = cosine_sim_grad(&emb, anchor)?;
    Ok((sim, embedder.backward(&tape, &d_emb)?))
}

/// `cos(embed(render(sticker, face, p)), anchor) + λ·TV(sticker)`.
pub fn total_loss(
    sticker: &ImageBuffer,
    face: &ImageBuffer,
    p: &BendPitchParams,
    anchor: &Embedding,
    lambda: f64,
    embedder: &Embedder,
) -> Result<LossTerms> {
    let spec = StickerSpec::new(sticker.height(), sticker.width())?;
    let plan = RenderPlan::new(spec, p, face.height(), face.width(), embedder.config().input)?;
    let emb = embedder.embed(&plan.forward(sticker, face)?)?;
    Ok(LossTerms::new(cosine_sim(&emb, anchor)?, tv_loss(sticker), lambda))
}

/// [`total_loss`] together with its gradient on the sticker texels.
pub fn total_loss_grad(
    sticker: &ImageBuffer,
    face: &ImageBuffer,
    p: &BendPitchParams,
    anchor: &Embedding,
    lambda: f64,
    embedder: &Embedder,
) -> Result<(LossTerms, ImageBuffer)> {
    let spec = StickerSpec::new(sticker.height(), sticker.width())?;
    let plan = RenderPlan::new(spec, p, face.height(), face.width(), embedder.config().input)?;
    let (sim, d_tmpl) = similarity_and_template_grad(&plan, sticker, face, embedder, anchor)?;
    let mut grad = plan.backward(&d_tmpl)?;
    if lambda != 0.0 {
        let tv_grad = tv_loss_grad(sticker);
        for (g, t) in grad.data_mut().iter_mut().zip(tv_grad.data()) {
            *g += lambda * t;
        }
    }
    Ok((LossTerms::new(sim, tv_loss(sticker), lambda), grad))
}

/// Decision of the slope rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeDecision {
    Continue,
    Advance,
}

/// Ordinary least-squares slope of `values` against their indices.
///
/// Terms are paired symmetrically around the center so a constant sequence
/// yields exactly zero.
pub fn ols_slope(values: &[f64]) -> f64 {
    let n = values.len();
    let mean_x = (n as f64 - 1.0) / 2.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..n / 2 {
        let dx = mean_x - k as f64;
        num += dx * (values[n - 1 - k] - values[k]);
        den += 2.0 * dx * dx;
    }
    num / den
}

/// Fits a line to the last `window` values; a slope that is not negative
/// means the stage has stopped improving.
pub fn slope_check(history: &[f64], window: usize) -> Result<SlopeDecision> {
    if window < 2 || history.len() < window {
        return Err(Error::InsufficientHistory {
            have: history.len(),
            need: window.max(2),
        });
    }
    let slope = ols_slope(&history[history.len() - window..]);
    Ok(if slope >= 0.0 {
        SlopeDecision::Advance
    } else {
        SlopeDecision::Continue
    })
}

/// Mutable optimization state, owned by one driver.
#[derive(Debug, Clone)]
pub struct AttackState {
    pub sticker: ImageBuffer,
    pub momentum: ImageBuffer,
    pub stage: u8,
    pub iter: usize,
    pub val_history: Vec<f64>,
    pub stage_start_iter: usize,
    /// iterations whose averaged gradient was exactly zero
    pub zero_grad_steps: usize,
    pub sampler: JitterSampler,
}

/// One row of the loss log. Loss terms are batch means before the update;
/// `val_sim` is measured after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: usize,
    pub stage: u8,
    pub loss_sim: f64,
    pub loss_tv: f64,
    pub loss_total: f64,
    pub val_sim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// the slope rule fired in the second stage
    Converged,
    MaxIters,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max_iters",
        })
    }
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub sticker: ImageBuffer,
    pub log: Vec<LogRow>,
    pub termination: Termination,
    /// iteration count at which the second stage began
    pub stage2_start: Option<usize>,
    pub zero_grad_steps: usize,
}

impl AttackOutcome {
    pub fn final_val_sim(&self) -> Option<f64> {
        self.log.last().map(|r| r.val_sim)
    }
}

/// An attack problem: one face, one embedder, one anchor.
pub struct Attack<'a> {
    config: AttackConfig,
    jitter: JitterSpec,
    face: &'a ImageBuffer,
    embedder: &'a Embedder,
    anchor: Embedding,
    spec: StickerSpec,
    validation: RenderPlan,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Attack<'a> {
    pub fn new(
        config: AttackConfig,
        jitter: JitterSpec,
        spec: StickerSpec,
        face: &'a ImageBuffer,
        embedder: &'a Embedder,
        anchor: Embedding,
    ) -> Result<Self> {
        config.validate()?;
        jitter.validate()?;
        if anchor.dim() != embedder.config().dim || anchor.norm() == 0.0 {
            return Err(Error::ZeroNorm("anchor embedding"));
        }
        if face.channels() != 3 {
            return Err(Error::Shape("face must be RGB".into()));
        }
        let tmpl = embedder.config().input;
        let validation = RenderPlan::new(spec, &jitter.base, face.height(), face.width(), tmpl)?;
        let pool = if config.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            config,
            jitter,
            face,
            embedder,
            anchor,
            spec,
            validation,
            pool,
        })
    }

    pub fn config(&self) -> &AttackConfig {
        &self.config
    }

    pub fn initial_state(&self) -> Result<AttackState> {
        let sticker = initial_sticker(self.spec, self.config.init);
        Ok(AttackState {
            momentum: ImageBuffer::zeros(sticker.height(), sticker.width(), 3),
            sticker,
            stage: 1,
            iter: 0,
            val_history: Vec::new(),
            stage_start_iter: 0,
            zero_grad_steps: 0,
            sampler: JitterSampler::new(self.jitter.clone())?,
        })
    }

    /// Similarity of the sticker at the un-jittered base parameters.
    pub fn validation_sim(&self, sticker: &ImageBuffer) -> Result<f64> {
        let emb = self.embedder.embed(&self.validation.forward(sticker, self.face)?)?;
        cosine_sim(&emb, &self.anchor)
    }

    /// Batch-averaged loss terms and sticker gradient for the given draws.
    pub fn batch_gradient(
        &self,
        sticker: &ImageBuffer,
        draws: &[BendPitchParams],
    ) -> Result<(LossTerms, ImageBuffer)> {
        let per_draw = |p: &BendPitchParams| -> Result<(RenderPlan, f64, ImageBuffer)> {
            let plan = RenderPlan::new(
                self.spec,
                p,
                self.face.height(),
                self.face.width(),
                self.embedder.config().input,
            )?;
            let (sim, d_tmpl) =
                similarity_and_template_grad(&plan, sticker, self.face, self.embedder, &self.anchor)?;
            Ok((plan, sim, d_tmpl))
        };
        let results: Vec<Result<_>> = match &self.pool {
            Some(pool) => pool.install(|| draws.par_iter().map(per_draw).collect()),
            None => draws.iter().map(per_draw).collect(),
        };
        // scatter onto the sticker in draw order so the sum is independent of threading
        let mut grad = ImageBuffer::zeros(sticker.height(), sticker.width(), 3);
        let mut sim_sum = 0.0;
        let scale = 1.0 / draws.len() as f64;
        for r in results {
            let (plan, sim, mut d_tmpl) = r?;
            sim_sum += sim;
            d_tmpl.data_mut().iter_mut().for_each(|v| *v *= scale);
            plan.backward_into(&d_tmpl, &mut grad)?;
        }
        let lambda = self.config.lambda_tv;
        if lambda != 0.0 {
            let tv_grad = tv_loss_grad(sticker);
            for (g, t) in grad.data_mut().iter_mut().zip(tv_grad.data()) {
                *g += lambda * t;
            }
        }
        Ok((LossTerms::new(sim_sum * scale, tv_loss(sticker), lambda), grad))
    }

    /// Applies one momentum sign-gradient update for a given averaged gradient.
    pub fn apply_update(&self, state: &mut AttackState, grad: &ImageBuffer) {
        let stage = *self.config.stage(state.stage);
        let l1: f64 = grad.data().iter().map(|g| g.abs()).sum();
        let inv = if l1 > 0.0 {
            1.0 / l1
        } else {
            state.zero_grad_steps += 1;
            0.0
        };
        let m = state.momentum.data_mut();
        let s = state.sticker.data_mut();
        for ((mi, si), gi) in m.iter_mut().zip(s.iter_mut()).zip(grad.data()) {
            *mi = stage.momentum * *mi + gi * inv;
            let dir = if *mi > 0.0 {
                1.0
            } else if *mi < 0.0 {
                -1.0
            } else {
                0.0
            };
            *si -= stage.step * dir;
        }
        clip01_in_place(&mut state.sticker);
    }

    /// One full iteration: jitter draw, averaged gradient, update, validation.
    pub fn step(&self, state: &mut AttackState) -> Result<LogRow> {
        let draws = state.sampler.sample_batch();
        let (loss, grad) = self.batch_gradient(&state.sticker, &draws)?;
        if !(loss.total.is_finite() && grad.all_finite()) {
            return Err(Error::NonFinite("attack loss or gradient"));
        }
        self.apply_update(state, &grad);
        let val = self.validation_sim(&state.sticker)?;
        if !val.is_finite() {
            return Err(Error::NonFinite("validation similarity"));
        }
        state.iter += 1;
        state.val_history.push(val);
        Ok(LogRow {
            iter: state.iter,
            stage: state.stage,
            loss_sim: loss.sim,
            loss_tv: loss.tv,
            loss_total: loss.total,
            val_sim: val,
        })
    }

    pub fn run(&self) -> Result<AttackOutcome> {
        self.run_with(|_| {})
    }

    /// [`Attack::run`] with a callback after every logged iteration.
    pub fn run_with(&self, mut on_row: impl FnMut(&LogRow)) -> Result<AttackOutcome> {
        let mut state = self.initial_state()?;
        let mut log = Vec::new();
        let mut stage2_start = None;
        let termination = loop {
            if state.iter >= self.config.max_iters {
                break Termination::MaxIters;
            }
            let row = self.step(&mut state)?;
            on_row(&row);
            log.push(row);
            let stage = self.config.stage(state.stage);
            if state.iter - state.stage_start_iter < stage.min_iters {
                continue;
            }
            if slope_check(&state.val_history, self.config.window)? == SlopeDecision::Advance {
                if state.stage == 1 {
                    state.stage = 2;
                    state.stage_start_iter = state.iter;
                    state.momentum.data_mut().fill(0.0);
                    stage2_start = Some(state.iter);
                } else {
                    break Termination::Converged;
                }
            }
        };
        Ok(AttackOutcome {
            sticker: state.sticker,
            log,
            termination,
            stage2_start,
            zero_grad_steps: state.zero_grad_steps,
        })
    }
}

/// `%.9g`-style formatting: 9 significant digits, fixed notation for
/// moderate magnitudes.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.8e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let mut s = format!("{:.*}", (8 - exp) as usize, v);
        if s.contains('.') {
            s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        }
        s
    } else {
        sci
    }
}

pub const LOG_HEADER: &str = "iter,stage,loss_sim,loss_tv,loss_total,val_sim";

pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iter,
            r.stage,
            fmt_sig9(r.loss_sim),
            fmt_sig9(r.loss_tv),
            fmt_sig9(r.loss_total),
            fmt_sig9(r.val_sim)
        );
    }
    out
}

pub fn write_log_csv(rows: &[LogRow], mut w: impl Write) -> io::Result<()> {
    w.write_all(log_to_csv(rows).as_bytes())
}
