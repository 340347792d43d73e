//! Attack metrics: baseline and final similarity to the clean anchor, the
//! drop between them, and the best match in a synthetic identity gallery.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::fmt_sig9;
use crate::embedder::{cosine_sim, Embedder, Embedding};
use crate::error::{Error, Result};
use crate::geometry::{BendPitchParams, StickerSpec};
use crate::image::ImageBuffer;
use crate::render::{composite_face, face_template, render_with};
use crate::rng::mix64;
use crate::synth::synthetic_face;

/// Gray level of the plain hat used for the baseline photo.
pub const HAT_GRAY: f64 = 0.2;
pub const DEFAULT_THRESHOLD: f64 = 0.328;
pub const DEFAULT_GALLERY_SIZE: usize = 1000;

/// Synthetic identities embedded once by one embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gallery {
    pub entries: Vec<(String, Embedding)>,
    pub seed: u64,
}

impl Gallery {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest cosine similarity between `query` and any entry.
    pub fn top1(&self, query: &Embedding) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for (_, e) in &self.entries {
            best = best.max(cosine_sim(query, e)?);
        }
        Ok(best)
    }
}

/// Face seed of gallery entry `index`; kept away from small identity seeds.
pub fn gallery_face_seed(seed: u64, index: usize) -> u64 {
    mix64(seed ^ 0xA11E_5EED_0000_0000 ^ index as u64)
}

/// `n` synthetic identities at the embedder's input size.
pub fn build_gallery(embedder: &Embedder, n: usize, seed: u64) -> Result<Gallery> {
    if n == 0 {
        return Err(Error::InvalidParams("gallery needs at least one identity".into()));
    }
    let size = embedder.config().input;
    let entries = (0..n)
        .into_par_iter()
        .map(|i| {
            let img = synthetic_face(gallery_face_seed(seed, i), size);
            embedder.embed(&img).map(|e| (format!("gallery-{i}"), e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Gallery { entries, seed })
}

/// The face with a uniform dark-gray sticker at the given parameters.
pub fn hat_plain_face(
    face: &ImageBuffer,
    spec: StickerSpec,
    params: &BendPitchParams,
) -> Result<ImageBuffer> {
    let hat = ImageBuffer::filled(spec.tex_height, spec.tex_width, 3, HAT_GRAY);
    composite_face(&hat, face, params).map(|(img, _)| img)
}

/// A clean photo and the same photo wearing the plain hat.
#[derive(Debug, Clone)]
pub struct FacePair {
    pub clean: ImageBuffer,
    pub hat_plain: ImageBuffer,
}

impl FacePair {
    pub fn new(clean: ImageBuffer, spec: StickerSpec, params: &BendPitchParams) -> Result<Self> {
        let hat_plain = hat_plain_face(&clean, spec, params)?;
        Ok(Self { clean, hat_plain })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub embedder: String,
    /// whether the sticker was optimized against this embedder
    pub source: bool,
    pub baseline_sim: f64,
    pub final_sim: f64,
    pub drop: f64,
    pub top1_gallery_sim: f64,
    pub threshold: f64,
    pub recognized_baseline: bool,
    pub recognized_final: bool,
}

/// Anchor embedding of the clean photo.
pub fn anchor_embedding(
    embedder: &Embedder,
    face_clean: &ImageBuffer,
    params: &BendPitchParams,
) -> Result<Embedding> {
    embedder.embed(&face_template(face_clean, params, embedder.config().input)?)
}

pub fn evaluate(
    sticker: &ImageBuffer,
    face_clean: &ImageBuffer,
    face_hat_plain: &ImageBuffer,
    params: &BendPitchParams,
    embedder: &Embedder,
    gallery: &Gallery,
    threshold: f64,
) -> Result<AttackReport> {
    face_clean.check_shape(face_hat_plain, "hat-plain face")?;
    let tmpl = embedder.config().input;
    let anchor = anchor_embedding(embedder, face_clean, params)?;
    let baseline = embedder.embed(&face_template(face_hat_plain, params, tmpl)?)?;
    let attacked = embedder.embed(&render_with(sticker, face_hat_plain, params, tmpl)?)?;
    let baseline_sim = cosine_sim(&anchor, &baseline)?;
    let final_sim = cosine_sim(&anchor, &attacked)?;
    Ok(AttackReport {
        embedder: embedder.config().label(),
        source: false,
        baseline_sim,
        final_sim,
        drop: baseline_sim - final_sim,
        top1_gallery_sim: gallery.top1(&attacked)?,
        threshold,
        recognized_baseline: baseline_sim >= threshold,
        recognized_final: final_sim >= threshold,
    })
}

/// [`evaluate`] against every embedder in order, each with its own gallery
/// of `gallery_size` identities drawn from `gallery_seed`.
pub fn transfer_eval(
    sticker: &ImageBuffer,
    faces: &FacePair,
    params: &BendPitchParams,
    embedders: &[Embedder],
    source: Option<usize>,
    gallery_size: usize,
    gallery_seed: u64,
    threshold: f64,
) -> Result<Vec<AttackReport>> {
    if let Some(s) = source {
        if s >= embedders.len() {
            return Err(Error::InvalidParams(format!(
                "source index {s} with {} embedders",
                embedders.len()
            )));
        }
    }
    embedders
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let gallery = build_gallery(e, gallery_size, gallery_seed)?;
            let mut report = evaluate(
                sticker,
                &faces.clean,
                &faces.hat_plain,
                params,
                e,
                &gallery,
                threshold,
            )?;
            report.source = source == Some(i);
            Ok(report)
        })
        .collect()
}

/// Mean drop over the reports not marked as source.
pub fn mean_transfer_drop(reports: &[AttackReport]) -> Option<f64> {
    let drops: Vec<f64> = reports.iter().filter(|r| !r.source).map(|r| r.drop).collect();
    (!drops.is_empty()).then(|| drops.iter().sum::<f64>() / drops.len() as f64)
}

pub const REPORT_HEADER: &str = "embedder,source,baseline_sim,final_sim,drop,top1_gallery_sim,threshold,recognized_baseline,recognized_final";

pub fn reports_to_csv(reports: &[AttackReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.embedder,
            r.source,
            fmt_sig9(r.baseline_sim),
            fmt_sig9(r.final_sim),
            fmt_sig9(r.drop),
            fmt_sig9(r.top1_gallery_sim),
            fmt_sig9(r.threshold),
            r.recognized_baseline,
            r.recognized_final
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reports: Vec<AttackReport>,
    pub mean_drop: f64,
    pub mean_transfer_drop: Option<f64>,
}

impl Summary {
    pub fn new(reports: Vec<AttackReport>) -> Self {
        let mean_drop = reports.iter().map(|r| r.drop).sum::<f64>() / reports.len().max(1) as f64;
        let mean_transfer_drop = mean_transfer_drop(&reports);
        Self {
            reports,
            mean_drop,
            mean_transfer_drop,
        }
    }

    pub fn write_json(&self, w: impl Write) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }
}
