//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; unknown and repeated keys are errors. Angles are in degrees and
//! step sizes also accept a fraction such as `5/255`. Placement keys accept
//! `auto`, meaning the nominal value for the face size.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::attack::{AttackConfig, JitterSpec, StageConfig, StickerInit};
use crate::embedder::{EmbedderConfig, EmbedderKind, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::evaluation::{DEFAULT_GALLERY_SIZE, DEFAULT_THRESHOLD};
use crate::geometry::{BendPitchParams, StickerSpec};
use crate::render::{FACE_SIZE, TEMPLATE_SIZE};

/// One embedder of the evaluation ensemble, written `kind:seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedderRef {
    pub kind: EmbedderKind,
    pub seed: u32,
}

impl std::fmt::Display for EmbedderRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.kind, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub embedder: EmbedderKind,
    pub embedder_seed: u32,
    pub embedding_dim: usize,

    pub sticker_height: usize,
    pub sticker_width: usize,
    pub init: StickerInit,

    pub lambda_tv: f64,
    pub stage1_step: f64,
    pub stage1_momentum: f64,
    pub stage1_min_iters: usize,
    pub stage2_step: f64,
    pub stage2_momentum: f64,
    pub stage2_min_iters: usize,
    pub window: usize,
    pub max_iters: usize,

    pub batch_size: usize,
    pub jitter_seed: u64,
    pub jitter_bend_frac: f64,
    pub jitter_pitch_deg: f64,
    pub jitter_place_px: f64,
    pub jitter_place_deg: f64,
    pub jitter_place_scale_frac: f64,
    pub jitter_tmpl_px: f64,
    pub jitter_tmpl_deg: f64,
    pub jitter_tmpl_scale_frac: f64,

    /// photograph to attack; ignored when `synthetic_face` is set
    pub face: Option<PathBuf>,
    pub synthetic_face: Option<u64>,
    pub face_size: usize,

    pub bend: f64,
    pub pitch_deg: f64,
    pub place_scale: Option<f64>,
    pub place_deg: f64,
    pub place_x: Option<f64>,
    pub place_y: Option<f64>,
    pub tmpl_scale: Option<f64>,
    pub tmpl_deg: f64,
    pub tmpl_x: f64,
    pub tmpl_y: f64,

    pub gallery_size: usize,
    pub gallery_seed: u64,
    pub threshold: f64,
    /// evaluation ensemble; empty means the attacked embedder only
    pub eval_embedders: Vec<EmbedderRef>,

    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let attack = AttackConfig::default();
        Self {
            embedder: EmbedderKind::ToyCnn,
            embedder_seed: 1,
            embedding_dim: DEFAULT_DIM,
            sticker_height: StickerSpec::default().tex_height,
            sticker_width: StickerSpec::default().tex_width,
            init: attack.init,
            lambda_tv: attack.lambda_tv,
            stage1_step: attack.stage1.step,
            stage1_momentum: attack.stage1.momentum,
            stage1_min_iters: attack.stage1.min_iters,
            stage2_step: attack.stage2.step,
            stage2_momentum: attack.stage2.momentum,
            stage2_min_iters: attack.stage2.min_iters,
            window: attack.window,
            max_iters: attack.max_iters,
            batch_size: 8,
            jitter_seed: 1,
            jitter_bend_frac: 0.1,
            jitter_pitch_deg: 3.0,
            jitter_place_px: 2.0,
            jitter_place_deg: 2.0,
            jitter_place_scale_frac: 0.02,
            jitter_tmpl_px: 1.0,
            jitter_tmpl_deg: 1.0,
            jitter_tmpl_scale_frac: 0.01,
            face: None,
            synthetic_face: None,
            face_size: FACE_SIZE,
            bend: 0.4,
            pitch_deg: 20.0,
            place_scale: None,
            place_deg: 0.0,
            place_x: None,
            place_y: None,
            tmpl_scale: None,
            tmpl_deg: 0.0,
            tmpl_x: 0.0,
            tmpl_y: 0.0,
            gallery_size: DEFAULT_GALLERY_SIZE,
            gallery_seed: 1,
            threshold: DEFAULT_THRESHOLD,
            eval_embedders: Vec::new(),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    let parsed = match v.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|e| format!("{e}"))?;
            let d: f64 = d.trim().parse().map_err(|e| format!("{e}"))?;
            n / d
        }
        None => v.parse().map_err(|e| format!("{e}"))?,
    };
    if parsed.is_finite() {
        Ok(parsed)
    } else {
        Err(format!("{v:?} is not finite"))
    }
}

fn parse_int<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_auto(v: &str) -> std::result::Result<Option<f64>, String> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_f64(v).map(Some)
    }
}

fn parse_init(v: &str) -> std::result::Result<StickerInit, String> {
    match v.split_once(':') {
        None if v == "gray" => Ok(StickerInit::Gray),
        Some(("random", seed)) => parse_int(seed).map(StickerInit::Random),
        _ => Err(format!("expected gray or random:SEED, got {v:?}")),
    }
}

fn parse_embedders(v: &str) -> std::result::Result<Vec<EmbedderRef>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (kind, seed) = item
                .split_once(':')
                .ok_or_else(|| format!("expected kind:seed, got {item:?}"))?;
            Ok(EmbedderRef {
                kind: kind.parse().map_err(|e: Error| e.to_string())?,
                seed: parse_int(seed)?,
            })
        })
        .collect()
}

fn show_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Config { line: line_no, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "embedder" => self.embedder = v.parse().map_err(|e: Error| e.to_string())?,
            "embedder_seed" => self.embedder_seed = parse_int(v)?,
            "embedding_dim" => self.embedding_dim = parse_int(v)?,
            "sticker_height" => self.sticker_height = parse_int(v)?,
            "sticker_width" => self.sticker_width = parse_int(v)?,
            "init" => self.init = parse_init(v)?,
            "lambda_tv" => self.lambda_tv = parse_f64(v)?,
            "stage1_step" => self.stage1_step = parse_f64(v)?,
            "stage1_momentum" => self.stage1_momentum = parse_f64(v)?,
            "stage1_min_iters" => self.stage1_min_iters = parse_int(v)?,
            "stage2_step" => self.stage2_step = parse_f64(v)?,
            "stage2_momentum" => self.stage2_momentum = parse_f64(v)?,
            "stage2_min_iters" => self.stage2_min_iters = parse_int(v)?,
            "window" => self.window = parse_int(v)?,
            "max_iters" => self.max_iters = parse_int(v)?,
            "batch_size" => self.batch_size = parse_int(v)?,
            "jitter_seed" => self.jitter_seed = parse_int(v)?,
            "jitter_bend_frac" => self.jitter_bend_frac = parse_f64(v)?,
            "jitter_pitch_deg" => self.jitter_pitch_deg = parse_f64(v)?,
            "jitter_place_px" => self.jitter_place_px = parse_f64(v)?,
            "jitter_place_deg" => self.jitter_place_deg = parse_f64(v)?,
            "jitter_place_scale_frac" => self.jitter_place_scale_frac = parse_f64(v)?,
            "jitter_tmpl_px" => self.jitter_tmpl_px = parse_f64(v)?,
            "jitter_tmpl_deg" => self.jitter_tmpl_deg = parse_f64(v)?,
            "jitter_tmpl_scale_frac" => self.jitter_tmpl_scale_frac = parse_f64(v)?,
            "face" => self.face = (!v.is_empty()).then(|| PathBuf::from(v)),
            "synthetic_face" => {
                self.synthetic_face = if v.is_empty() { None } else { Some(parse_int(v)?) }
            }
            "face_size" => self.face_size = parse_int(v)?,
            "bend" => self.bend = parse_f64(v)?,
            "pitch_deg" => self.pitch_deg = parse_f64(v)?,
            "place_scale" => self.place_scale = parse_auto(v)?,
            "place_deg" => self.place_deg = parse_f64(v)?,
            "place_x" => self.place_x = parse_auto(v)?,
            "place_y" => self.place_y = parse_auto(v)?,
            "tmpl_scale" => self.tmpl_scale = parse_auto(v)?,
            "tmpl_deg" => self.tmpl_deg = parse_f64(v)?,
            "tmpl_x" => self.tmpl_x = parse_f64(v)?,
            "tmpl_y" => self.tmpl_y = parse_f64(v)?,
            "gallery_size" => self.gallery_size = parse_int(v)?,
            "gallery_seed" => self.gallery_seed = parse_int(v)?,
            "threshold" => self.threshold = parse_f64(v)?,
            "eval_embedders" => self.eval_embedders = parse_embedders(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let init = match self.init {
            StickerInit::Gray => "gray".to_string(),
            StickerInit::Random(s) => format!("random:{s}"),
        };
        let ensemble: Vec<String> = self.eval_embedders.iter().map(|e| e.to_string()).collect();
        vec![
            ("embedder", self.embedder.to_string()),
            ("embedder_seed", self.embedder_seed.to_string()),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("sticker_height", self.sticker_height.to_string()),
            ("sticker_width", self.sticker_width.to_string()),
            ("init", init),
            ("lambda_tv", self.lambda_tv.to_string()),
            ("stage1_step", self.stage1_step.to_string()),
            ("stage1_momentum", self.stage1_momentum.to_string()),
            ("stage1_min_iters", self.stage1_min_iters.to_string()),
            ("stage2_step", self.stage2_step.to_string()),
            ("stage2_momentum", self.stage2_momentum.to_string()),
            ("stage2_min_iters", self.stage2_min_iters.to_string()),
            ("window", self.window.to_string()),
            ("max_iters", self.max_iters.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("jitter_seed", self.jitter_seed.to_string()),
            ("jitter_bend_frac", self.jitter_bend_frac.to_string()),
            ("jitter_pitch_deg", self.jitter_pitch_deg.to_string()),
            ("jitter_place_px", self.jitter_place_px.to_string()),
            ("jitter_place_deg", self.jitter_place_deg.to_string()),
            ("jitter_place_scale_frac", self.jitter_place_scale_frac.to_string()),
            ("jitter_tmpl_px", self.jitter_tmpl_px.to_string()),
            ("jitter_tmpl_deg", self.jitter_tmpl_deg.to_string()),
            ("jitter_tmpl_scale_frac", self.jitter_tmpl_scale_frac.to_string()),
            ("face", path(&self.face)),
            ("synthetic_face", self.synthetic_face.map_or(String::new(), |s| s.to_string())),
            ("face_size", self.face_size.to_string()),
            ("bend", self.bend.to_string()),
            ("pitch_deg", self.pitch_deg.to_string()),
            ("place_scale", show_auto(self.place_scale)),
            ("place_deg", self.place_deg.to_string()),
            ("place_x", show_auto(self.place_x)),
            ("place_y", show_auto(self.place_y)),
            ("tmpl_scale", show_auto(self.tmpl_scale)),
            ("tmpl_deg", self.tmpl_deg.to_string()),
            ("tmpl_x", self.tmpl_x.to_string()),
            ("tmpl_y", self.tmpl_y.to_string()),
            ("gallery_size", self.gallery_size.to_string()),
            ("gallery_seed", self.gallery_seed.to_string()),
            ("threshold", self.threshold.to_string()),
            ("eval_embedders", ensemble.join(",")),
            ("out_dir", self.out_dir.display().to_string()),
        ]
    }

    /// Canonical text form; [`RunConfig::parse`] of it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.sticker_spec()?;
        self.attack_config().validate()?;
        self.jitter_spec(self.face_size, self.face_size).validate()?;
        self.embedder_config().validate()?;
        if self.gallery_size == 0 {
            return Err(Error::InvalidParams("gallery_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidParams("threshold must lie in [0, 1]".into()));
        }
        if self.face_size < 2 {
            return Err(Error::InvalidParams("face_size must be at least 2".into()));
        }
        Ok(())
    }

    pub fn sticker_spec(&self) -> Result<StickerSpec> {
        StickerSpec::new(self.sticker_height, self.sticker_width)
    }

    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            lambda_tv: self.lambda_tv,
            stage1: StageConfig {
                step: self.stage1_step,
                momentum: self.stage1_momentum,
                min_iters: self.stage1_min_iters,
            },
            stage2: StageConfig {
                step: self.stage2_step,
                momentum: self.stage2_momentum,
                min_iters: self.stage2_min_iters,
            },
            window: self.window,
            max_iters: self.max_iters,
            init: self.init,
            threads: 0,
        }
    }

    pub fn embedder_config(&self) -> EmbedderConfig {
        EmbedderConfig {
            kind: self.embedder,
            seed: self.embedder_seed,
            input: TEMPLATE_SIZE,
            dim: self.embedding_dim,
        }
    }

    /// The evaluation ensemble, defaulting to the attacked embedder.
    pub fn eval_embedder_configs(&self) -> Vec<EmbedderConfig> {
        if self.eval_embedders.is_empty() {
            return vec![self.embedder_config()];
        }
        self.eval_embedders
            .iter()
            .map(|r| EmbedderConfig {
                kind: r.kind,
                seed: r.seed,
                ..self.embedder_config()
            })
            .collect()
    }

    /// Un-jittered transformation for a `face_h × face_w` photo.
    pub fn base_params(&self, face_h: usize, face_w: usize) -> BendPitchParams {
        let nominal = BendPitchParams::nominal(face_h, face_w, TEMPLATE_SIZE);
        BendPitchParams {
            a: self.bend,
            phi: self.pitch_deg.to_radians(),
            place_scale: self.place_scale.unwrap_or(nominal.place_scale),
            place_theta: self.place_deg.to_radians(),
            place_tx: self.place_x.unwrap_or(nominal.place_tx),
            place_ty: self.place_y.unwrap_or(nominal.place_ty),
            tmpl_scale: self.tmpl_scale.unwrap_or(nominal.tmpl_scale),
            tmpl_theta: self.tmpl_deg.to_radians(),
            tmpl_tx: self.tmpl_x,
            tmpl_ty: self.tmpl_y,
        }
    }

    pub fn jitter_spec(&self, face_h: usize, face_w: usize) -> JitterSpec {
        let base = self.base_params(face_h, face_w);
        JitterSpec {
            half: BendPitchParams {
                a: self.jitter_bend_frac * base.a,
                phi: self.jitter_pitch_deg.to_radians(),
                place_scale: self.jitter_place_scale_frac * base.place_scale,
                place_theta: self.jitter_place_deg.to_radians(),
                place_tx: self.jitter_place_px,
                place_ty: self.jitter_place_px,
                tmpl_scale: self.jitter_tmpl_scale_frac * base.tmpl_scale,
                tmpl_theta: self.jitter_tmpl_deg.to_radians(),
                tmpl_tx: self.jitter_tmpl_px,
                tmpl_ty: self.jitter_tmpl_px,
            },
            base,
            batch_size: self.batch_size,
            seed: self.jitter_seed,
        }
    }
}
