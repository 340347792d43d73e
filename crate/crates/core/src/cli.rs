//! The `advsticker` command line.
//!
//! ```text
//! advsticker <attack|eval|gradcheck|render> [CONFIG] [--config PATH]
//!            [--sticker PATH] [--out DIR] [--synthetic-face SEED]
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O or input error,
//! 4 numerical failure, 5 gradient check failure. `ADVSTICKER_THREADS`
//! caps internal parallelism (0 = serial).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attack::{log_to_csv, Attack};
use crate::config::RunConfig;
use crate::embedder::{cosine_sim, Embedder};
use crate::error::Error;
use crate::evaluation::{self, anchor_embedding, FacePair, Summary};
use crate::gradcheck::{self, GradcheckOptions, Scale};
use crate::image::ImageBuffer;
use crate::ppm::{load_ppm, save_ppm};
use crate::render::{composite_face, face_template, render_with, TEMPLATE_SIZE};
use crate::synth::synthetic_face;

pub const THREADS_ENV: &str = "ADVSTICKER_THREADS";

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_GRADCHECK: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "advsticker", version, about = "Adversarial hat-sticker optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a sticker and write it with its loss log and run manifest
    Attack(CommonArgs),
    /// Score a sticker against one or more embedders
    Eval(CommonArgs),
    /// Check every gradient against finite differences
    Gradcheck(GradcheckArgs),
    /// Write the composited face and the recognition template
    Render(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Config file (same as --config)
    #[arg(value_name = "CONFIG")]
    pub config_file: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sticker: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the seeded synthetic face instead of a photograph
    #[arg(long, value_name = "SEED")]
    pub synthetic_face: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "reduced", value_parser = ["reduced", "full"])]
    pub scale: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Corrupt one component's analytic gradient
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

/// A failed command: message and process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config { .. } | Error::InvalidParams(_) | Error::UnknownKind(_) => EXIT_CONFIG,
            Error::NonFinite(_) | Error::ZeroNorm(_) => EXIT_NUMERIC,
            _ => EXIT_IO,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Worker threads from `ADVSTICKER_THREADS`; unset means serial.
pub fn threads_from_env() -> std::result::Result<usize, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| config_failure(format!("{THREADS_ENV}={v:?} is not a thread count"))),
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn run(cli: Cli) -> CmdResult {
    let threads = threads_from_env()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| config_failure(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Attack(a) => cmd_attack(&a, threads),
        Command::Eval(a) => cmd_eval(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Render(a) => cmd_render(&a),
    })
}

/// Config with command-line overrides applied.
fn resolve_config(args: &CommonArgs) -> std::result::Result<RunConfig, Failure> {
    let path = match (&args.config_file, &args.config) {
        (Some(_), Some(_)) => return Err(config_failure("config given both positionally and with --config")),
        (Some(p), None) | (None, Some(p)) => Some(p),
        (None, None) => None,
    };
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.synthetic_face {
        cfg.synthetic_face = Some(seed);
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn load_face(cfg: &RunConfig) -> std::result::Result<ImageBuffer, Failure> {
    if let Some(seed) = cfg.synthetic_face {
        return Ok(synthetic_face(seed, cfg.face_size));
    }
    match &cfg.face {
        Some(p) => Ok(load_ppm(p)?),
        None => Err(config_failure("no face: set `face` or `synthetic_face`, or pass --synthetic-face")),
    }
}

fn load_sticker(args: &CommonArgs, cfg: &RunConfig) -> std::result::Result<ImageBuffer, Failure> {
    let path = args
        .sticker
        .as_ref()
        .ok_or_else(|| config_failure("--sticker is required"))?;
    let sticker = load_ppm(path)?;
    let spec = cfg.sticker_spec()?;
    if (sticker.height(), sticker.width()) != (spec.tex_height, spec.tex_width) {
        return Err(Error::Shape(format!(
            "sticker {} is {}x{}, config expects {}x{}",
            path.display(),
            sticker.height(),
            sticker.width(),
            spec.tex_height,
            spec.tex_width
        ))
        .into());
    }
    Ok(sticker)
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn prepare_out_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn face_description(cfg: &RunConfig) -> String {
    match (cfg.synthetic_face, &cfg.face) {
        (Some(seed), _) => format!("synthetic:{seed}"),
        (None, Some(p)) => p.display().to_string(),
        (None, None) => "none".into(),
    }
}

fn cmd_attack(args: &CommonArgs, threads: usize) -> CmdResult {
    let cfg = resolve_config(args)?;
    let face = load_face(&cfg)?;
    let spec = cfg.sticker_spec()?;
    let jitter = cfg.jitter_spec(face.height(), face.width());
    let base = jitter.base;
    let embedder = Embedder::new(cfg.embedder_config())?;
    let faces = FacePair::new(face, spec, &base)?;
    let anchor = anchor_embedding(&embedder, &faces.clean, &base)?;
    let baseline = cosine_sim(
        &anchor,
        &embedder.embed(&face_template(&faces.hat_plain, &base, TEMPLATE_SIZE)?)?,
    )?;
    let attack_cfg = crate::attack::AttackConfig {
        threads,
        ..cfg.attack_config()
    };
    let attack = Attack::new(attack_cfg, jitter, spec, &faces.hat_plain, &embedder, anchor)?;
    let outcome = attack.run_with(|row| {
        if row.iter % 100 == 0 {
            eprintln!(
                "iter {:>5} stage {} loss_sim {:.4} val_sim {:.4}",
                row.iter, row.stage, row.loss_sim, row.val_sim
            );
        }
    })?;

    prepare_out_dir(&cfg.out_dir)?;
    let sticker_path = cfg.out_dir.join("sticker.ppm");
    save_ppm(&outcome.sticker, &sticker_path)?;
    write_file(&cfg.out_dir.join("loss_log.csv"), log_to_csv(&outcome.log).as_bytes())?;

    let final_sim = outcome.final_val_sim().unwrap_or(baseline);
    let mut manifest = cfg.to_text();
    manifest.push_str("# run\n");
    for (k, v) in [
        ("command", "attack".to_string()),
        ("embedder_label", embedder.config().label()),
        ("face_source", face_description(&cfg)),
        ("termination", outcome.termination.to_string()),
        ("iterations", outcome.log.len().to_string()),
        (
            "stage2_start",
            outcome.stage2_start.map_or("none".into(), |s| s.to_string()),
        ),
        ("zero_grad_steps", outcome.zero_grad_steps.to_string()),
        ("baseline_sim", crate::attack::fmt_sig9(baseline)),
        ("final_val_sim", crate::attack::fmt_sig9(final_sim)),
    ] {
        manifest.push_str(&format!("# {k} = {v}\n"));
    }
    write_file(&cfg.out_dir.join("manifest.txt"), manifest.as_bytes())?;
    println!(
        "{}: {} after {} iterations, val_sim {:.4} (baseline {:.4}); wrote {}",
        embedder.config().label(),
        outcome.termination,
        outcome.log.len(),
        final_sim,
        baseline,
        cfg.out_dir.display()
    );
    Ok(())
}

fn cmd_eval(args: &CommonArgs) -> CmdResult {
    let cfg = resolve_config(args)?;
    let face = load_face(&cfg)?;
    let sticker = load_sticker(args, &cfg)?;
    let spec = cfg.sticker_spec()?;
    let base = cfg.base_params(face.height(), face.width());
    let faces = FacePair::new(face, spec, &base)?;
    let embedders = cfg
        .eval_embedder_configs()
        .into_iter()
        .map(Embedder::new)
        .collect::<crate::error::Result<Vec<_>>>()?;
    let source_label = cfg.embedder_config().label();
    let source = embedders.iter().position(|e| e.config().label() == source_label);
    let reports = evaluation::transfer_eval(
        &sticker,
        &faces,
        &base,
        &embedders,
        source,
        cfg.gallery_size,
        cfg.gallery_seed,
        cfg.threshold,
    )?;
    prepare_out_dir(&cfg.out_dir)?;
    let csv = evaluation::reports_to_csv(&reports);
    write_file(&cfg.out_dir.join("report.csv"), csv.as_bytes())?;
    let mut json = Vec::new();
    Summary::new(reports)
        .write_json(&mut json)
        .map_err(|e| config_failure(format!("summary serialization: {e}")))?;
    json.push(b'\n');
    write_file(&cfg.out_dir.join("summary.json"), &json)?;
    print!("{csv}");
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> CmdResult {
    let opts = GradcheckOptions {
        scale: args.scale.parse::<Scale>()?,
        seed: args.seed,
        fault: args.inject_fault.clone(),
    };
    let results = gradcheck::run(&opts)?;
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_GRADCHECK,
            message: format!("gradient check failed for {}", failed.join(", ")),
        })
    }
}

fn cmd_render(args: &CommonArgs) -> CmdResult {
    let cfg = resolve_config(args)?;
    let face = load_face(&cfg)?;
    let sticker = load_sticker(args, &cfg)?;
    let base = cfg.base_params(face.height(), face.width());
    let (composited, _) = composite_face(&sticker, &face, &base)?;
    let template = render_with(&sticker, &face, &base, TEMPLATE_SIZE)?;
    prepare_out_dir(&cfg.out_dir)?;
    save_ppm(&composited, cfg.out_dir.join("face.ppm"))?;
    save_ppm(&template, cfg.out_dir.join("template.ppm"))?;
    println!("wrote face.ppm and template.ppm to {}", cfg.out_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::from(Error::Config { line: 1, msg: "x".into() }).code, EXIT_CONFIG);
        assert_eq!(Failure::from(Error::NonFinite("x")).code, EXIT_NUMERIC);
        assert_eq!(Failure::from(Error::PpmMaxval(7)).code, EXIT_IO);
    }

    #[test]
    fn usage_errors_exit_with_config_code() {
        assert_eq!(main_with_args(["advsticker", "fly"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["advsticker", "gradcheck", "--scale", "huge"]), EXIT_CONFIG);
    }
}
