//! Full desk-scale attack of one synthetic identity against toy_cnn.
//!
//! Usage: `desk_attack [FACE_SEED] [OUT_DIR]`. Takes a minute or two on one
//! core. Set `ADVSTICKER_THREADS` to spread the batch over more threads.

use std::path::PathBuf;

use advsticker::attack::{log_to_csv, Attack};
use advsticker::config::RunConfig;
use advsticker::evaluation::{anchor_embedding, build_gallery, evaluate, FacePair};
use advsticker::render::FACE_SIZE;
use advsticker::synth::synthetic_face;
use advsticker::{save_ppm, Embedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let face_seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "out/desk_attack".into()));
    std::fs::create_dir_all(&dir)?;

    let cfg = RunConfig::default();
    let spec = cfg.sticker_spec()?;
    let base = cfg.base_params(FACE_SIZE, FACE_SIZE);
    let mut attack_cfg = cfg.attack_config();
    attack_cfg.threads = std::env::var("ADVSTICKER_THREADS").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    let embedder = Embedder::new(cfg.embedder_config())?;
    let faces = FacePair::new(synthetic_face(face_seed, FACE_SIZE), spec, &base)?;
    let anchor = anchor_embedding(&embedder, &faces.clean, &base)?;

    let attack = Attack::new(
        attack_cfg,
        cfg.jitter_spec(FACE_SIZE, FACE_SIZE),
        spec,
        &faces.hat_plain,
        &embedder,
        anchor,
    )?;
    let out = attack.run_with(|row| {
        if row.iter % 50 == 0 {
            eprintln!("iter {:>4} stage {} loss {:.5} val {:.5}", row.iter, row.stage, row.loss_total, row.val_sim);
        }
    })?;

    let gallery = build_gallery(&embedder, cfg.gallery_size, cfg.gallery_seed)?;
    let report = evaluate(&out.sticker, &faces.clean, &faces.hat_plain, &base, &embedder, &gallery, cfg.threshold)?;
    println!(
        "{} after {} iterations (stage 2 from {:?})",
        out.termination,
        out.log.len(),
        out.stage2_start
    );
    println!(
        "similarity {:.4} -> {:.4} (drop {:.4}), nearest gallery identity {:.4}, recognized {} -> {}",
        report.baseline_sim,
        report.final_sim,
        report.drop,
        report.top1_gallery_sim,
        report.recognized_baseline,
        report.recognized_final
    );
    save_ppm(&out.sticker, dir.join("sticker.ppm"))?;
    std::fs::write(dir.join("loss_log.csv"), log_to_csv(&out.log))?;
    println!("wrote {}", dir.display());
    Ok(())
}
