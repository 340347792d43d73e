//! Attack against a linear embedder on a small scene.
//!
//! With no jitter and no TV term the loss is a smooth function of the
//! sticker, so the validation similarity should fall steadily.

use advsticker::attack::{Attack, AttackConfig, JitterSpec};
use advsticker::evaluation::{anchor_embedding, FacePair};
use advsticker::synth::synthetic_face;
use advsticker::{BendPitchParams, Embedder, EmbedderConfig, EmbedderKind, StickerSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = StickerSpec::new(10, 22)?;
    let base = BendPitchParams::nominal(40, 40, 16);
    let faces = FacePair::new(synthetic_face(1, 40), spec, &base)?;
    let embedder = Embedder::new(EmbedderConfig {
        input: 16,
        dim: 16,
        ..EmbedderConfig::new(EmbedderKind::Linear, 1)
    })?;
    let anchor = anchor_embedding(&embedder, &faces.clean, &base)?;
    let config = AttackConfig {
        lambda_tv: 0.0,
        max_iters: 60,
        ..AttackConfig::default()
    };
    let attack = Attack::new(config, JitterSpec::fixed(base, 1), spec, &faces.hat_plain, &embedder, anchor)?;
    let out = attack.run_with(|row| {
        if row.iter % 10 == 0 {
            println!("iter {:>3} stage {} val_sim {:.6}", row.iter, row.stage, row.val_sim);
        }
    })?;
    println!(
        "{} after {} iterations, final val_sim {:.6}",
        out.termination,
        out.log.len(),
        out.final_val_sim().unwrap_or(f64::NAN)
    );
    Ok(())
}
