//! Evaluates one sticker against several embedders.
//!
//! Usage: `transfer STICKER.ppm [FACE_SEED]`. Without a sticker, a random
//! noise sticker is used, which shows the baseline behaviour.

use advsticker::attack::{initial_sticker, StickerInit};
use advsticker::evaluation::{mean_transfer_drop, reports_to_csv, transfer_eval, FacePair};
use advsticker::render::{FACE_SIZE, TEMPLATE_SIZE};
use advsticker::synth::synthetic_face;
use advsticker::{load_ppm, BendPitchParams, Embedder, EmbedderConfig, EmbedderKind, StickerSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let sticker_path = args.next();
    let face_seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let sticker = match sticker_path {
        Some(p) => load_ppm(p)?,
        None => initial_sticker(StickerSpec::default(), StickerInit::Random(7)),
    };
    let spec = StickerSpec::new(sticker.height(), sticker.width())?;
    let base = BendPitchParams::nominal(FACE_SIZE, FACE_SIZE, TEMPLATE_SIZE);
    let faces = FacePair::new(synthetic_face(face_seed, FACE_SIZE), spec, &base)?;
    let embedders = [
        (EmbedderKind::ToyCnn, 1),
        (EmbedderKind::ToyCnn, 2),
        (EmbedderKind::ToyCnn, 3),
        (EmbedderKind::Linear, 1),
    ]
    .into_iter()
    .map(|(k, s)| Embedder::new(EmbedderConfig::new(k, s)))
    .collect::<advsticker::Result<Vec<_>>>()?;

    let reports = transfer_eval(&sticker, &faces, &base, &embedders, Some(0), 200, 1, 0.328)?;
    print!("{}", reports_to_csv(&reports));
    if let Some(m) = mean_transfer_drop(&reports) {
        println!("mean drop on non-source embedders: {m:.4}");
    }
    Ok(())
}
