//! Writes the deterministic weights of an embedder and reloads them.
//!
//! Usage: `weight_dump [toy_cnn|linear] [SEED] [PATH]`.

use advsticker::{Embedder, EmbedderConfig, EmbedderKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let kind: EmbedderKind = args.next().as_deref().unwrap_or("toy_cnn").parse()?;
    let seed: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let path = args.next().unwrap_or_else(|| format!("out/{kind}_{seed}.bin"));
    if let Some(parent) = std::path::Path::new(&path).parent() {
        std::fs::create_dir_all(parent)?;
    }

    let embedder = Embedder::new(EmbedderConfig::new(kind, seed))?;
    embedder.save_weights(&path)?;
    let reloaded = Embedder::load_weights(&path, embedder.config().input)?;
    let w = embedder.weights();
    let rms = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
    println!(
        "{}: {} weights, rms {rms:.5}, reload identical: {}",
        embedder.label(),
        w.len(),
        reloaded.weights() == w
    );
    println!("wrote {path}");
    Ok(())
}
