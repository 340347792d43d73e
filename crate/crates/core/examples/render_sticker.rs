//! Renders a checkerboard sticker onto a synthetic face.
//!
//! Writes the full-resolution composite and the 112×112 template to the
//! directory given as the first argument (default `out/render_sticker`).

use std::path::PathBuf;

use advsticker::render::{composite_face, TEMPLATE_SIZE};
use advsticker::synth::synthetic_face;
use advsticker::{render, save_ppm, BendPitchParams, ImageBuffer, StickerSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/render_sticker".into()));
    std::fs::create_dir_all(&dir)?;

    let spec = StickerSpec::default();
    let sticker = ImageBuffer::from_fn(spec.tex_height, spec.tex_width, 3, |r, c, k| {
        let on = (r / 50 + c / 50) % 2 == 0;
        match (on, k) {
            (true, 0) => 0.9,
            (true, _) => 0.1,
            (false, _) => 0.95,
        }
    });
    let face = synthetic_face(1, 600);
    for a in [0.0, 0.4, 0.8] {
        let p = BendPitchParams {
            a,
            ..BendPitchParams::nominal(600, 600, TEMPLATE_SIZE)
        };
        let (full, mask) = composite_face(&sticker, &face, &p)?;
        let tmpl = render(&sticker, &face, &p)?;
        let covered = mask.iter().filter(|m| **m).count();
        println!("a = {a:.1}: sticker covers {covered} face pixels");
        save_ppm(&full, dir.join(format!("face_a{a:.1}.ppm")))?;
        save_ppm(&tmpl, dir.join(format!("template_a{a:.1}.ppm")))?;
    }
    println!("wrote {}", dir.display());
    Ok(())
}
