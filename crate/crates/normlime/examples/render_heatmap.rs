//! Renders a salience map to a binary PGM, decodes it back, and prints the
//! image as ASCII art — the whole image pipeline in one file.
//!
//!     cargo run --release --example render_heatmap

use normlime::render::{decode_pgm, encode_pgm, render_salience_image};
use normlime::salience::{Method, SalienceMap, Scope};

fn main() -> normlime::Result<()> {
    // A radial bump: brightest in the middle, falling off to the corners.
    let side = 16usize;
    let mut scores = Vec::with_capacity(side * side);
    let c = (side as f64 - 1.0) / 2.0;
    for r in 0..side {
        for q in 0..side {
            let d2 = (r as f64 - c).powi(2) + (q as f64 - c).powi(2);
            scores.push((-d2 / 18.0).exp());
        }
    }
    let map = SalienceMap::new(Method::Normlime, Scope::Global, scores);

    let bytes = encode_pgm(&map, side, side)?;
    println!("encoded {}x{side} map into {} bytes of PGM", side, bytes.len());

    let (w, h, pixels) = decode_pgm(&bytes)?;
    assert_eq!((w, h), (side, side));
    let shades = [' ', '.', ':', '=', '#'];
    for row in pixels.chunks(w) {
        let line: String = row
            .iter()
            .map(|&p| shades[(p as usize * (shades.len() - 1)) / 255])
            .collect();
        println!("{line}");
    }

    // Min-max normalization pins the extremes of the gray range.
    assert_eq!(pixels.iter().max(), Some(&255));
    assert_eq!(pixels.iter().min(), Some(&0));

    let out = std::env::temp_dir().join("normlime_heatmap.pgm");
    render_salience_image(&map, side, side, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
