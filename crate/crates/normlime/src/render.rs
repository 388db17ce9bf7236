//! Salience maps as 8-bit binary PGM (P5) images.
//!
//! PGM keeps the output bit-exactly specifiable with no image dependencies:
//! scores are min-max normalized to [0, 255] with half-up rounding, and a
//! constant map renders mid-gray so "nothing to see" is visually distinct
//! from "lowest importance everywhere".

use std::path::Path;

use crate::error::{Error, Result};
use crate::salience::SalienceMap;

/// Min-max normalizes scores to 8-bit gray levels: the smallest score maps
/// to 0, the largest to 255, everything between rounds half-up. All-equal
/// scores map to 128.
pub fn to_gray_levels(scores: &[f64]) -> Result<Vec<u8>> {
    if let Some(bad) = scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidSalience(format!(
            "score for feature {bad} is not finite"
        )));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(vec![128u8; scores.len()]);
    }
    Ok(scores
        .iter()
        .map(|&v| {
            let scaled = (v - min) / (max - min) * 255.0;
            (scaled + 0.5).floor() as u8
        })
        .collect())
}

/// Encodes a salience map as a binary PGM (P5) image, row-major, one byte
/// per feature. Width times height must equal the score length.
pub fn encode_pgm(map: &SalienceMap, width: usize, height: usize) -> Result<Vec<u8>> {
    if width * height != map.len() {
        return Err(Error::ShapeMismatch {
            what: "image dimensions",
            expected: map.len(),
            got: width * height,
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidConfig("image dimensions must be positive".into()));
    }
    let levels = to_gray_levels(&map.scores)?;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&levels);
    Ok(out)
}

/// Renders a salience map to a PGM file on disk.
pub fn render_salience_image(
    map: &SalienceMap,
    width: usize,
    height: usize,
    out_path: &Path,
) -> Result<()> {
    let bytes = encode_pgm(map, width, height)?;
    std::fs::write(out_path, bytes)?;
    Ok(())
}

/// Parses the header and pixels of a binary PGM produced by [`encode_pgm`];
/// used by tests and the acceptance harness to read images back.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let header_err = |msg: &str| Error::Format(format!("pgm: {msg}"));
    // header: three whitespace-separated tokens after the magic
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(header_err("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| header_err("non-ASCII header"))?);
    }
    if tokens[0] != "P5" {
        return Err(header_err("not a binary PGM (missing P5 magic)"));
    }
    let width: usize = tokens[1].parse().map_err(|_| header_err("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| header_err("bad height"))?;
    if tokens[3] != "255" {
        return Err(header_err("expected 8-bit maxval 255"));
    }
    pos += 1; // single whitespace byte after maxval
    let pixels = bytes[pos..].to_vec();
    if pixels.len() != width * height {
        return Err(header_err("pixel payload does not match dimensions"));
    }
    Ok((width, height, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::salience::{Method, Scope};

    fn map_of(scores: Vec<f64>) -> SalienceMap {
        SalienceMap::new(Method::Normlime, Scope::Global, scores)
    }

    #[test]
    fn min_max_normalization_with_half_up_rounding() {
        let levels = to_gray_levels(&[0.0, 1.0, 0.5, 0.25]).unwrap();
        assert_eq!(levels, vec![0, 255, 128, 64]);
    }

    #[test]
    fn constant_map_renders_mid_gray() {
        let levels = to_gray_levels(&[0.7, 0.7, 0.7]).unwrap();
        assert_eq!(levels, vec![128, 128, 128]);
    }

    #[test]
    fn negative_scores_normalize_too() {
        let levels = to_gray_levels(&[-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(levels, vec![0, 128, 255]);
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        assert!(to_gray_levels(&[0.0, f64::NAN]).is_err());
        assert!(to_gray_levels(&[0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn pgm_header_is_canonical() {
        let bytes = encode_pgm(&map_of(vec![0.0, 1.0, 0.5, 0.25]), 2, 2).unwrap();
        let header: Vec<&str> = std::str::from_utf8(&bytes[..bytes.len() - 4])
            .unwrap()
            .split_ascii_whitespace()
            .collect();
        assert_eq!(header, vec!["P5", "2", "2", "255"]);
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 255, 128, 64]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = encode_pgm(&map_of(vec![0.0; 6]), 2, 2).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn pgm_round_trips_through_the_decoder() {
        let map = map_of(vec![0.1, 0.9, 0.4, 0.2, 0.6, 0.3]);
        let bytes = encode_pgm(&map, 3, 2).unwrap();
        let (w, h, pixels) = decode_pgm(&bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(pixels, to_gray_levels(&map.scores).unwrap());
    }

    #[test]
    fn render_writes_the_encoded_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.pgm");
        let map = map_of(vec![0.0, 1.0, 0.5, 0.25]);
        render_salience_image(&map, 2, 2, &path).unwrap();
        let on_disk = std::fs::read(&path).unwrap();
        assert_eq!(on_disk, encode_pgm(&map, 2, 2).unwrap());
    }
}
