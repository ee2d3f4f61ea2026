//! Seeded toy image corpus: small grayscale textures whose staining-like
//! blob density grows with the score class. Useful for end-to-end pipeline
//! tests, examples, and as a covariance source when no real corpus is on
//! disk.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::Result;
use crate::imagery::io::{save_gray_png, write_manifest};
use crate::imagery::GrayImage;
use crate::rng::indexed_stream;

/// Scores used by the toy corpus.
pub const TOY_CLASSES: [u32; 4] = [0, 1, 2, 3];

/// One toy image: a mottled light background with `score`-dependent dark
/// blobs scattered over it.
pub fn toy_image(size: usize, score: u32, seed: u64, index: u64) -> GrayImage {
    let mut rng = indexed_stream(seed, "toy-image", index);

    // low-frequency background field
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.05..0.25),
                rng.gen_range(0.05..0.25),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let base = rng.gen_range(175.0..205.0);

    let n_blobs = (score as usize) * 4 + usize::from(score > 0) * rng.gen_range(0..3);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            (
                rng.gen_range(0.0..size as f64),
                rng.gen_range(0.0..size as f64),
                rng.gen_range(2.5..6.0),
                rng.gen_range(40.0..95.0),
            )
        })
        .collect();

    let mut pixels = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let mut v = base;
            for &(fr, fc, phase) in &waves {
                v += 8.0 * (fr * r as f64 + fc * c as f64 + phase).sin();
            }
            v += rng.gen_range(-9.0..9.0);
            for &(br, bc, radius, dark) in &blobs {
                let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                if d2 < radius * radius {
                    let falloff = 1.0 - (d2 / (radius * radius));
                    let candidate = dark + (v - dark) * (1.0 - falloff);
                    v = v.min(candidate);
                }
            }
            pixels.push(v.clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(size, size, pixels).expect("size checked by construction")
}

/// In-memory corpus: `n_per_class` images per score in [`TOY_CLASSES`].
pub fn toy_corpus(n_per_class: usize, size: usize, seed: u64) -> Vec<(GrayImage, u32)> {
    let mut out = Vec::with_capacity(n_per_class * TOY_CLASSES.len());
    let mut index = 0u64;
    for &score in &TOY_CLASSES {
        for _ in 0..n_per_class {
            out.push((toy_image(size, score, seed, index), score));
            index += 1;
        }
    }
    out
}

/// Materializes a toy corpus as PNG files plus a `manifest.csv`; returns the
/// manifest path.
pub fn write_toy_corpus(dir: &Path, n_per_class: usize, size: usize, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (i, (img, score)) in toy_corpus(n_per_class, size, seed).iter().enumerate() {
        let name = format!("toy_{i:03}_score{score}.png");
        save_gray_png(img, &dir.join(&name))?;
        entries.push((PathBuf::from(name), *score));
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_and_labeled() {
        let a = toy_corpus(3, 24, 7);
        let b = toy_corpus(3, 24, 7);
        assert_eq!(a.len(), 12);
        for ((ia, sa), (ib, sb)) in a.iter().zip(&b) {
            assert_eq!(sa, sb);
            assert_eq!(ia, ib);
        }
        let scores: Vec<u32> = a.iter().map(|(_, s)| *s).collect();
        assert_eq!(&scores[..3], &[0, 0, 0]);
        assert_eq!(&scores[9..], &[3, 3, 3]);
    }

    #[test]
    fn higher_scores_are_darker_on_average() {
        let corpus = toy_corpus(6, 32, 9);
        let mean_of = |score: u32| -> f64 {
            let imgs: Vec<_> = corpus.iter().filter(|(_, s)| *s == score).collect();
            let total: f64 = imgs
                .iter()
                .map(|(img, _)| {
                    img.pixels().iter().map(|&p| f64::from(p)).sum::<f64>()
                        / img.pixels().len() as f64
                })
                .sum();
            total / imgs.len() as f64
        };
        assert!(mean_of(0) > mean_of(3), "blobs should darken high-score images");
    }

    #[test]
    fn materialized_corpus_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_toy_corpus(dir.path(), 2, 16, 3).unwrap();
        let entries = crate::imagery::io::read_manifest(&manifest).unwrap();
        assert_eq!(entries.len(), 8);
        let img = crate::imagery::io::load_gray_image(&entries[0].path).unwrap();
        assert_eq!(img.width(), 16);
    }
}
