//! File ingestion and caches for the imagery stage: 8-bit grayscale rasters
//! (PNG/PGM), labeled manifests, and a compact binary GLCM cache.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ioutil::atomic_write;
use crate::matrix::{DenseMatrix, FeatureMatrix};

use super::{
    compute_glcm, glcm_to_features, quantize, Direction, FeatureMask, Glcm, GrayImage,
    SpatialRelationship,
};

/// Loads an 8-bit grayscale PNG or PGM. Color or 16-bit inputs are rejected
/// rather than silently converted.
pub fn load_gray_image(path: &Path) -> Result<GrayImage> {
    let dynamic = image::open(path)?;
    match dynamic {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            GrayImage::new(w as usize, h as usize, img.into_raw())
        }
        other => Err(Error::InvalidData(format!(
            "{}: expected 8-bit grayscale, got {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Writes an image as an 8-bit grayscale PNG.
pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("dimensions validated at construction");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// One labeled image in a corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub score: u32,
}

/// Reads a `path,score` manifest CSV. Relative paths are resolved against
/// the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let path_idx = headers.iter().position(|h| h == "path").ok_or_else(|| {
        Error::InvalidData(format!("{}: manifest needs a `path` column", path.display()))
    })?;
    let score_idx = headers.iter().position(|h| h == "score").ok_or_else(|| {
        Error::InvalidData(format!("{}: manifest needs a `score` column", path.display()))
    })?;
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record?;
        let raw = PathBuf::from(&record[path_idx]);
        let resolved = if raw.is_absolute() { raw } else { base.join(raw) };
        let score = record[score_idx]
            .parse()
            .map_err(|_| Error::InvalidData(format!("bad score `{}`", &record[score_idx])))?;
        entries.push(ManifestEntry { path: resolved, score });
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[(PathBuf, u32)]) -> Result<()> {
    let mut out = String::from("path,score\n");
    for (p, score) in entries {
        out.push_str(&format!("{},{}\n", p.display(), score));
    }
    atomic_write(path, out.as_bytes())
}

/// GLCM feature table of an in-memory labeled corpus: one row per image,
/// columns named by flat GLCM position (`f_0000` ... or the masked subset).
pub fn corpus_features(
    images: &[(GrayImage, u32)],
    rel: SpatialRelationship,
    n_gray: u16,
    mask: Option<&FeatureMask>,
) -> Result<FeatureMatrix> {
    if images.is_empty() {
        return Err(Error::InvalidData("corpus is empty".into()));
    }
    let rows: Result<Vec<Vec<f64>>> = images
        .par_iter()
        .map(|(img, _)| glcm_to_features(&compute_glcm(&quantize(img, n_gray)?, rel), mask))
        .collect();
    let rows = rows?;
    let names: Vec<String> = match mask {
        None => (0..(n_gray as usize).pow(2)).map(|i| format!("f_{i:04}")).collect(),
        Some(m) => m.flat_indices(n_gray)?.into_iter().map(|i| format!("f_{i:04}")).collect(),
    };
    let labels = images.iter().map(|(_, score)| *score).collect();
    FeatureMatrix::with_names(DenseMatrix::from_rows(&rows)?, names, None, Some(labels))
}

/// [`corpus_features`] over a manifest on disk.
pub fn manifest_features(
    manifest: &Path,
    rel: SpatialRelationship,
    n_gray: u16,
    mask: Option<&FeatureMask>,
) -> Result<FeatureMatrix> {
    let entries = read_manifest(manifest)?;
    let images: Result<Vec<(GrayImage, u32)>> = entries
        .par_iter()
        .map(|e| Ok((load_gray_image(&e.path)?, e.score)))
        .collect();
    corpus_features(&images?, rel, n_gray, mask)
}

const CACHE_MAGIC: &[u8; 8] = b"DFGLCM\x00\x01";

/// Writes GLCMs to a little-endian binary cache: magic + version, the shared
/// relationship and gray-level count, then each matrix's counts.
pub fn write_glcm_cache(path: &Path, glcms: &[Glcm]) -> Result<()> {
    let first = glcms
        .first()
        .ok_or_else(|| Error::InvalidParameter("cache needs at least one GLCM".into()))?;
    let rel = first.relationship();
    let n_gray = first.n_gray_levels();
    for g in glcms {
        if g.relationship() != rel || g.n_gray_levels() != n_gray {
            return Err(Error::InvalidData(
                "all cached GLCMs must share relationship and gray-level count".into(),
            ));
        }
    }
    let (dr, dc) = rel.direction.offset();
    let mut bytes = Vec::with_capacity(32 + glcms.len() * (n_gray as usize).pow(2) * 8);
    bytes.extend_from_slice(CACHE_MAGIC);
    bytes.push(dr as u8);
    bytes.push(dc as u8);
    bytes.extend_from_slice(&rel.distance.to_le_bytes());
    bytes.extend_from_slice(&u32::from(n_gray).to_le_bytes());
    bytes.extend_from_slice(&(glcms.len() as u32).to_le_bytes());
    for g in glcms {
        for &c in g.counts() {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
    }
    atomic_write(path, &bytes)
}

pub fn read_glcm_cache(path: &Path) -> Result<Vec<Glcm>> {
    let bytes = std::fs::read(path)?;
    let take = |range: std::ops::Range<usize>| -> Result<&[u8]> {
        bytes.get(range).ok_or_else(|| Error::Format("truncated GLCM cache".into()))
    };
    if take(0..8)? != CACHE_MAGIC {
        return Err(Error::Format("bad GLCM cache magic or version".into()));
    }
    let dr = bytes[8] as i8;
    let dc = bytes[9] as i8;
    let direction = Direction::ALL
        .into_iter()
        .find(|d| d.offset() == (i32::from(dr), i32::from(dc)))
        .ok_or_else(|| Error::Format(format!("bad direction offset ({dr},{dc})")))?;
    let distance = u32::from_le_bytes(take(10..14)?.try_into().unwrap());
    let n_gray = u32::from_le_bytes(take(14..18)?.try_into().unwrap());
    let n_images = u32::from_le_bytes(take(18..22)?.try_into().unwrap()) as usize;
    if n_gray == 0 || n_gray > 256 {
        return Err(Error::Format(format!("bad gray-level count {n_gray}")));
    }
    let rel = SpatialRelationship::new(direction, distance)?;
    let cells = (n_gray as usize).pow(2);
    let mut offset = 22;
    let mut glcms = Vec::with_capacity(n_images);
    for _ in 0..n_images {
        let mut counts = Vec::with_capacity(cells);
        for _ in 0..cells {
            counts.push(u64::from_le_bytes(take(offset..offset + 8)?.try_into().unwrap()));
            offset += 8;
        }
        glcms.push(Glcm::from_parts(n_gray as u16, counts, rel)?);
    }
    if offset != bytes.len() {
        return Err(Error::Format("trailing bytes in GLCM cache".into()));
    }
    Ok(glcms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagery::{compute_glcm, quantize};

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("glcms.bin");
        let rel = SpatialRelationship::new(Direction::UpRight, 3).unwrap();
        let glcms: Vec<Glcm> = (0..3u8)
            .map(|k| {
                let img = GrayImage::from_fn(9, 7, |r, c| ((r * 31 + c * 17) as u8).wrapping_mul(k + 1)).unwrap();
                compute_glcm(&quantize(&img, 16).unwrap(), rel)
            })
            .collect();
        write_glcm_cache(&path, &glcms).unwrap();
        assert_eq!(read_glcm_cache(&path).unwrap(), glcms);
    }

    #[test]
    fn cache_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOTACACHE").unwrap();
        assert!(matches!(read_glcm_cache(&path), Err(Error::Format(_))));
    }

    #[test]
    fn png_roundtrip_and_color_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let gray_path = dir.path().join("g.png");
        let img = GrayImage::from_fn(5, 4, |r, c| (r * 50 + c * 10) as u8).unwrap();
        save_gray_png(&img, &gray_path).unwrap();
        assert_eq!(load_gray_image(&gray_path).unwrap(), img);

        let color_path = dir.path().join("c.png");
        let rgb = image::RgbImage::from_fn(3, 3, |x, y| image::Rgb([x as u8, y as u8, 0]));
        rgb.save(&color_path).unwrap();
        assert!(matches!(load_gray_image(&color_path), Err(Error::InvalidData(_))));
    }

    #[test]
    fn manifest_roundtrip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_manifest(&path, &[(PathBuf::from("img/a.png"), 2), (PathBuf::from("b.png"), 0)]).unwrap();
        let entries = read_manifest(&path).unwrap();
        assert_eq!(entries[0].path, dir.path().join("img/a.png"));
        assert_eq!(entries[0].score, 2);
        assert_eq!(entries[1].score, 0);
    }
}
