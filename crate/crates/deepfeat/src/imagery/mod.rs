//! Grayscale images, gray-level quantization, co-occurrence matrices, and
//! patch-derived feature masks.
//!
//! A gray-level co-occurrence matrix (GLCM) counts, for a fixed spatial
//! relationship (direction ⊗ distance), how often a pixel with quantized
//! level `a` has its partner pixel at level `b`. The matrix is *directed*:
//! pairs are ordered, and reversing the direction transposes the matrix.
//! Coordinates are row-major with row 0 at the top of the image, so `Up`
//! decreases the row index.

pub mod io;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidData(format!(
                "pixel buffer length {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Builds an image by evaluating `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

/// Image after uniform gray-level quantization: every cell is a bin in
/// `[0, n_gray_levels)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedImage {
    width: usize,
    height: usize,
    bins: Vec<u16>,
    n_gray_levels: u16,
}

impl QuantizedImage {
    pub fn new(width: usize, height: usize, bins: Vec<u16>, n_gray_levels: u16) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("image dimensions must be positive".into()));
        }
        if bins.len() != width * height {
            return Err(Error::InvalidData("bin buffer does not match dimensions".into()));
        }
        if let Some(&bad) = bins.iter().find(|&&b| b >= n_gray_levels) {
            return Err(Error::InvalidData(format!(
                "bin {bad} outside [0, {n_gray_levels})"
            )));
        }
        Ok(Self { width, height, bins, n_gray_levels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_gray_levels(&self) -> u16 {
        self.n_gray_levels
    }

    #[inline]
    pub fn bin(&self, row: usize, col: usize) -> u16 {
        self.bins[row * self.width + col]
    }
}

/// One of the eight compass moves, as a (row, col) unit offset.
///
/// Row 0 is the top of the image: `Up` is `(-1, 0)`, `UpRight` is `(-1, +1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    UpRight,
    DownRight,
    UpLeft,
    DownLeft,
    Down,
    Up,
    Right,
    Left,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::UpRight,
        Direction::DownRight,
        Direction::UpLeft,
        Direction::DownLeft,
        Direction::Down,
        Direction::Up,
        Direction::Right,
        Direction::Left,
    ];

    /// `(d_row, d_col)` unit offset.
    pub fn offset(self) -> (i32, i32) {
        match self {
            Direction::UpRight => (-1, 1),
            Direction::DownRight => (1, 1),
            Direction::UpLeft => (-1, -1),
            Direction::DownLeft => (1, -1),
            Direction::Down => (1, 0),
            Direction::Up => (-1, 0),
            Direction::Right => (0, 1),
            Direction::Left => (0, -1),
        }
    }

    pub fn reversed(self) -> Direction {
        match self {
            Direction::UpRight => Direction::DownLeft,
            Direction::DownRight => Direction::UpLeft,
            Direction::UpLeft => Direction::DownRight,
            Direction::DownLeft => Direction::UpRight,
            Direction::Down => Direction::Up,
            Direction::Up => Direction::Down,
            Direction::Right => Direction::Left,
            Direction::Left => Direction::Right,
        }
    }

    /// Compass abbreviation (`NE`, `S`, ...), as accepted on the CLI.
    pub fn abbrev(self) -> &'static str {
        match self {
            Direction::UpRight => "NE",
            Direction::DownRight => "SE",
            Direction::UpLeft => "NW",
            Direction::DownLeft => "SW",
            Direction::Down => "S",
            Direction::Up => "N",
            Direction::Right => "E",
            Direction::Left => "W",
        }
    }

    pub fn parse(s: &str) -> Result<Direction> {
        let up = s.to_ascii_uppercase();
        Direction::ALL
            .into_iter()
            .find(|d| d.abbrev() == up)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown direction `{s}` (use N/S/E/W/NE/NW/SE/SW)")))
    }
}

/// A direction plus a pixel distance along it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpatialRelationship {
    pub direction: Direction,
    pub distance: u32,
}

impl SpatialRelationship {
    pub fn new(direction: Direction, distance: u32) -> Result<Self> {
        if distance == 0 {
            return Err(Error::InvalidParameter("relationship distance must be >= 1".into()));
        }
        Ok(Self { direction, distance })
    }

    pub fn reversed(self) -> Self {
        Self { direction: self.direction.reversed(), distance: self.distance }
    }

    /// Total `(d_row, d_col)` displacement.
    pub fn displacement(self) -> (i64, i64) {
        let (dr, dc) = self.direction.offset();
        (i64::from(dr) * i64::from(self.distance), i64::from(dc) * i64::from(self.distance))
    }

    /// Number of in-bounds ordered pairs in a `height` x `width` image:
    /// `(height - |dr|·L) · (width - |dc|·L)`, clamped at zero.
    pub fn pair_count(self, width: usize, height: usize) -> u64 {
        let (dr, dc) = self.displacement();
        let rows = height as i64 - dr.abs();
        let cols = width as i64 - dc.abs();
        if rows <= 0 || cols <= 0 {
            0
        } else {
            (rows as u64) * (cols as u64)
        }
    }
}

impl std::fmt::Display for SpatialRelationship {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.direction.abbrev(), self.distance)
    }
}

/// Directed co-occurrence counts for one spatial relationship.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glcm {
    n_gray_levels: u16,
    counts: Vec<u64>,
    relationship: SpatialRelationship,
}

impl Glcm {
    pub fn n_gray_levels(&self) -> u16 {
        self.n_gray_levels
    }

    pub fn relationship(&self) -> SpatialRelationship {
        self.relationship
    }

    #[inline]
    pub fn count(&self, a: u16, b: u16) -> u64 {
        self.counts[a as usize * self.n_gray_levels as usize + b as usize]
    }

    /// Row-major count buffer of length `n_gray_levels²`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub(crate) fn from_parts(n_gray_levels: u16, counts: Vec<u64>, relationship: SpatialRelationship) -> Result<Self> {
        if counts.len() != (n_gray_levels as usize).pow(2) {
            return Err(Error::Format("count buffer does not match gray-level count".into()));
        }
        Ok(Self { n_gray_levels, counts, relationship })
    }
}

/// Set of `(a, b)` positions into an `N_g x N_g` matrix, kept in row-major
/// order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureMask {
    indices: BTreeSet<(u16, u16)>,
}

impl FeatureMask {
    pub fn from_indices(indices: impl IntoIterator<Item = (u16, u16)>) -> Self {
        Self { indices: indices.into_iter().collect() }
    }

    /// Mask that keeps every entry of an `n_gray x n_gray` matrix.
    pub fn full(n_gray: u16) -> Self {
        let mut indices = BTreeSet::new();
        for a in 0..n_gray {
            for b in 0..n_gray {
                indices.insert((a, b));
            }
        }
        Self { indices }
    }

    pub fn union(&self, other: &FeatureMask) -> FeatureMask {
        Self { indices: self.indices.union(&other.indices).copied().collect() }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, a: u16, b: u16) -> bool {
        self.indices.contains(&(a, b))
    }

    /// Indices in deterministic row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u16, u16)> + '_ {
        self.indices.iter().copied()
    }

    /// Flat row-major positions (`a·n_gray + b`), ascending.
    pub fn flat_indices(&self, n_gray: u16) -> Result<Vec<usize>> {
        let n = n_gray as usize;
        let mut out = Vec::with_capacity(self.indices.len());
        for &(a, b) in &self.indices {
            if a >= n_gray || b >= n_gray {
                return Err(Error::InvalidMask(format!(
                    "index ({a},{b}) outside [0,{n_gray})²"
                )));
            }
            out.push(a as usize * n + b as usize);
        }
        Ok(out)
    }
}

/// Uniform quantization of 8-bit gray values into `n_gray_levels` bins:
/// `bin(g) = floor(g · n / 256)`.
pub fn quantize(img: &GrayImage, n_gray_levels: u16) -> Result<QuantizedImage> {
    if !(2..=256).contains(&(n_gray_levels as u32)) {
        return Err(Error::InvalidParameter(format!(
            "n_gray_levels must be in [2, 256], got {n_gray_levels}"
        )));
    }
    let bins = img
        .pixels
        .iter()
        .map(|&g| ((u32::from(g) * u32::from(n_gray_levels)) / 256) as u16)
        .collect();
    QuantizedImage::new(img.width, img.height, bins, n_gray_levels)
}

/// Directed GLCM of `img` under `rel`.
///
/// Every pixel whose partner at `rel`'s displacement is in bounds contributes
/// one ordered pair. A relationship too long for the image yields an all-zero
/// matrix (logged, not an error).
pub fn compute_glcm(img: &QuantizedImage, rel: SpatialRelationship) -> Glcm {
    let n = img.n_gray_levels as usize;
    let mut counts = vec![0u64; n * n];
    let (dr, dc) = rel.displacement();
    if rel.pair_count(img.width, img.height) == 0 {
        log::warn!(
            "relationship {rel} produces no pixel pairs on a {}x{} image; GLCM is all zero",
            img.width, img.height
        );
    }
    for r in 0..img.height {
        let pr = r as i64 + dr;
        if pr < 0 || pr >= img.height as i64 {
            continue;
        }
        for c in 0..img.width {
            let pc = c as i64 + dc;
            if pc < 0 || pc >= img.width as i64 {
                continue;
            }
            let a = img.bin(r, c) as usize;
            let b = img.bin(pr as usize, pc as usize) as usize;
            counts[a * n + b] += 1;
        }
    }
    Glcm { n_gray_levels: img.n_gray_levels, counts, relationship: rel }
}

/// Flattens a GLCM to a continuous feature vector.
///
/// Without a mask this is the row-major flatten (length `N_g²`); with a mask,
/// the sub-vector at the mask's indices in row-major order.
pub fn glcm_to_features(glcm: &Glcm, mask: Option<&FeatureMask>) -> Result<Vec<f64>> {
    match mask {
        None => Ok(glcm.counts.iter().map(|&c| c as f64).collect()),
        Some(mask) => {
            let flat = mask.flat_indices(glcm.n_gray_levels)?;
            Ok(flat.into_iter().map(|i| glcm.counts[i] as f64).collect())
        }
    }
}

/// Median of all `N_g²` entries (average of the two middle values when the
/// count is even).
fn median_of_counts(counts: &[u64]) -> f64 {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// Builds the union feature mask from representative patches.
///
/// For each patch, its GLCM entries are thresholded at the median of all
/// `N_g²` entries of that matrix; positions strictly above the median enter
/// the patch mask, and the result is the union over patches.
pub fn build_mask(patches: &[QuantizedImage], rel: SpatialRelationship) -> Result<FeatureMask> {
    let first = patches
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one patch is required".into()))?;
    let n_gray = first.n_gray_levels;
    let mut mask = FeatureMask::default();
    for patch in patches {
        if patch.n_gray_levels != n_gray {
            return Err(Error::InvalidParameter(
                "patches must share a gray-level count".into(),
            ));
        }
        let glcm = compute_glcm(patch, rel);
        let tau = median_of_counts(&glcm.counts);
        let n = n_gray as usize;
        for a in 0..n {
            for b in 0..n {
                if glcm.counts[a * n + b] as f64 > tau {
                    mask.indices.insert((a as u16, b as u16));
                }
            }
        }
    }
    Ok(mask)
}
