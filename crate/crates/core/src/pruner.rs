//! Token selection with original raster indices, alternative index
//! assignments for ablations, and the PTOK1 interchange files.
//!
//! A PTOK1 token set is two files: a JSON manifest
//!
//! ```text
//! {"version":1,"patch_size":28,"grid_rows":..,"grid_cols":..,"image_width":..,
//!  "image_height":..,"strategy":"preserved","pixels_file":"x.ptok.bin",
//!  "tokens":[{"i":5,"r":0,"c":5},..]}
//! ```
//!
//! and a blob holding `PTOKPX1\0` followed by `P²` bytes per token in
//! manifest order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imagegrid::PatchGrid;
use crate::maskops::BinaryMask;
use crate::{Error, ParseError, Result};

pub const PTOK_VERSION: u64 = 1;
pub const PIXELS_MAGIC: &[u8; 8] = b"PTOKPX1\0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexStrategy {
    /// Original raster index `row·cols + col`.
    Preserved,
    /// Position in the pruned sequence, `0..L`.
    Ordered,
    /// `L` distinct indices drawn from the full grid range.
    Random,
    /// Every index zero.
    Constant,
}

impl IndexStrategy {
    pub const ALL: [IndexStrategy; 4] = [Self::Preserved, Self::Ordered, Self::Random, Self::Constant];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Preserved => "preserved",
            Self::Ordered => "ordered",
            Self::Random => "random",
            Self::Constant => "constant",
        }
    }
}

impl fmt::Display for IndexStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IndexStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown index strategy {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub assigned_index: usize,
    pub row: usize,
    pub col: usize,
    pub pixels: Vec<u8>,
}

/// Retained patches in raster order of their original position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrunedTokenSet {
    pub patch_size: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub strategy: IndexStrategy,
    pub tokens: Vec<Token>,
    /// `(width, height)` of the image before padding.
    pub source_image: (usize, usize),
}

impl PrunedTokenSet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn grid_area(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn raster_index(&self, token: &Token) -> usize {
        token.row * self.grid_cols + token.col
    }

    pub fn assigned_indices(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.assigned_index).collect()
    }

    /// Checks every structural and per-strategy invariant.
    pub fn validate(&self) -> std::result::Result<(), ParseError> {
        let bad = |msg: String| Err(ParseError::Invariant(msg));
        if self.patch_size == 0 {
            return bad("patch size 0".into());
        }
        let area = self.grid_area();
        let d = self.patch_size * self.patch_size;
        let mut prev: Option<usize> = None;
        for (pos, t) in self.tokens.iter().enumerate() {
            if t.row >= self.grid_rows || t.col >= self.grid_cols {
                return bad(format!("token {pos} at ({}, {}) outside grid", t.row, t.col));
            }
            if t.pixels.len() != d {
                return bad(format!("token {pos} has {} pixels", t.pixels.len()));
            }
            let raster = self.raster_index(t);
            if prev.is_some_and(|p| p >= raster) {
                return bad(format!("token {pos} out of raster order"));
            }
            prev = Some(raster);
            let ok = match self.strategy {
                IndexStrategy::Preserved => t.assigned_index == raster,
                IndexStrategy::Ordered => t.assigned_index == pos,
                IndexStrategy::Constant => t.assigned_index == 0,
                IndexStrategy::Random => t.assigned_index < area,
            };
            if !ok {
                return bad(format!("token {pos} index {} violates {} strategy", t.assigned_index, self.strategy));
            }
        }
        if self.strategy == IndexStrategy::Random {
            let mut seen = self.assigned_indices();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return bad("duplicate random index".into());
            }
        }
        Ok(())
    }
}

/// Keeps the patches whose mask bit is set, paired with their raster index.
pub fn prune(grid: &PatchGrid, mask: &BinaryMask) -> Result<PrunedTokenSet> {
    if mask.rows() != grid.rows() || mask.cols() != grid.cols() {
        return Err(Error::Config(format!(
            "{}x{} mask for a {}x{} grid",
            mask.rows(),
            mask.cols(),
            grid.rows(),
            grid.cols()
        )));
    }
    let p = grid.patch_size();
    let mut tokens = Vec::with_capacity(mask.count_ones());
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            if mask.get(r, c) {
                let mut pixels = vec![0; p * p];
                grid.copy_patch_into(r, c, &mut pixels);
                tokens.push(Token { assigned_index: grid.index_of(r, c), row: r, col: c, pixels });
            }
        }
    }
    Ok(PrunedTokenSet {
        patch_size: p,
        grid_rows: grid.rows(),
        grid_cols: grid.cols(),
        strategy: IndexStrategy::Preserved,
        tokens,
        source_image: grid.original_size(),
    })
}

/// Reassigns indices of a preserved set. Pixels, positions and order are untouched.
pub fn reindex(set: &PrunedTokenSet, strategy: IndexStrategy, seed: u64) -> Result<PrunedTokenSet> {
    if set.strategy != IndexStrategy::Preserved {
        return Err(Error::State(format!("set is already reindexed ({})", set.strategy)));
    }
    let mut out = set.clone();
    out.strategy = strategy;
    match strategy {
        IndexStrategy::Preserved => {}
        IndexStrategy::Ordered => out.tokens.iter_mut().enumerate().for_each(|(i, t)| t.assigned_index = i),
        IndexStrategy::Constant => out.tokens.iter_mut().for_each(|t| t.assigned_index = 0),
        IndexStrategy::Random => {
            let picks = distinct_sample(set.grid_area(), set.len(), seed);
            out.tokens.iter_mut().zip(picks).for_each(|(t, i)| t.assigned_index = i);
        }
    }
    Ok(out)
}

/// First `k` entries of a seeded Fisher–Yates shuffle of `0..n`.
fn distinct_sample(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Percentage of grid patches removed.
pub fn token_reduction(set: &PrunedTokenSet) -> Result<f64> {
    let area = set.grid_area();
    if area == 0 {
        return Err(Error::DegenerateData("empty grid".into()));
    }
    Ok(100.0 * (1.0 - set.len() as f64 / area as f64))
}

#[derive(Serialize, Deserialize)]
struct ManifestToken {
    i: usize,
    r: usize,
    c: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u64,
    patch_size: usize,
    grid_rows: usize,
    grid_cols: usize,
    image_width: usize,
    image_height: usize,
    strategy: IndexStrategy,
    pixels_file: String,
    tokens: Vec<ManifestToken>,
}

/// Encodes `set` as a PTOK1 manifest (naming `pixels_file`) and pixel blob.
pub fn serialize(set: &PrunedTokenSet, pixels_file: &str) -> (String, Vec<u8>) {
    let manifest = Manifest {
        version: PTOK_VERSION,
        patch_size: set.patch_size,
        grid_rows: set.grid_rows,
        grid_cols: set.grid_cols,
        image_width: set.source_image.0,
        image_height: set.source_image.1,
        strategy: set.strategy,
        pixels_file: pixels_file.to_owned(),
        tokens: set.tokens.iter().map(|t| ManifestToken { i: t.assigned_index, r: t.row, c: t.col }).collect(),
    };
    let mut json = serde_json::to_string(&manifest).expect("manifest serializes");
    json.push('\n');
    let mut blob = Vec::with_capacity(PIXELS_MAGIC.len() + set.len() * set.patch_size * set.patch_size);
    blob.extend_from_slice(PIXELS_MAGIC);
    for t in &set.tokens {
        blob.extend_from_slice(&t.pixels);
    }
    (json, blob)
}

/// Name of the pixel blob a manifest refers to.
pub fn manifest_pixels_file(manifest: &[u8]) -> Result<String> {
    let m: Manifest = serde_json::from_slice(manifest).map_err(ParseError::from)?;
    Ok(m.pixels_file)
}

pub fn deserialize(manifest: &[u8], blob: &[u8]) -> Result<PrunedTokenSet> {
    let value: serde_json::Value = serde_json::from_slice(manifest).map_err(ParseError::from)?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(PTOK_VERSION) => {}
        Some(v) => return Err(ParseError::Version(v).into()),
        None => return Err(ParseError::Invariant("missing version".into()).into()),
    }
    let m: Manifest = serde_json::from_value(value).map_err(ParseError::from)?;
    if blob.len() < PIXELS_MAGIC.len() || &blob[..PIXELS_MAGIC.len()] != PIXELS_MAGIC {
        return Err(ParseError::BadMagic.into());
    }
    let d = m.patch_size * m.patch_size;
    let expected = PIXELS_MAGIC.len() + d * m.tokens.len();
    if blob.len() < expected {
        return Err(ParseError::Truncated { expected, actual: blob.len() }.into());
    }
    if blob.len() > expected {
        return Err(ParseError::Trailing.into());
    }
    let body = &blob[PIXELS_MAGIC.len()..];
    let tokens = m
        .tokens
        .iter()
        .enumerate()
        .map(|(k, t)| Token { assigned_index: t.i, row: t.r, col: t.c, pixels: body[k * d..(k + 1) * d].to_vec() })
        .collect();
    let set = PrunedTokenSet {
        patch_size: m.patch_size,
        grid_rows: m.grid_rows,
        grid_cols: m.grid_cols,
        strategy: m.strategy,
        tokens,
        source_image: (m.image_width, m.image_height),
    };
    set.validate()?;
    Ok(set)
}

/// Default file pair for an output stem: `<stem>.ptok.json`, `<stem>.ptok.bin`.
pub fn ptok_paths(stem: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let stem = stem.as_ref().as_os_str().to_owned();
    let mut json = stem.clone();
    json.push(".ptok.json");
    let mut bin = stem;
    bin.push(".ptok.bin");
    (PathBuf::from(json), PathBuf::from(bin))
}

/// Writes the PTOK1 pair for `stem` and returns `(manifest, blob)` paths.
pub fn write_ptok(set: &PrunedTokenSet, stem: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let (json_path, bin_path) = ptok_paths(stem);
    let name = bin_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("output path {} has no usable file name", bin_path.display())))?;
    let (json, blob) = serialize(set, name);
    std::fs::write(&json_path, json)?;
    std::fs::write(&bin_path, blob)?;
    Ok((json_path, bin_path))
}

/// Reads a manifest and the blob it names (resolved next to the manifest).
pub fn read_ptok(manifest_path: impl AsRef<Path>) -> Result<PrunedTokenSet> {
    let manifest_path = manifest_path.as_ref();
    let manifest = std::fs::read(manifest_path)?;
    let pixels_file = manifest_pixels_file(&manifest)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    let blob = std::fs::read(dir.join(pixels_file))?;
    deserialize(&manifest, &blob)
}
