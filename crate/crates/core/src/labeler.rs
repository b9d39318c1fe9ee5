//! Patch labels from text bounding boxes, and balanced training sets.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{PatchDataset, Sample};
use crate::imagegrid::{GrayImage, PatchGrid};
use crate::maskops::BinaryMask;
use crate::{Error, Result};

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`, serialized as `[x0, y0, x1, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 4]", into = "[usize; 4]")]
pub struct TextBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl TextBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::MalformedInput(format!("empty box [{x0}, {y0}, {x1}, {y1}]")));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    /// Intersection with `[0, width) × [0, height)`; `None` if nothing is left.
    pub fn clip(&self, width: usize, height: usize) -> Option<Self> {
        let b = Self { x0: self.x0, y0: self.y0, x1: self.x1.min(width), y1: self.y1.min(height) };
        (b.x1 > b.x0 && b.y1 > b.y0).then_some(b)
    }
}

impl TryFrom<[usize; 4]> for TextBox {
    type Error = Error;

    fn try_from([x0, y0, x1, y1]: [usize; 4]) -> Result<Self> {
        Self::new(x0, y0, x1, y1)
    }
}

impl From<TextBox> for [usize; 4] {
    fn from(b: TextBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// Annotation file contents: `{"image": "name.png", "boxes": [[x0, y0, x1, y1], ...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    #[serde(rename = "image")]
    pub image_id: String,
    pub boxes: Vec<TextBox>,
}

impl AnnotationSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::MalformedInput(format!("annotation {}: {e}", path.as_ref().display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("annotation serializes");
        s.push('\n');
        s
    }
}

/// 1 for every patch whose rectangle shares positive area with some box.
pub fn label_patches(grid: &PatchGrid, boxes: &[TextBox]) -> BinaryMask {
    let p = grid.patch_size();
    let (w, h) = (grid.source().width(), grid.source().height());
    let mut mask = BinaryMask::filled(grid.rows(), grid.cols(), false);
    for b in boxes.iter().filter_map(|b| b.clip(w, h)) {
        for r in b.y0 / p..=(b.y1 - 1) / p {
            for c in b.x0 / p..=(b.x1 - 1) / p {
                mask.set(r, c, true);
            }
        }
    }
    mask
}

/// Labels every patch of every image and draws up to `per_class_cap`
/// patches of each class without replacement.
///
/// The result lists foreground then background samples, each class in a
/// seeded random order.
pub fn build_dataset<'a, I>(corpus: I, patch_size: usize, per_class_cap: usize, seed: u64) -> Result<PatchDataset>
where
    I: IntoIterator<Item = (&'a GrayImage, &'a [TextBox])>,
{
    if patch_size == 0 || per_class_cap == 0 {
        return Err(Error::Config("patch size and per-class cap must be positive".into()));
    }
    let mut grids = Vec::new();
    let mut refs: [Vec<(usize, usize, usize)>; 2] = [Vec::new(), Vec::new()];
    for (img, boxes) in corpus {
        let grid = PatchGrid::new(img, patch_size)?;
        let labels = label_patches(&grid, boxes);
        let g = grids.len();
        for r in 0..grid.rows() {
            for c in 0..grid.cols() {
                refs[labels.get(r, c) as usize].push((g, r, c));
            }
        }
        grids.push(grid);
    }
    if grids.is_empty() {
        return Err(Error::DegenerateData("no images in corpus".into()));
    }
    if refs.iter().any(Vec::is_empty) {
        return Err(Error::DegenerateData(format!(
            "corpus has {} background and {} foreground patches",
            refs[0].len(),
            refs[1].len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = patch_size * patch_size;
    let mut entries = Vec::new();
    for label in [1u8, 0] {
        let pool = &mut refs[label as usize];
        pool.shuffle(&mut rng);
        for &(g, r, c) in pool.iter().take(per_class_cap) {
            let mut pixels = vec![0; d];
            grids[g].copy_patch_into(r, c, &mut pixels);
            entries.push(Sample { pixels, label });
        }
    }
    PatchDataset::new(patch_size, entries)
}

/// Image files (`.png`, `.pgm`) in `dir` that have a `<stem>.json` annotation, sorted by path.
pub fn discover_annotated(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir.as_ref())? {
        let path = entry?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("pgm"));
        if !is_image {
            continue;
        }
        let ann = path.with_extension("json");
        if ann.is_file() {
            out.push((path, ann));
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blank_grid(w: usize, h: usize, p: usize) -> PatchGrid {
        PatchGrid::new(&GrayImage::filled(w, h, 255).unwrap(), p).unwrap()
    }

    /// Marks covered pixels, then labels a patch 1 if it holds any marked pixel.
    fn pixel_oracle(grid: &PatchGrid, boxes: &[TextBox]) -> BinaryMask {
        let p = grid.patch_size();
        let mut mask = BinaryMask::filled(grid.rows(), grid.cols(), false);
        for y in 0..grid.source().height() {
            for x in 0..grid.source().width() {
                if boxes.iter().any(|b| b.contains(x, y)) {
                    mask.set(y / p, x / p, true);
                }
            }
        }
        mask
    }

    #[test]
    fn label_examples() {
        let g = blank_grid(56, 56, 28);
        let exact = label_patches(&g, &[TextBox::new(28, 0, 56, 28).unwrap()]);
        assert_eq!(exact.bits(), &[false, true, false, false]);
        let inside = label_patches(&g, &[TextBox::new(30, 30, 40, 40).unwrap()]);
        assert_eq!(inside.bits(), &[false, false, false, true]);
        // touches the right neighbour only along x = 28
        let edge = label_patches(&g, &[TextBox::new(10, 10, 28, 20).unwrap()]);
        assert_eq!(edge.bits(), &[true, false, false, false]);
    }

    #[test]
    fn clipping() {
        let g = blank_grid(56, 56, 28);
        let m = label_patches(&g, &[TextBox::new(50, 50, 500, 500).unwrap(), TextBox::new(900, 0, 910, 5).unwrap()]);
        assert_eq!(m.bits(), &[false, false, false, true]);
        assert!(TextBox::new(3, 3, 3, 9).is_err());
    }

    #[test]
    fn annotation_json() {
        let a = AnnotationSet { image_id: "p.png".into(), boxes: vec![TextBox::new(1, 2, 3, 4).unwrap()] };
        assert_eq!(a.to_json(), "{\"image\":\"p.png\",\"boxes\":[[1,2,3,4]]}\n");
        let back: AnnotationSet = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<AnnotationSet>("{\"image\":\"x\",\"boxes\":[[5,0,5,1]]}").is_err());
    }

    fn striped(w: usize, h: usize, fg_cols: usize) -> (GrayImage, Vec<TextBox>) {
        let data = (0..w * h).map(|i| (i % 251) as u8).collect();
        (GrayImage::new(w, h, data).unwrap(), vec![TextBox::new(0, 0, fg_cols, h).unwrap()])
    }

    #[test]
    fn dataset_balancing() {
        // 50 columns × 20 rows of 1-pixel patches: 25 fg columns = 500 fg, 500 bg
        let (img, boxes) = striped(50, 20, 25);
        let corpus = [(&img, boxes.as_slice())];
        let ds = build_dataset(corpus, 1, 400, 3).unwrap();
        assert_eq!(ds.class_counts(), (400, 400));
        let all = build_dataset(corpus, 1, 10_000, 3).unwrap();
        assert_eq!(all.class_counts(), (500, 500));
        assert_eq!(build_dataset(corpus, 1, 400, 3).unwrap(), ds);
        assert_ne!(build_dataset(corpus, 1, 400, 4).unwrap(), ds);
    }

    #[test]
    fn dataset_needs_both_classes() {
        let img = GrayImage::filled(10, 10, 255).unwrap();
        let none: [TextBox; 0] = [];
        let r = build_dataset([(&img, &none[..])], 2, 5, 0);
        assert!(matches!(r, Err(Error::DegenerateData(_))));
        let empty: [(&GrayImage, &[TextBox]); 0] = [];
        assert!(matches!(build_dataset(empty, 2, 5, 0), Err(Error::DegenerateData(_))));
    }

    fn arb_boxes() -> impl Strategy<Value = (usize, usize, usize, Vec<TextBox>)> {
        (1usize..=64, 1usize..=64, 1usize..=9).prop_flat_map(|(w, h, p)| {
            let b = (0..w + 8, 0..h + 8, 1usize..30, 1usize..30)
                .prop_map(|(x, y, bw, bh)| TextBox::new(x, y, x + bw, y + bh).unwrap());
            (Just(w), Just(h), Just(p), proptest::collection::vec(b, 0..6))
        })
    }

    proptest! {
        #[test]
        fn labels_match_pixel_oracle((w, h, p, boxes) in arb_boxes()) {
            let g = blank_grid(w, h, p);
            prop_assert_eq!(label_patches(&g, &boxes), pixel_oracle(&g, &boxes));
        }

        #[test]
        fn shifting_by_one_patch_shifts_labels((w, h, p, boxes) in arb_boxes()) {
            let g = blank_grid(w, h, p);
            let shifted_boxes: Vec<_> =
                boxes.iter().map(|b| TextBox::new(b.x0 + p, b.y0, b.x1 + p, b.y1).unwrap()).collect();
            let g2 = blank_grid(g.source().width() + p, h, p);
            let before = label_patches(&g, &boxes);
            let after = label_patches(&g2, &shifted_boxes);
            for r in 0..before.rows() {
                prop_assert!(!after.get(r, 0));
                for c in 0..before.cols() {
                    prop_assert_eq!(after.get(r, c + 1), before.get(r, c));
                }
            }
        }
    }
}
