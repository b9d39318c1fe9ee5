//! Grayscale rasters and the non-overlapping `P×P` patch lattice laid over them.

use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::{Error, Result};

/// Intensity used for padding; white is document background.
pub const PAD_VALUE: u8 = 255;

/// 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::MalformedInput(format!("image dimensions {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::MalformedInput(format!("{} bytes for a {width}x{height} image", data.len())));
        }
        Ok(Self { width, height, data })
    }

    /// Image of a single intensity.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Reads PNG (gray, RGB or RGBA) or binary PGM.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?;
        Self::from_dynamic(img)
    }

    pub fn from_dynamic(img: DynamicImage) -> Result<Self> {
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                Self::new(w as usize, h as usize, g.into_raw())
            }
            DynamicImage::ImageLumaA8(g) => {
                let (w, h) = g.dimensions();
                let data = g.into_raw().chunks_exact(2).map(|p| p[0]).collect();
                Self::new(w as usize, h as usize, data)
            }
            other => {
                // alpha is dropped, not composited
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                to_grayscale(w as usize, h as usize, rgb.as_raw())
            }
        }
    }

    /// Writes PNG or PGM depending on the file extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let format = ImageFormat::from_path(path)?;
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("length checked at construction");
        buf.save_with_format(path, format)?;
        Ok(())
    }
}

/// BT.601 luma of an interleaved 8-bit RGB raster.
pub fn to_grayscale(width: usize, height: usize, rgb: &[u8]) -> Result<GrayImage> {
    if width == 0 || height == 0 || rgb.len() != 3 * width * height {
        return Err(Error::MalformedInput(format!("{} RGB bytes for a {width}x{height} image", rgb.len())));
    }
    let data = rgb
        .chunks_exact(3)
        .map(|p| {
            let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(width, height, data)
}

/// Grows the image right and down to multiples of `patch_size`, filling with white.
pub fn pad_to_multiple(img: &GrayImage, patch_size: usize) -> Result<GrayImage> {
    if patch_size == 0 {
        return Err(Error::Config("patch size must be at least 1".into()));
    }
    let width = img.width.div_ceil(patch_size) * patch_size;
    let height = img.height.div_ceil(patch_size) * patch_size;
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let mut data = vec![PAD_VALUE; width * height];
    for (dst, src) in data.chunks_exact_mut(width).zip(img.data.chunks_exact(img.width)) {
        dst[..img.width].copy_from_slice(src);
    }
    GrayImage::new(width, height, data)
}

/// A padded image viewed as a `rows × cols` lattice of `P×P` patches.
///
/// Patch `(r, c)` has linear index `r * cols + c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    patch_size: usize,
    rows: usize,
    cols: usize,
    source: GrayImage,
    original_width: usize,
    original_height: usize,
}

/// One cell of a [`PatchGrid`] with its pixels copied out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub index: usize,
    pub pixels: Vec<u8>,
}

impl PatchGrid {
    pub fn new(img: &GrayImage, patch_size: usize) -> Result<Self> {
        let source = pad_to_multiple(img, patch_size)?;
        Ok(Self {
            patch_size,
            rows: source.height / patch_size,
            cols: source.width / patch_size,
            source,
            original_width: img.width,
            original_height: img.height,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Padded raster.
    pub fn source(&self) -> &GrayImage {
        &self.source
    }

    pub fn pad_value(&self) -> u8 {
        PAD_VALUE
    }

    /// Size of the image before padding.
    pub fn original_size(&self) -> (usize, usize) {
        (self.original_width, self.original_height)
    }

    #[inline]
    pub fn index_of(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Writes the pixels of patch `(row, col)` into `out` (length `P²`) without bounds
    /// checking the coordinates beyond slice indexing.
    pub fn copy_patch_into(&self, row: usize, col: usize, out: &mut [u8]) {
        let p = self.patch_size;
        let w = self.source.width;
        for (dy, dst) in out.chunks_exact_mut(p).enumerate() {
            let start = (row * p + dy) * w + col * p;
            dst.copy_from_slice(&self.source.data[start..start + p]);
        }
    }

    pub fn patch_at(&self, row: usize, col: usize) -> Result<Patch> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::Bounds { row, col, rows: self.rows, cols: self.cols });
        }
        let mut pixels = vec![0; self.patch_size * self.patch_size];
        self.copy_patch_into(row, col, &mut pixels);
        Ok(Patch { row, col, index: self.index_of(row, col), pixels })
    }

    /// All patches in raster order.
    pub fn patches(&self) -> impl Iterator<Item = Patch> + '_ {
        (0..self.rows)
            .flat_map(move |r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| self.patch_at(r, c).expect("in range"))
    }
}

/// Same as [`PatchGrid::new`].
pub fn extract_grid(img: &GrayImage, patch_size: usize) -> Result<PatchGrid> {
    PatchGrid::new(img, patch_size)
}

/// Reassembles patches given in raster order into a `cols·P × rows·P` raster.
pub fn assemble(patch_size: usize, rows: usize, cols: usize, patches: &[Vec<u8>]) -> Result<GrayImage> {
    if patches.len() != rows * cols {
        return Err(Error::Shape { expected: rows * cols, actual: patches.len() });
    }
    let width = cols * patch_size;
    let mut data = vec![0u8; width * rows * patch_size];
    for (i, px) in patches.iter().enumerate() {
        if px.len() != patch_size * patch_size {
            return Err(Error::Shape { expected: patch_size * patch_size, actual: px.len() });
        }
        let (r, c) = (i / cols, i % cols);
        for (dy, src) in px.chunks_exact(patch_size).enumerate() {
            let start = (r * patch_size + dy) * width + c * patch_size;
            data[start..start + patch_size].copy_from_slice(src);
        }
    }
    GrayImage::new(width, rows * patch_size, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(rgb: [u8; 3]) -> u8 {
        to_grayscale(1, 1, &rgb).unwrap().data()[0]
    }

    #[test]
    fn grayscale_fixed_points_and_red() {
        assert_eq!(gray([255, 255, 255]), 255);
        assert_eq!(gray([0, 0, 0]), 0);
        assert_eq!(gray([255, 0, 0]), 76);
    }

    #[test]
    fn grayscale_rejects_bad_length() {
        assert!(matches!(to_grayscale(2, 2, &[0; 11]), Err(Error::MalformedInput(_))));
        assert!(matches!(to_grayscale(0, 2, &[]), Err(Error::MalformedInput(_))));
    }

    #[test]
    fn image_invariants() {
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
        assert!(GrayImage::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn padding() {
        let img = GrayImage::filled(28, 28, 7).unwrap();
        assert_eq!(pad_to_multiple(&img, 28).unwrap(), img);

        let img = GrayImage::filled(29, 28, 0).unwrap();
        let padded = pad_to_multiple(&img, 28).unwrap();
        assert_eq!((padded.width(), padded.height()), (56, 28));
        for y in 0..28 {
            assert!((0..29).all(|x| padded.get(x, y) == 0));
            assert!((29..56).all(|x| padded.get(x, y) == 255));
        }

        let padded = pad_to_multiple(&GrayImage::filled(100, 60, 0).unwrap(), 28).unwrap();
        assert_eq!((padded.width(), padded.height()), (112, 84));
        assert!(pad_to_multiple(&img, 0).is_err());
    }

    #[test]
    fn grid_geometry() {
        let grid = extract_grid(&GrayImage::filled(56, 56, 0).unwrap(), 28).unwrap();
        assert_eq!((grid.rows(), grid.cols()), (2, 2));
        let idx: Vec<_> = grid.patches().map(|p| p.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);

        let grid = extract_grid(&GrayImage::filled(2481, 3507, 0).unwrap(), 28).unwrap();
        assert_eq!((grid.cols(), grid.rows()), (89, 126));
        assert_eq!((grid.source().width(), grid.source().height()), (2492, 3528));

        let grid = extract_grid(&GrayImage::filled(1, 1, 0).unwrap(), 28).unwrap();
        assert_eq!((grid.rows(), grid.cols()), (1, 1));
        let p = grid.patch_at(0, 0).unwrap();
        assert_eq!(p.pixels[0], 0);
        assert!(p.pixels[1..].iter().all(|&v| v == 255));
    }

    #[test]
    fn patch_indices() {
        let grid = extract_grid(&GrayImage::filled(56, 56, 0).unwrap(), 28).unwrap();
        assert_eq!(grid.patch_at(0, 0).unwrap().index, 0);
        assert_eq!(grid.patch_at(1, 0).unwrap().index, 2);
        let grid = extract_grid(&GrayImage::filled(10, 4, 0).unwrap(), 1).unwrap();
        assert_eq!(grid.patch_at(3, 5).unwrap().index, 35);
        assert!(matches!(grid.patch_at(4, 0), Err(Error::Bounds { .. })));
        assert!(matches!(grid.patch_at(0, 10), Err(Error::Bounds { .. })));
    }

    fn arb_image() -> impl Strategy<Value = GrayImage> {
        (1usize..40, 1usize..40).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h).prop_map(move |d| GrayImage::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn indices_are_a_bijection(img in arb_image(), p in 1usize..9) {
            let grid = extract_grid(&img, p).unwrap();
            let mut seen = vec![false; grid.len()];
            for patch in grid.patches() {
                prop_assert_eq!(patch.index, patch.row * grid.cols() + patch.col);
                prop_assert_eq!(patch.pixels.len(), p * p);
                prop_assert!(!seen[patch.index]);
                seen[patch.index] = true;
            }
            prop_assert!(seen.into_iter().all(|s| s));
        }

        #[test]
        fn reassembly_reproduces_padded_image(img in arb_image(), p in 1usize..9) {
            let grid = extract_grid(&img, p).unwrap();
            let pixels: Vec<_> = grid.patches().map(|p| p.pixels).collect();
            let back = assemble(p, grid.rows(), grid.cols(), &pixels).unwrap();
            prop_assert_eq!(&back, grid.source());
        }

        #[test]
        fn padding_is_idempotent(img in arb_image(), p in 1usize..9) {
            let once = pad_to_multiple(&img, p).unwrap();
            prop_assert_eq!(pad_to_multiple(&once, p).unwrap(), once);
        }
    }
}
