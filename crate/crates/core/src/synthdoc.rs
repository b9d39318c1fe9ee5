//! Seeded synthetic document pages and receipts with word-level boxes.
//!
//! Glyphs are abstract ink blocks made of full-height vertical strokes and a
//! horizontal bar; they carry texture, not legibility. Every word yields one
//! box that covers its ink exactly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::imagegrid::GrayImage;
use crate::labeler::{AnnotationSet, TextBox};
use crate::{Error, Result};

/// Horizontal space between glyphs of one word.
pub const GLYPH_GAP: usize = 3;
const NOISE_STREAM: u64 = 0x6e6f_6973_6521;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    Page,
    Receipt,
}

impl std::str::FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "page" => Ok(Self::Page),
            "receipt" => Ok(Self::Receipt),
            _ => Err(Error::Config(format!("unknown synth mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub mode: SynthMode,
    pub width: usize,
    pub height: usize,
    pub margin: usize,
    pub line_height: usize,
    pub glyph_height: usize,
    pub glyph_width_range: [usize; 2],
    pub word_len_range: [usize; 2],
    pub word_gap: usize,
    pub line_gap: usize,
    pub noise_sigma: f64,
    pub ink_intensity_range: [u8; 2],
    pub fill_ratio: f64,
}

impl SynthSpec {
    /// A4 at 300 DPI with body text around 32 px tall.
    pub fn page() -> Self {
        Self {
            mode: SynthMode::Page,
            width: 2481,
            height: 3507,
            margin: 150,
            line_height: 48,
            glyph_height: 32,
            glyph_width_range: [14, 24],
            word_len_range: [2, 9],
            word_gap: 16,
            line_gap: 24,
            noise_sigma: 6.0,
            ink_intensity_range: [20, 90],
            fill_ratio: 0.7,
        }
    }

    /// Narrow till slip: short item lines, right-aligned amounts, blank runs.
    pub fn receipt() -> Self {
        Self { mode: SynthMode::Receipt, width: 900, height: 2600, margin: 60, fill_ratio: 0.45, ..Self::page() }
    }

    pub fn for_mode(mode: SynthMode) -> Self {
        match mode {
            SynthMode::Page => Self::page(),
            SynthMode::Receipt => Self::receipt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synth spec: {m}")));
        if [self.width, self.height, self.line_height, self.glyph_height].contains(&0) {
            return fail("dimensions must be positive");
        }
        if 2 * self.margin >= self.width.min(self.height) {
            return fail("margins leave no printable area");
        }
        if self.glyph_height > self.line_height {
            return fail("glyph taller than line");
        }
        if self.line_height > self.height - 2 * self.margin {
            return fail("line taller than printable area");
        }
        let [gmin, gmax] = self.glyph_width_range;
        let [wmin, wmax] = self.word_len_range;
        if gmin == 0 || gmin > gmax || wmin == 0 || wmin > wmax {
            return fail("glyph width and word length ranges must be non-empty and positive");
        }
        if self.ink_intensity_range[0] > self.ink_intensity_range[1] {
            return fail("ink intensity range reversed");
        }
        if !(0.0..=1.0).contains(&self.fill_ratio) {
            return fail("fill ratio outside [0, 1]");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise sigma must be finite and non-negative");
        }
        Ok(())
    }

    fn pitch(&self) -> usize {
        self.line_height + self.line_gap
    }

    fn printable_width(&self) -> usize {
        self.width - 2 * self.margin
    }

    /// Number of line slots on the page.
    pub fn line_slots(&self) -> usize {
        (self.height - 2 * self.margin - self.line_height) / self.pitch() + 1
    }

    fn mean_word_width(&self) -> f64 {
        let glyphs = mid(self.word_len_range);
        glyphs * mid(self.glyph_width_range) + (glyphs - 1.0) * GLYPH_GAP as f64
    }

    /// Expected fraction of `patch_size` patches that overlap a box, derived
    /// from the layout distribution rather than from any rendered page.
    ///
    /// A run of `n` pixels at a uniformly random lattice offset touches
    /// `1 + (n − 1)/P` cells on average; lines and segments are assumed to be
    /// separated by more than a patch.
    pub fn expected_patch_coverage(&self, patch_size: usize) -> f64 {
        let p = patch_size as f64;
        let touched = |n: f64| if n <= 0.0 { 0.0 } else { 1.0 + (n - 1.0) / p };
        let avail = self.printable_width() as f64;
        let word = self.mean_word_width();
        let slack = (word + self.word_gap as f64) / 2.0;
        let cols_per_line = match self.mode {
            SynthMode::Page => touched((PAGE_LINE_FRACTION_MEAN * avail - slack).max(word)),
            SynthMode::Receipt => {
                let left = touched((RECEIPT_LEFT_FRACTION_MEAN * avail - slack).max(word));
                let amount = mid(RECEIPT_AMOUNT_GLYPHS_RANGE);
                let right = amount * mid(self.glyph_width_range) + (amount - 1.0) * GLYPH_GAP as f64;
                left + RECEIPT_AMOUNT_PROBABILITY * touched(right)
            }
        };
        let rows = touched(self.glyph_height as f64);
        let grid_rows = self.height.div_ceil(patch_size) as f64;
        let grid_cols = self.width.div_ceil(patch_size) as f64;
        (self.line_slots() as f64 * self.fill_ratio * rows * cols_per_line / (grid_rows * grid_cols)).min(1.0)
    }
}

const PAGE_LINE_FRACTION: [f64; 2] = [0.6, 1.0];
const PAGE_LINE_FRACTION_MEAN: f64 = 0.8;
const RECEIPT_LEFT_FRACTION: [f64; 2] = [0.25, 0.55];
const RECEIPT_LEFT_FRACTION_MEAN: f64 = 0.4;
const RECEIPT_AMOUNT_PROBABILITY: f64 = 0.6;
const RECEIPT_AMOUNT_GLYPHS_RANGE: [usize; 2] = [3, 6];
const RECEIPT_BLOCK_LINES: [usize; 2] = [1, 4];

fn mid(r: [usize; 2]) -> f64 {
    (r[0] + r[1]) as f64 / 2.0
}

struct Glyph {
    x: usize,
    width: usize,
}

struct Word {
    glyphs: Vec<Glyph>,
    y: usize,
}

impl Word {
    fn bbox(&self, height: usize) -> TextBox {
        let first = &self.glyphs[0];
        let last = self.glyphs.last().expect("words are non-empty");
        TextBox { x0: first.x, y0: self.y, x1: last.x + last.width, y1: self.y + height }
    }
}

/// Renders a page for `(spec, seed)`; identical inputs give identical outputs.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<(GrayImage, AnnotationSet)> {
    let (mut img, ann) = generate_clean(spec, seed)?;
    add_noise(&mut img, spec.noise_sigma, seed ^ NOISE_STREAM);
    Ok((img, ann))
}

/// Same as [`generate`] before scanner noise is added.
pub fn generate_clean(spec: &SynthSpec, seed: u64) -> Result<(GrayImage, AnnotationSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = layout(spec, &mut rng);
    let mut img = GrayImage::filled(spec.width, spec.height, 255)?;
    let mut boxes = Vec::with_capacity(words.len());
    for w in &words {
        let ink_range = spec.ink_intensity_range[0]..=spec.ink_intensity_range[1];
        for g in &w.glyphs {
            let ink = rng.random_range(ink_range.clone());
            draw_glyph(&mut img, g, w.y, spec.glyph_height, ink, &mut rng);
        }
        boxes.push(w.bbox(spec.glyph_height));
    }
    Ok((img, AnnotationSet { image_id: format!("synth-{seed}.png"), boxes }))
}

fn layout(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Word> {
    let mut words = Vec::new();
    let avail = spec.printable_width() as f64;
    let left = spec.margin;
    let right = spec.width - spec.margin;
    let glyph_offset = (spec.line_height - spec.glyph_height) / 2;
    let populated = populated_lines(spec, rng);
    for (slot, &populated) in populated.iter().enumerate() {
        let y = spec.margin + slot * spec.pitch() + glyph_offset;
        if !populated {
            continue;
        }
        match spec.mode {
            SynthMode::Page => {
                let frac = rng.random_range(PAGE_LINE_FRACTION[0]..=PAGE_LINE_FRACTION[1]);
                let end = left + (frac * avail) as usize;
                fill_segment(spec, rng, left, end, right, y, &mut words);
            }
            SynthMode::Receipt => {
                let frac = rng.random_range(RECEIPT_LEFT_FRACTION[0]..=RECEIPT_LEFT_FRACTION[1]);
                let end = left + (frac * avail) as usize;
                let line_end = fill_segment(spec, rng, left, end, right, y, &mut words);
                if rng.random_bool(RECEIPT_AMOUNT_PROBABILITY) {
                    let n = rng.random_range(RECEIPT_AMOUNT_GLYPHS_RANGE[0]..=RECEIPT_AMOUNT_GLYPHS_RANGE[1]);
                    let widths = glyph_widths(spec, rng, n);
                    let total = word_width(&widths);
                    if right >= total && right - total > line_end + spec.word_gap {
                        words.push(place_word(&widths, right - total, y));
                    }
                }
            }
        }
    }
    words
}

/// Marks exactly `round(fill_ratio · slots)` line slots as populated.
///
/// Slots are cut into consecutive blocks (single lines on pages, 1–4 lines on
/// receipts) and whole blocks are switched on in seeded order.
fn populated_lines(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let slots = spec.line_slots();
    let target = (spec.fill_ratio * slots as f64).round() as usize;
    let mut blocks = Vec::new();
    let mut start = 0;
    while start < slots {
        let len = match spec.mode {
            SynthMode::Page => 1,
            SynthMode::Receipt => rng.random_range(RECEIPT_BLOCK_LINES[0]..=RECEIPT_BLOCK_LINES[1]),
        };
        let end = (start + len).min(slots);
        blocks.push(start..end);
        start = end;
    }
    blocks.shuffle(rng);
    let mut out = vec![false; slots];
    let mut remaining = target;
    for block in blocks {
        if remaining == 0 {
            break;
        }
        for slot in block.take(remaining) {
            out[slot] = true;
            remaining -= 1;
        }
    }
    out
}

/// Places words from `start` while they end before `target`, never past `hard_end`.
/// Returns the x after the last placed word.
fn fill_segment(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    start: usize,
    target: usize,
    hard_end: usize,
    y: usize,
    words: &mut Vec<Word>,
) -> usize {
    let mut cursor = start;
    let mut last_end = start;
    let mut placed = false;
    loop {
        let n = rng.random_range(spec.word_len_range[0]..=spec.word_len_range[1]);
        let widths = glyph_widths(spec, rng, n);
        let w = word_width(&widths);
        if cursor + w > hard_end || (placed && cursor + w > target) {
            break;
        }
        words.push(place_word(&widths, cursor, y));
        last_end = cursor + w;
        cursor = last_end + spec.word_gap;
        placed = true;
    }
    last_end
}

fn glyph_widths(spec: &SynthSpec, rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(spec.glyph_width_range[0]..=spec.glyph_width_range[1])).collect()
}

fn word_width(widths: &[usize]) -> usize {
    widths.iter().sum::<usize>() + GLYPH_GAP * (widths.len() - 1)
}

fn place_word(widths: &[usize], x: usize, y: usize) -> Word {
    let mut cursor = x;
    let glyphs = widths
        .iter()
        .map(|&width| {
            let g = Glyph { x: cursor, width };
            cursor += width + GLYPH_GAP;
            g
        })
        .collect();
    Word { glyphs, y }
}

fn draw_glyph(img: &mut GrayImage, g: &Glyph, y: usize, height: usize, ink: u8, rng: &mut ChaCha8Rng) {
    let mut fill = |x0: usize, x1: usize, y0: usize, y1: usize| {
        for yy in y0..y1 {
            for xx in x0..x1 {
                img.set(xx, yy, ink);
            }
        }
    };
    let stroke = |rng: &mut ChaCha8Rng| rng.random_range(2..=4usize).min(g.width);
    let s = stroke(rng);
    fill(g.x, g.x + s, y, y + height);
    let s = stroke(rng);
    fill(g.x + g.width - s, g.x + g.width, y, y + height);
    if g.width >= 12 && rng.random_bool(0.5) {
        let s = stroke(rng);
        let mx = g.x + rng.random_range(4..=g.width - 4 - s);
        fill(mx, mx + s, y, y + height);
    }
    let bar = rng.random_range(2..=4usize).min(height);
    let by = y + rng.random_range(0..=height - bar);
    fill(g.x, g.x + g.width, by, by + bar);
}

fn add_noise(img: &mut GrayImage, sigma: f64, seed: u64) {
    if sigma == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let (w, h) = (img.width(), img.height());
    for y in 0..h {
        for x in 0..w {
            let v = img.get(x, y) as f64 + normal.sample(&mut rng);
            img.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
}
