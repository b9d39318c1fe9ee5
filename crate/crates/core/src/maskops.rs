//! Foreground masks over a patch grid and their max-pool refinement.

use std::fmt::Write as _;

use crate::classifier::LogitMap;
use crate::{Error, Real, Result};

/// Per-patch keep/drop decisions, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::Shape { expected: rows * cols, actual: bits.len() });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        Self { rows, cols, bits: vec![value; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.bits[row * self.cols + col] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// `"rows cols"` followed by one line of `0`/`1` per row.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.cols + 1) * (self.rows + 1));
        writeln!(s, "{} {}", self.rows, self.cols).unwrap();
        for row in self.bits.chunks(self.cols.max(1)).take(self.rows) {
            s.extend(row.iter().map(|&b| if b { '1' } else { '0' }));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::MalformedInput("empty mask text".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::MalformedInput(format!("bad mask header {header:?}"))))
            .collect::<Result<_>>()?;
        let [rows, cols] = dims[..] else {
            return Err(Error::MalformedInput(format!("bad mask header {header:?}")));
        };
        let mut bits = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| Error::MalformedInput("missing mask row".into()))?;
            if line.len() != cols {
                return Err(Error::MalformedInput(format!("mask row of length {} (want {cols})", line.len())));
            }
            for ch in line.chars() {
                bits.push(match ch {
                    '0' => false,
                    '1' => true,
                    _ => return Err(Error::MalformedInput(format!("mask character {ch:?}"))),
                });
            }
        }
        Self::new(rows, cols, bits)
    }
}

/// Keeps patches whose logit is strictly greater than zero.
pub fn threshold_logits<T: Real>(logits: &LogitMap<T>) -> BinaryMask {
    BinaryMask { rows: logits.rows, cols: logits.cols, bits: logits.values.iter().map(|&z| z > T::zero()).collect() }
}

/// `k×k` stride-1 max-pool with zero padding, i.e. binary dilation by a square.
pub fn dilate(mask: &BinaryMask, k: usize) -> Result<BinaryMask> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::Config(format!("pooling window {k} must be odd and positive")));
    }
    let radius = k / 2;
    if radius == 0 {
        return Ok(mask.clone());
    }
    let (rows, cols) = (mask.rows, mask.cols);
    // separable: horizontal pass, then vertical
    let mut horiz = vec![false; rows * cols];
    for r in 0..rows {
        let src = &mask.bits[r * cols..(r + 1) * cols];
        let dst = &mut horiz[r * cols..(r + 1) * cols];
        for (c, &b) in src.iter().enumerate() {
            if b {
                let lo = c.saturating_sub(radius);
                let hi = (c + radius).min(cols - 1);
                dst[lo..=hi].iter_mut().for_each(|v| *v = true);
            }
        }
    }
    let mut bits = vec![false; rows * cols];
    for r in 0..rows {
        let lo = r.saturating_sub(radius);
        let hi = (r + radius).min(rows - 1);
        for c in 0..cols {
            if (lo..=hi).any(|rr| horiz[rr * cols + c]) {
                bits[r * cols + c] = true;
            }
        }
    }
    Ok(BinaryMask { rows, cols, bits })
}

/// Fraction of set bits.
pub fn coverage_ratio(mask: &BinaryMask) -> Result<f64> {
    if mask.bits.is_empty() {
        return Err(Error::DegenerateData("zero-area mask".into()));
    }
    Ok(mask.count_ones() as f64 / mask.bits.len() as f64)
}
