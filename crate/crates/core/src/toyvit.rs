//! A small untrained vision transformer whose positional encoding is keyed
//! on each patch's grid position.
//!
//! Two entry points run the same weights:
//!
//! * [`ToyVit::forward_full_masked`] embeds every patch of the grid and
//!   blocks attention to dropped keys with `−∞` logits;
//! * [`ToyVit::forward_pruned`] embeds only the tokens of a
//!   [`PrunedTokenSet`], placing each at the position decoded from its
//!   assigned index.
//!
//! All normalization is per token, so with preserved indices the two agree
//! up to rounding. Any other index assignment moves tokens to the wrong
//! positional embedding and the outputs drift apart.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::imagegrid::PatchGrid;
use crate::maskops::BinaryMask;
use crate::pruner::PrunedTokenSet;
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PosMode {
    /// One learned vector per grid cell.
    Learned2dTable,
    /// Sinusoids of the row in the first half of the channels, of the column in the second.
    Sinusoidal2d,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToyVitConfig {
    pub layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub ffn: usize,
    pub pos_mode: PosMode,
    pub patch_size: usize,
    pub seed: u64,
}

impl ToyVitConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.layers, self.dim, self.heads, self.ffn, self.patch_size].contains(&0) {
            return Err(Error::Config("toy encoder sizes must be positive".into()));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("dim {} not divisible by {} heads", self.dim, self.heads)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct LayerWeights<T> {
    ln1_gain: Vec<T>,
    ln1_bias: Vec<T>,
    wq: Vec<T>,
    wk: Vec<T>,
    wv: Vec<T>,
    wo: Vec<T>,
    ln2_gain: Vec<T>,
    ln2_bias: Vec<T>,
    w_up: Vec<T>,
    b_up: Vec<T>,
    w_down: Vec<T>,
    b_down: Vec<T>,
}

/// Seeded weights for a fixed `grid_rows × grid_cols` layout.
#[derive(Clone, Debug)]
pub struct ToyVit<T> {
    cfg: ToyVitConfig,
    grid_rows: usize,
    grid_cols: usize,
    embed_w: Vec<T>,
    embed_b: Vec<T>,
    pos_table: Vec<T>,
    layers: Vec<LayerWeights<T>>,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn gauss<T: Real>(&mut self, n: usize, std: f64, mean: f64) -> Vec<T> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                T::of(mean + std * z)
            })
            .collect()
    }

    fn linear<T: Real>(&mut self, out: usize, inp: usize) -> Vec<T> {
        self.gauss(out * inp, 1.0 / (inp as f64).sqrt(), 0.0)
    }
}

impl<T: Real> ToyVit<T> {
    pub fn new(cfg: ToyVitConfig, grid_rows: usize, grid_cols: usize) -> Result<Self> {
        cfg.validate()?;
        if grid_rows == 0 || grid_cols == 0 {
            return Err(Error::Config("toy encoder grid must be non-empty".into()));
        }
        let mut init = Init { rng: ChaCha8Rng::seed_from_u64(cfg.seed) };
        let d = cfg.dim;
        let embed_w = init.linear(d, cfg.patch_size * cfg.patch_size);
        let embed_b = init.gauss(d, 0.1, 0.0);
        let pos_table = match cfg.pos_mode {
            PosMode::Learned2dTable => init.gauss(grid_rows * grid_cols * d, 1.0, 0.0),
            PosMode::Sinusoidal2d => Vec::new(),
        };
        let layers = (0..cfg.layers)
            .map(|_| LayerWeights {
                ln1_gain: init.gauss(d, 0.1, 1.0),
                ln1_bias: init.gauss(d, 0.1, 0.0),
                wq: init.linear(d, d),
                wk: init.linear(d, d),
                wv: init.linear(d, d),
                wo: init.linear(d, d),
                ln2_gain: init.gauss(d, 0.1, 1.0),
                ln2_bias: init.gauss(d, 0.1, 0.0),
                w_up: init.linear(cfg.ffn, d),
                b_up: init.gauss(cfg.ffn, 0.1, 0.0),
                w_down: init.linear(d, cfg.ffn),
                b_down: init.gauss(d, 0.1, 0.0),
            })
            .collect();
        Ok(Self { cfg, grid_rows, grid_cols, embed_w, embed_b, pos_table, layers })
    }

    pub fn config(&self) -> &ToyVitConfig {
        &self.cfg
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    /// Positional vector for grid cell `(row, col)`.
    pub fn position(&self, row: usize, col: usize) -> Vec<T> {
        let d = self.cfg.dim;
        match self.cfg.pos_mode {
            PosMode::Learned2dTable => {
                let i = row * self.grid_cols + col;
                self.pos_table[i * d..(i + 1) * d].to_vec()
            }
            PosMode::Sinusoidal2d => {
                let half = d / 2;
                let mut out = sinusoid::<T>(row, half);
                out.extend(sinusoid::<T>(col, d - half));
                out
            }
        }
    }

    fn embed(&self, pixels: &[u8], row: usize, col: usize) -> Vec<T> {
        let x: Vec<T> = pixels.iter().map(|&v| T::of(v as f64 / 255.0)).collect();
        let mut e = matvec(&self.embed_w, self.cfg.dim, &x);
        for ((v, b), p) in e.iter_mut().zip(&self.embed_b).zip(self.position(row, col)) {
            *v = *v + *b + p;
        }
        e
    }

    /// Runs the layer stack. Keys with `key_mask[j] == false` get zero attention.
    fn encode(&self, mut xs: Vec<Vec<T>>, key_mask: Option<&[bool]>) -> Vec<Vec<T>> {
        let d = self.cfg.dim;
        let heads = self.cfg.heads;
        let hd = d / heads;
        let scale = T::one() / T::of(hd as f64).sqrt();
        let n = xs.len();
        for layer in &self.layers {
            let normed: Vec<Vec<T>> = xs.iter().map(|x| layer_norm(x, &layer.ln1_gain, &layer.ln1_bias)).collect();
            let q: Vec<Vec<T>> = normed.iter().map(|x| matvec(&layer.wq, d, x)).collect();
            let k: Vec<Vec<T>> = normed.iter().map(|x| matvec(&layer.wk, d, x)).collect();
            let v: Vec<Vec<T>> = normed.iter().map(|x| matvec(&layer.wv, d, x)).collect();
            let mut scores = vec![T::zero(); n];
            for i in 0..n {
                let mut mixed = vec![T::zero(); d];
                for h in 0..heads {
                    let span = h * hd..(h + 1) * hd;
                    for j in 0..n {
                        scores[j] = dot(&q[i][span.clone()], &k[j][span.clone()]) * scale;
                    }
                    let probs = masked_softmax(&scores, key_mask);
                    for (j, &p) in probs.iter().enumerate() {
                        for (m, &vv) in mixed[span.clone()].iter_mut().zip(&v[j][span.clone()]) {
                            *m = *m + p * vv;
                        }
                    }
                }
                let out = matvec(&layer.wo, d, &mixed);
                for (x, o) in xs[i].iter_mut().zip(out) {
                    *x = *x + o;
                }
            }
            for x in xs.iter_mut() {
                let h = layer_norm(x, &layer.ln2_gain, &layer.ln2_bias);
                let mut up = matvec(&layer.w_up, self.cfg.ffn, &h);
                for (u, b) in up.iter_mut().zip(&layer.b_up) {
                    *u = gelu(*u + *b);
                }
                let down = matvec(&layer.w_down, d, &up);
                for ((xv, dv), b) in x.iter_mut().zip(down).zip(&layer.b_down) {
                    *xv = *xv + dv + *b;
                }
            }
        }
        xs
    }

    fn check_grid(&self, rows: usize, cols: usize, patch_size: usize) -> Result<()> {
        if (rows, cols) != (self.grid_rows, self.grid_cols) || patch_size != self.cfg.patch_size {
            return Err(Error::Config(format!(
                "input is a {rows}x{cols} grid of {patch_size}px patches, encoder expects {}x{} of {}px",
                self.grid_rows, self.grid_cols, self.cfg.patch_size
            )));
        }
        Ok(())
    }

    /// Full-grid run with dropped patches masked out as keys; returns the
    /// outputs of kept patches in raster order.
    pub fn forward_full_masked(&self, grid: &PatchGrid, mask: &BinaryMask) -> Result<Vec<Vec<T>>> {
        self.check_grid(grid.rows(), grid.cols(), grid.patch_size())?;
        if (mask.rows(), mask.cols()) != (grid.rows(), grid.cols()) {
            return Err(Error::Config("mask and grid dimensions differ".into()));
        }
        if mask.count_ones() == 0 {
            return Err(Error::DegenerateData("no retained tokens".into()));
        }
        let xs = grid.patches().map(|p| self.embed(&p.pixels, p.row, p.col)).collect();
        let out = self.encode(xs, Some(mask.bits()));
        Ok(out.into_iter().zip(mask.bits()).filter_map(|(o, &keep)| keep.then_some(o)).collect())
    }

    /// Pruned-sequence run; positions come from each token's assigned index.
    pub fn forward_pruned(&self, set: &PrunedTokenSet) -> Result<Vec<Vec<T>>> {
        self.check_grid(set.grid_rows, set.grid_cols, set.patch_size)?;
        if set.is_empty() {
            return Err(Error::DegenerateData("no retained tokens".into()));
        }
        let area = self.grid_rows * self.grid_cols;
        let xs = set
            .tokens
            .iter()
            .map(|t| {
                if t.assigned_index >= area {
                    return Err(Error::Config(format!("index {} outside grid of {area}", t.assigned_index)));
                }
                let (r, c) = (t.assigned_index / self.grid_cols, t.assigned_index % self.grid_cols);
                Ok(self.embed(&t.pixels, r, c))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.encode(xs, None))
    }
}

fn sinusoid<T: Real>(pos: usize, width: usize) -> Vec<T> {
    (0..width)
        .map(|k| {
            let pair = (k / 2 * 2) as f64;
            let freq = 1.0 / 10_000f64.powf(pair / width.max(1) as f64);
            let a = pos as f64 * freq;
            T::of(if k % 2 == 0 { a.sin() } else { a.cos() })
        })
        .collect()
}

/// Softmax over `scores`, giving exactly zero weight where `mask` is false.
pub fn masked_softmax<T: Real>(scores: &[T], mask: Option<&[bool]>) -> Vec<T> {
    let allowed = |j: usize| mask.is_none_or(|m| m[j]);
    let max = scores.iter().enumerate().filter(|&(j, _)| allowed(j)).map(|(_, &s)| s).fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = scores
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let logit = if allowed(j) { s } else { T::neg_infinity() };
            (logit - max).exp()
        })
        .collect();
    let sum = out.iter().fold(T::zero(), |a, &b| a + b);
    out.iter_mut().for_each(|p| *p = *p / sum);
    out
}

fn layer_norm<T: Real>(x: &[T], gain: &[T], bias: &[T]) -> Vec<T> {
    let n = T::of(x.len() as f64);
    let mean = x.iter().fold(T::zero(), |a, &b| a + b) / n;
    let var = x.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / n;
    let inv = T::one() / (var + T::of(1e-5)).sqrt();
    x.iter().zip(gain).zip(bias).map(|((&v, &g), &b)| (v - mean) * inv * g + b).collect()
}

fn gelu<T: Real>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    T::of(0.5) * x * (T::one() + (c * (x + T::of(0.044715) * x * x * x)).tanh())
}

fn matvec<T: Real>(w: &[T], rows: usize, x: &[T]) -> Vec<T> {
    let cols = x.len();
    (0..rows).map(|r| dot(&w[r * cols..(r + 1) * cols], x)).collect()
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Largest elementwise `|a − b|`.
pub fn max_abs_diff<T: Real>(a: &[Vec<T>], b: &[Vec<T>]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| (p - q).abs().to_f64_lossy())).fold(0.0, f64::max)
}

/// True when every element satisfies `|a − b| ≤ rel·max(|a|, |b|) + abs`.
pub fn all_close<T: Real>(a: &[Vec<T>], b: &[Vec<T>], rel: f64, abs: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.len() == y.len()
                && x.iter().zip(y).all(|(&p, &q)| {
                    let (p, q) = (p.to_f64_lossy(), q.to_f64_lossy());
                    (p - q).abs() <= rel * p.abs().max(q.abs()) + abs
                })
        })
}
