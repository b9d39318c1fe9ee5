//! Two-layer text/background patch scorer.
//!
//! `flatten → linear(P² → hidden) → ReLU → linear(hidden → 1)`, fed with
//! pixels divided by 255. A logit above zero means "keep this patch".

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::imagegrid::PatchGrid;
use crate::{Error, ParseError, Real, Result};

pub const MODEL_MAGIC: &[u8; 6] = b"PDCLS1";
pub const DEFAULT_HIDDEN_DIM: usize = 256;

/// Number of trainable parameters for patch side `patch_size` and `hidden_dim` units.
pub const fn param_count(patch_size: usize, hidden_dim: usize) -> usize {
    patch_size * patch_size * hidden_dim + 2 * hidden_dim + 1
}

/// Classifier parameters, stored flat in file order: `W1` (row-major,
/// `hidden × P²`), `b1`, `w2`, `b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel<T> {
    patch_size: usize,
    hidden_dim: usize,
    params: Vec<T>,
}

/// Per-patch logits of a grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMap<T> {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
}

impl<T: Copy> LogitMap<T> {
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }
}

impl<T: Real> ClassifierModel<T> {
    /// All-zero model; every logit is `b2 = 0`.
    pub fn zeros(patch_size: usize, hidden_dim: usize) -> Result<Self> {
        check_dims(patch_size, hidden_dim)?;
        Ok(Self { patch_size, hidden_dim, params: vec![T::zero(); param_count(patch_size, hidden_dim)] })
    }

    /// Weights drawn from `N(0, 1/√fan_in)`, biases zero.
    pub fn init(patch_size: usize, hidden_dim: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        let mut model = Self::zeros(patch_size, hidden_dim)?;
        let d = model.input_dim();
        let std1 = 1.0 / (d as f64).sqrt();
        let std2 = 1.0 / (hidden_dim as f64).sqrt();
        for w in model.w1_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = T::of(z * std1);
        }
        for w in model.w2_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = T::of(z * std2);
        }
        Ok(model)
    }

    /// Builds a model from explicit parameter blocks.
    pub fn from_parts(patch_size: usize, hidden_dim: usize, w1: &[T], b1: &[T], w2: &[T], b2: T) -> Result<Self> {
        check_dims(patch_size, hidden_dim)?;
        let d = patch_size * patch_size;
        for (got, want) in [(w1.len(), hidden_dim * d), (b1.len(), hidden_dim), (w2.len(), hidden_dim)] {
            if got != want {
                return Err(Error::Shape { expected: want, actual: got });
            }
        }
        let mut params = Vec::with_capacity(param_count(patch_size, hidden_dim));
        params.extend_from_slice(w1);
        params.extend_from_slice(b1);
        params.extend_from_slice(w2);
        params.push(b2);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(Self { patch_size, hidden_dim, params })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn input_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn w1(&self) -> &[T] {
        &self.params[..self.hidden_dim * self.input_dim()]
    }

    fn w1_mut(&mut self) -> &mut [T] {
        let n = self.hidden_dim * self.input_dim();
        &mut self.params[..n]
    }

    pub fn b1(&self) -> &[T] {
        let o = self.hidden_dim * self.input_dim();
        &self.params[o..o + self.hidden_dim]
    }

    pub fn w2(&self) -> &[T] {
        let o = self.hidden_dim * (self.input_dim() + 1);
        &self.params[o..o + self.hidden_dim]
    }

    fn w2_mut(&mut self) -> &mut [T] {
        let o = self.hidden_dim * (self.input_dim() + 1);
        let h = self.hidden_dim;
        &mut self.params[o..o + h]
    }

    pub fn b2(&self) -> T {
        self.params[self.params.len() - 1]
    }

    /// Logit for raw 8-bit pixels.
    pub fn forward(&self, pixels: &[u8]) -> Result<T> {
        if pixels.len() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), actual: pixels.len() });
        }
        let x: Vec<T> = pixels.iter().map(|&v| normalize(v)).collect();
        Ok(self.forward_normalized(&x))
    }

    /// Logit for pixels already scaled to `[0, 1]`. `x.len()` must be `P²`.
    pub fn forward_normalized(&self, x: &[T]) -> T {
        let d = self.input_dim();
        let (w1, b1, w2) = (self.w1(), self.b1(), self.w2());
        let mut z = self.b2();
        for j in 0..self.hidden_dim {
            let pre = dot(&w1[j * d..(j + 1) * d], x) + b1[j];
            if pre > T::zero() {
                z = z + w2[j] * pre;
            }
        }
        z
    }

    /// Adds the gradient of `bce(forward(x), y)` into `grad` and returns the loss.
    ///
    /// `hidden` is scratch space of length `hidden_dim`.
    pub(crate) fn accumulate_grad(&self, x: &[T], label: T, grad: &mut [T], hidden: &mut [T]) -> T {
        let d = self.input_dim();
        let h = self.hidden_dim;
        let (w1, b1, w2) = (self.w1(), self.b1(), self.w2());
        let mut z = self.b2();
        for j in 0..h {
            let pre = dot(&w1[j * d..(j + 1) * d], x) + b1[j];
            hidden[j] = pre;
            if pre > T::zero() {
                z = z + w2[j] * pre;
            }
        }
        let dz = sigmoid(z) - label;
        let (gw1, rest) = grad.split_at_mut(h * d);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(h);
        gb2[0] = gb2[0] + dz;
        for j in 0..h {
            let pre = hidden[j];
            if pre > T::zero() {
                gw2[j] = gw2[j] + dz * pre;
                let da = dz * w2[j];
                gb1[j] = gb1[j] + da;
                for (g, &xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g = *g + da * xi;
                }
            }
        }
        bce_with_logits(z, label)
    }

    /// Logits for every patch of `grid`.
    pub fn classify_grid(&self, grid: &PatchGrid) -> Result<LogitMap<T>> {
        if grid.patch_size() != self.patch_size {
            return Err(Error::Config(format!(
                "model patch size {} does not match grid patch size {}",
                self.patch_size,
                grid.patch_size()
            )));
        }
        let mut buf = vec![0u8; self.input_dim()];
        let mut x = vec![T::zero(); self.input_dim()];
        let mut values = Vec::with_capacity(grid.len());
        for r in 0..grid.rows() {
            for c in 0..grid.cols() {
                grid.copy_patch_into(r, c, &mut buf);
                for (xi, &v) in x.iter_mut().zip(&buf) {
                    *xi = normalize(v);
                }
                values.push(self.forward_normalized(&x));
            }
        }
        Ok(LogitMap { rows: grid.rows(), cols: grid.cols(), values })
    }

    /// Mean binary cross-entropy over a dataset.
    pub fn mean_loss(&self, data: &PatchDataset) -> T {
        let mut x = vec![T::zero(); self.input_dim()];
        let mut total = 0.0;
        for s in &data.entries {
            for (xi, &v) in x.iter_mut().zip(&s.pixels) {
                *xi = normalize(v);
            }
            total += bce_with_logits(self.forward_normalized(&x), T::of(s.label as f64)).to_f64_lossy();
        }
        T::of(total / data.len().max(1) as f64)
    }

    pub fn scores(&self, data: &PatchDataset) -> Vec<T> {
        data.entries.iter().map(|s| self.forward(&s.pixels).expect("dataset patch size matches")).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + 4 * self.params.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(self.patch_size as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden_dim as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_f32_lossy().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
            return Err(ParseError::BadMagic.into());
        }
        if bytes.len() < 14 {
            return Err(ParseError::Truncated { expected: 14, actual: bytes.len() }.into());
        }
        let patch_size = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let hidden_dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        if patch_size == 0 || hidden_dim == 0 {
            return Err(ParseError::Invariant("zero patch size or hidden dimension".into()).into());
        }
        let expected = 14 + 4 * param_count(patch_size, hidden_dim);
        if bytes.len() < expected {
            return Err(ParseError::Truncated { expected, actual: bytes.len() }.into());
        }
        if bytes.len() > expected {
            return Err(ParseError::Trailing.into());
        }
        let params: Vec<T> =
            bytes[14..].chunks_exact(4).map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64)).collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ParseError::Invariant("non-finite parameter".into()).into());
        }
        Ok(Self { patch_size, hidden_dim, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn check_dims(patch_size: usize, hidden_dim: usize) -> Result<()> {
    if patch_size == 0 || hidden_dim == 0 {
        return Err(Error::Config(format!("patch size {patch_size} and hidden dim {hidden_dim} must be positive")));
    }
    Ok(())
}

#[inline]
fn normalize<T: Real>(v: u8) -> T {
    T::of(v as f64 / 255.0)
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `max(z, 0) − z·y + ln(1 + e^−|z|)`.
#[inline]
pub fn bce_with_logits<T: Real>(z: T, y: T) -> T {
    z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
}

/// One labeled patch; `label` is 1 for text, 0 for background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub pixels: Vec<u8>,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchDataset {
    patch_size: usize,
    entries: Vec<Sample>,
}

impl PatchDataset {
    pub fn new(patch_size: usize, entries: Vec<Sample>) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::Config("patch size must be at least 1".into()));
        }
        let d = patch_size * patch_size;
        for s in &entries {
            if s.pixels.len() != d {
                return Err(Error::Shape { expected: d, actual: s.pixels.len() });
            }
            if s.label > 1 {
                return Err(Error::MalformedInput(format!("label {} is not 0 or 1", s.label)));
            }
        }
        Ok(Self { patch_size, entries })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn entries(&self) -> &[Sample] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.entries.iter().map(|s| s.label).collect()
    }

    /// `(background, foreground)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let fg = self.entries.iter().filter(|s| s.label == 1).count();
        (self.entries.len() - fg, fg)
    }

    /// Seeded split into `(train, holdout)` with `round(fraction · len)` holdout samples.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> (PatchDataset, PatchDataset) {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_hold = ((fraction * self.entries.len() as f64).round() as usize).min(self.entries.len());
        let (hold, train) = order.split_at(n_hold);
        let mut hold = hold.to_vec();
        let mut train = train.to_vec();
        hold.sort_unstable();
        train.sort_unstable();
        let pick = |idx: &[usize]| PatchDataset {
            patch_size: self.patch_size,
            entries: idx.iter().map(|&i| self.entries[i].clone()).collect(),
        };
        (pick(&train), pick(&hold))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: DEFAULT_HIDDEN_DIM,
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 10,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("batch size, epochs and hidden dim must be positive".into()));
        }
        Ok(())
    }
}

/// Result of [`train_with_history`].
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: ClassifierModel<T>,
    /// Mean BCE over the whole training set after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Fits a classifier with mini-batch Adam on binary cross-entropy.
///
/// Identical `(data, cfg)` yield bit-identical parameters.
pub fn train<T: Real>(data: &PatchDataset, cfg: &TrainConfig) -> Result<ClassifierModel<T>> {
    train_with_history(data, cfg).map(|o| o.model)
}

pub fn train_with_history<T: Real>(data: &PatchDataset, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::DegenerateData("empty dataset".into()));
    }
    let (bg, fg) = data.class_counts();
    if bg == 0 || fg == 0 {
        return Err(Error::DegenerateData(format!("dataset has {bg} background and {fg} foreground patches")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ClassifierModel::<T>::init(data.patch_size, cfg.hidden_dim, &mut rng)?;
    let d = model.input_dim();
    let n_params = model.param_count();

    let inputs: Vec<T> = data.entries.iter().flat_map(|s| s.pixels.iter().map(|&v| normalize(v))).collect();
    let labels: Vec<T> = data.entries.iter().map(|s| T::of(s.label as f64)).collect();

    let (beta1, beta2) = (T::of(cfg.adam_beta1), T::of(cfg.adam_beta2));
    let (lr, eps) = (T::of(cfg.learning_rate), T::of(cfg.adam_eps));
    let mut m = vec![T::zero(); n_params];
    let mut v = vec![T::zero(); n_params];
    let mut grad = vec![T::zero(); n_params];
    let mut hidden = vec![T::zero(); cfg.hidden_dim];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0i32;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            for &i in batch {
                model.accumulate_grad(&inputs[i * d..(i + 1) * d], labels[i], &mut grad, &mut hidden);
            }
            let scale = T::one() / T::of(batch.len() as f64);
            step += 1;
            let bc1 = T::one() - beta1.powi(step);
            let bc2 = T::one() - beta2.powi(step);
            for k in 0..n_params {
                let g = grad[k] * scale;
                m[k] = beta1 * m[k] + (T::one() - beta1) * g;
                v[k] = beta2 * v[k] + (T::one() - beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                model.params[k] = model.params[k] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        let loss = (0..data.len())
            .map(|i| bce_with_logits(model.forward_normalized(&inputs[i * d..(i + 1) * d]), labels[i]).to_f64_lossy())
            .sum::<f64>()
            / data.len() as f64;
        epoch_losses.push(loss);
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::DegenerateData("training diverged".into()));
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// Average precision of a ranking: mean over positives of the precision at
/// each positive's rank. Ties keep input order.
pub fn average_precision<T: PartialOrd + Copy>(scores: &[T], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape { expected: scores.len(), actual: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l != 0).count();
    if positives == 0 {
        return Err(Error::DegenerateData("average precision is undefined without positives".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] != 0 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}
