//! Randomized trials of the toy encoder: pruned inference with preserved
//! indices must reproduce masked full-grid inference, and every other index
//! assignment must not.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::imagegrid::{GrayImage, PatchGrid};
use crate::maskops::BinaryMask;
use crate::pruner::{prune, reindex, IndexStrategy};
use crate::toyvit::{all_close, max_abs_diff, PosMode, ToyVit, ToyVitConfig};
use crate::{Error, Result};

pub const EQUIVALENCE_REL_TOL: f64 = 1e-5;
pub const EQUIVALENCE_ABS_TOL: f64 = 1e-7;
pub const DIVERGENCE_MIN_DIFF: f64 = 1e-3;
pub const DIVERGENCE_MIN_RATE: f64 = 0.95;

const TOY_PATCH: usize = 2;

/// Grid used in each trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridChoice {
    Fixed {
        rows: usize,
        cols: usize,
    },
    /// Uniform over `1..=rows × 1..=cols` with at least two cells.
    UpTo {
        rows: usize,
        cols: usize,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct StrategyDivergence {
    pub strategy: IndexStrategy,
    /// Trials where some assigned index differs from the raster index.
    pub eligible: usize,
    pub diverged: usize,
    pub rate: f64,
    pub min_max_abs_diff: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub trials: usize,
    pub equivalence_failures: usize,
    pub max_abs_deviation: f64,
    pub max_rel_deviation: f64,
    pub equivalence_pass: bool,
    pub divergence: Vec<StrategyDivergence>,
    pub pass: bool,
}

fn random_config(rng: &mut ChaCha8Rng) -> ToyVitConfig {
    let heads = [1, 2, 4][rng.random_range(0..3)];
    let head_dim = [2, 4, 8][rng.random_range(0..3)];
    ToyVitConfig {
        layers: rng.random_range(1..=3),
        dim: heads * head_dim,
        heads,
        ffn: rng.random_range(8..=32),
        pos_mode: if rng.random_bool(0.5) { PosMode::Learned2dTable } else { PosMode::Sinusoidal2d },
        patch_size: TOY_PATCH,
        seed: rng.random(),
    }
}

fn random_grid(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<PatchGrid> {
    let (w, h) = (cols * TOY_PATCH, rows * TOY_PATCH);
    let data = (0..w * h).map(|_| rng.random()).collect();
    PatchGrid::new(&GrayImage::new(w, h, data)?, TOY_PATCH)
}

fn random_mask(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> BinaryMask {
    let density = rng.random_range(0.2..0.8);
    let mut bits: Vec<bool> = (0..rows * cols).map(|_| rng.random_bool(density)).collect();
    if !bits.contains(&true) {
        let i = rng.random_range(0..bits.len());
        bits[i] = true;
    }
    BinaryMask::new(rows, cols, bits).expect("sized to grid")
}

fn rel_deviation(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y))
        .map(|(&p, &q)| (p - q).abs() / p.abs().max(q.abs()).max(EQUIVALENCE_ABS_TOL))
        .fold(0.0, f64::max)
}

/// Runs `trials` seeded trials in `f64`.
pub fn run(grid: GridChoice, trials: usize, seed: u64) -> Result<OracleReport> {
    let (max_r, max_c) = match grid {
        GridChoice::Fixed { rows, cols } | GridChoice::UpTo { rows, cols } => (rows, cols),
    };
    if max_r * max_c < 2 {
        return Err(Error::Config(format!("oracle grid {max_r}x{max_c} needs at least two cells")));
    }
    let alternatives = [IndexStrategy::Constant, IndexStrategy::Random, IndexStrategy::Ordered];
    let mut eligible = [0usize; 3];
    let mut diverged = [0usize; 3];
    let mut min_diff = [f64::INFINITY; 3];
    let mut failures = 0;
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;

    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let (rows, cols) = match grid {
            GridChoice::Fixed { rows, cols } => (rows, cols),
            GridChoice::UpTo { rows, cols } => loop {
                let (r, c) = (rng.random_range(1..=rows), rng.random_range(1..=cols));
                if r * c >= 2 {
                    break (r, c);
                }
            },
        };
        let cfg = random_config(&mut rng);
        let vit = ToyVit::<f64>::new(cfg, rows, cols)?;
        let g = random_grid(rows, cols, &mut rng)?;
        let mask = random_mask(rows, cols, &mut rng);
        let set = prune(&g, &mask)?;

        let masked = vit.forward_full_masked(&g, &mask)?;
        let preserved = vit.forward_pruned(&set)?;
        if !all_close(&masked, &preserved, EQUIVALENCE_REL_TOL, EQUIVALENCE_ABS_TOL) {
            failures += 1;
        }
        max_abs = max_abs.max(max_abs_diff(&masked, &preserved));
        max_rel = max_rel.max(rel_deviation(&masked, &preserved));

        for (k, &strategy) in alternatives.iter().enumerate() {
            let other = reindex(&set, strategy, rng.random())?;
            let moved = other.tokens.iter().zip(&set.tokens).any(|(a, b)| a.assigned_index != b.assigned_index);
            if !moved {
                continue;
            }
            eligible[k] += 1;
            let diff = max_abs_diff(&vit.forward_pruned(&other)?, &preserved);
            min_diff[k] = min_diff[k].min(diff);
            if diff > DIVERGENCE_MIN_DIFF {
                diverged[k] += 1;
            }
        }
    }

    let divergence: Vec<_> = alternatives
        .iter()
        .enumerate()
        .map(|(k, &strategy)| {
            let rate = if eligible[k] == 0 { 1.0 } else { diverged[k] as f64 / eligible[k] as f64 };
            StrategyDivergence {
                strategy,
                eligible: eligible[k],
                diverged: diverged[k],
                rate,
                min_max_abs_diff: if eligible[k] == 0 { 0.0 } else { min_diff[k] },
                pass: rate >= DIVERGENCE_MIN_RATE,
            }
        })
        .collect();
    let equivalence_pass = failures == 0;
    let pass = equivalence_pass && divergence.iter().all(|d| d.pass);
    Ok(OracleReport {
        trials,
        equivalence_failures: failures,
        max_abs_deviation: max_abs,
        max_rel_deviation: max_rel,
        equivalence_pass,
        divergence,
        pass,
    })
}
