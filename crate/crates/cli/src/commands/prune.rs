use prunedoc::maskops::{coverage_ratio, dilate, threshold_logits};
use prunedoc::pruner::{prune, reindex, token_reduction, write_ptok};
use prunedoc::{Classifier, GrayImage, IndexStrategy, PatchGrid};

use super::emit;
use crate::args::PruneArgs;
use crate::failure::{CmdResult, Failure};
use crate::manifest::RunManifest;
use crate::EXIT_FULLY_PRUNED;

/// Metrics: `grid_rows`, `grid_cols`, `total_patches`, `raw_retained`, `L`,
/// `coverage`, `token_reduction`.
pub fn run(a: PruneArgs) -> CmdResult {
    let model = Classifier::load(&a.model)?;
    let image = GrayImage::open(&a.image)?;
    let grid = PatchGrid::new(&image, model.patch_size())?;
    let raw = threshold_logits(&model.classify_grid(&grid)?);
    let mask = if a.pool == 1 { raw.clone() } else { dilate(&raw, a.pool)? };
    let mut set = prune(&grid, &mask)?;
    if a.strategy != IndexStrategy::Preserved {
        set = reindex(&set, a.strategy, a.seed)?;
    }

    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::io(parent.display(), e))?;
    }
    let (json_path, bin_path) = write_ptok(&set, &a.out)?;

    let mut manifest = RunManifest::new("prune", &a, a.seed);
    manifest.input(&a.model);
    manifest.input(&a.image);
    manifest.output(&json_path);
    manifest.output(&bin_path);
    let reduction = token_reduction(&set)?;
    manifest.metric("grid_rows", grid.rows() as f64);
    manifest.metric("grid_cols", grid.cols() as f64);
    manifest.metric("total_patches", grid.len() as f64);
    manifest.metric("raw_retained", raw.count_ones() as f64);
    manifest.metric("L", set.len() as f64);
    manifest.metric("coverage", coverage_ratio(&mask)?);
    manifest.metric("token_reduction", reduction);
    emit(&manifest, a.manifest.as_ref(), &a.out)?;

    println!(
        "{}: kept {} of {} patches ({reduction:.1}% reduction) -> {}",
        a.image.display(),
        set.len(),
        grid.len(),
        json_path.display()
    );
    if set.is_empty() {
        eprintln!("warning: {} is fully pruned (L=0)", a.image.display());
        return Ok(EXIT_FULLY_PRUNED);
    }
    Ok(0)
}
