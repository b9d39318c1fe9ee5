use prunedoc::classifier::train_with_history;
use prunedoc::labeler::{build_dataset, discover_annotated};
use prunedoc::{average_precision, AnnotationSet, Error, GrayImage, TextBox, TrainConfig};
use rayon::prelude::*;

use super::emit;
use crate::args::TrainArgs;
use crate::failure::{CmdResult, Failure};
use crate::manifest::RunManifest;

/// Metrics: `patches_train`, `patches_val`, `param_count`, `train_bce`,
/// `val_bce`, `val_ap` (the last two only with a non-empty holdout).
pub fn run(a: TrainArgs) -> CmdResult {
    if a.patch_size == 0 {
        return Err(Failure::usage("--patch-size must be positive"));
    }
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(Failure::usage("--holdout must lie in [0, 1)"));
    }
    let pairs = discover_annotated(&a.corpus).map_err(|e| Failure::io(a.corpus.display(), e))?;
    if pairs.is_empty() {
        return Err(Error::DegenerateData(format!("no annotated images in {}", a.corpus.display())).into());
    }
    let pages: Vec<(GrayImage, Vec<TextBox>)> = pairs
        .par_iter()
        .map(|(img, ann)| Ok((GrayImage::open(img)?, AnnotationSet::load(ann)?.boxes)))
        .collect::<Result<_, Error>>()?;

    let data = build_dataset(pages.iter().map(|(i, b)| (i, b.as_slice())), a.patch_size, a.per_class_cap, a.seed)?;
    let (train_set, val_set) = data.split_holdout(a.holdout, a.seed);
    let cfg = TrainConfig {
        hidden_dim: a.hidden_dim,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let outcome = train_with_history::<f32>(&train_set, &cfg)?;
    let model = outcome.model;
    model.save(&a.out)?;

    let mut manifest = RunManifest::new("train", &a, a.seed);
    for (img, ann) in &pairs {
        manifest.input(img);
        manifest.input(ann);
    }
    manifest.output(&a.out);
    let (bg, fg) = data.class_counts();
    manifest.metric("patches_background", bg as f64);
    manifest.metric("patches_foreground", fg as f64);
    manifest.metric("patches_train", train_set.len() as f64);
    manifest.metric("patches_val", val_set.len() as f64);
    manifest.metric("param_count", model.param_count() as f64);
    let train_bce = outcome.epoch_losses.last().copied().unwrap_or(f64::NAN);
    manifest.metric("train_bce", train_bce);
    let mut summary = format!("train BCE {train_bce:.4}");
    if !val_set.is_empty() {
        let val_bce = f64::from(model.mean_loss(&val_set));
        manifest.metric("val_bce", val_bce);
        summary.push_str(&format!(", val BCE {val_bce:.4}"));
        match average_precision(&model.scores(&val_set), &val_set.labels()) {
            Ok(ap) => {
                manifest.metric("val_ap", ap);
                summary.push_str(&format!(", val AP {ap:.4}"));
            }
            Err(e) => eprintln!("warning: val AP undefined: {e}"),
        }
    }
    emit(&manifest, a.manifest.as_ref(), &a.out)?;
    println!("{summary}; {} parameters written to {}", model.param_count(), a.out.display());
    Ok(0)
}
