use std::path::PathBuf;

use prunedoc::pruner::read_ptok;
use prunedoc::{Error, PipelineProfile};
use rayon::prelude::*;
use serde::Serialize;

use super::emit;
use crate::args::StatsArgs;
use crate::failure::{CmdResult, Failure};
use crate::manifest::{write_file, RunManifest};

#[derive(Serialize)]
struct FileStats {
    file: String,
    total_patches: u64,
    retained: u64,
    token_reduction: f64,
    /// Absent for fully pruned files, which have no meaningful pipeline cost.
    flops_reduction: Option<f64>,
    original_flops: u128,
    pruned_flops: Option<u128>,
}

#[derive(Serialize)]
struct FullyPruned {
    file: String,
    score: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    profile: &'a PipelineProfile,
    files: Vec<FileStats>,
    fully_pruned: Vec<FullyPruned>,
    mean_token_reduction: f64,
    /// Mean over files with at least one retained token; absent if there are none.
    mean_flops_reduction: Option<f64>,
    flops_files: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn file_stats(path: &PathBuf, profile: &PipelineProfile) -> Result<FileStats, Failure> {
    let set = read_ptok(path).map_err(|e| match e {
        Error::Io(io) => Failure::io(path.display(), io),
        other => Failure { message: format!("{}: {other}", path.display()), ..other.into() },
    })?;
    let total = set.grid_area() as u64;
    let retained = set.len() as u64;
    let report = profile.reduction_report(total, retained)?;
    let empty = retained == 0;
    Ok(FileStats {
        file: path.display().to_string(),
        total_patches: total,
        retained,
        token_reduction: report.token_reduction,
        flops_reduction: (!empty).then_some(report.flops_reduction),
        original_flops: report.original_flops,
        pruned_flops: (!empty).then_some(report.pruned_flops),
    })
}

/// Metrics: `files`, `fully_pruned`, `mean_token_reduction` and, when some
/// file retains tokens, `mean_flops_reduction`.
pub fn run(a: StatsArgs) -> CmdResult {
    let profile = PipelineProfile::resolve(&a.profile)?;
    let mut paths = glob::glob(&a.tokens)
        .map_err(|e| Failure::usage(format!("--tokens {:?}: {e}", a.tokens)))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::io(e.path().display(), e.error()))?;
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::usage(format!("--tokens {:?} matched no files", a.tokens)));
    }

    let files: Vec<FileStats> = paths.par_iter().map(|p| file_stats(p, &profile)).collect::<Result<_, _>>()?;
    let fully_pruned: Vec<FullyPruned> =
        files.iter().filter(|f| f.retained == 0).map(|f| FullyPruned { file: f.file.clone(), score: 0.0 }).collect();
    let mean_token_reduction = mean(files.iter().map(|f| f.token_reduction)).expect("at least one file");
    let mean_flops_reduction = mean(files.iter().filter_map(|f| f.flops_reduction));
    let flops_files = files.len() - fully_pruned.len();
    let report =
        Report { profile: &profile, files, fully_pruned, mean_token_reduction, mean_flops_reduction, flops_files };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_file(&a.out, text.as_bytes())?;

    let mut manifest = RunManifest::new("stats", &a, 0);
    for p in &paths {
        manifest.input(p);
    }
    manifest.output(&a.out);
    manifest.metric("files", report.files.len() as f64);
    manifest.metric("fully_pruned", report.fully_pruned.len() as f64);
    manifest.metric("mean_token_reduction", mean_token_reduction);
    if let Some(m) = mean_flops_reduction {
        manifest.metric("mean_flops_reduction", m);
    }
    emit(&manifest, a.manifest.as_ref(), &a.out)?;

    let flops = mean_flops_reduction.map_or_else(|| "n/a".to_owned(), |m| format!("{m:.1}%"));
    println!(
        "{} files ({} fully pruned): mean token reduction {mean_token_reduction:.1}%, mean FLOPs reduction {flops} [{}]",
        report.files.len(),
        report.fully_pruned.len(),
        profile.name
    );
    Ok(0)
}
