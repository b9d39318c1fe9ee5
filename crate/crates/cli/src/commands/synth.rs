use std::path::PathBuf;

use prunedoc::synthdoc::generate;
use prunedoc::{SynthMode, SynthSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::SynthArgs;
use crate::failure::{CmdResult, Failure};
use crate::manifest::{write_file, RunManifest};

#[derive(Serialize)]
struct CorpusItem {
    image: String,
    annotation: String,
    seed: u64,
    mode: SynthMode,
}

#[derive(Serialize)]
struct Corpus<'a> {
    spec: &'a SynthSpec,
    items: Vec<CorpusItem>,
}

struct Rendered {
    item: CorpusItem,
    boxes: usize,
}

fn load_spec(a: &SynthArgs) -> Result<SynthSpec, Failure> {
    let Some(path) = &a.spec else {
        return Ok(SynthSpec::for_mode(a.mode));
    };
    let text = std::fs::read(path).map_err(|e| Failure::io(path.display(), e))?;
    let spec: SynthSpec =
        serde_json::from_slice(&text).map_err(|e| Failure::usage(format!("spec {}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

/// Metrics: `images`, `boxes`, `expected_coverage_p28`.
pub fn run(a: SynthArgs) -> CmdResult {
    let spec = load_spec(&a)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::io(a.out.display(), e))?;
    let ext = a.format.extension();
    let mode = match spec.mode {
        SynthMode::Page => "page",
        SynthMode::Receipt => "receipt",
    };

    let rendered: Vec<Rendered> = (0..a.count)
        .into_par_iter()
        .map(|i| {
            let seed = a.seed.wrapping_add(i as u64);
            let stem = format!("{mode}-{i:04}");
            let image = format!("{stem}.{ext}");
            let annotation = format!("{stem}.json");
            let (img, mut ann) = generate(&spec, seed)?;
            ann.image_id = image.clone();
            img.save(a.out.join(&image))?;
            write_file(&a.out.join(&annotation), ann.to_json().as_bytes())?;
            Ok(Rendered { item: CorpusItem { image, annotation, seed, mode: spec.mode }, boxes: ann.boxes.len() })
        })
        .collect::<Result<_, Failure>>()?;

    let mut manifest = RunManifest::new("synth", &a, a.seed);
    if let Some(path) = &a.spec {
        manifest.input(path);
    }
    let boxes: usize = rendered.iter().map(|r| r.boxes).sum();
    for r in &rendered {
        manifest.output(a.out.join(&r.item.image));
        manifest.output(a.out.join(&r.item.annotation));
    }
    let corpus = Corpus { spec: &spec, items: rendered.into_iter().map(|r| r.item).collect() };
    let corpus_path = a.out.join("corpus.json");
    let mut text = serde_json::to_string_pretty(&corpus).expect("corpus serializes");
    text.push('\n');
    write_file(&corpus_path, text.as_bytes())?;
    manifest.output(&corpus_path);

    manifest.metric("images", corpus.items.len() as f64);
    manifest.metric("boxes", boxes as f64);
    manifest.metric("expected_coverage_p28", spec.expected_patch_coverage(28));
    let manifest_path = a.manifest.clone().unwrap_or_else(|| PathBuf::from(&a.out).join("run.json"));
    manifest.write(&manifest_path)?;
    println!("wrote {} {mode} images with {boxes} boxes to {}", corpus.items.len(), a.out.display());
    Ok(0)
}
