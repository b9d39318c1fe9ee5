use prunedoc::pruner::read_ptok;
use prunedoc::{GrayImage, PrunedTokenSet};

use super::emit;
use crate::args::OverlayArgs;
use crate::failure::{CmdResult, Failure};
use crate::manifest::RunManifest;

const BORDER: [u8; 3] = [255, 0, 0];

/// RGB rendering of `img`: pixels of dropped patches at half intensity,
/// one-pixel red outline around every kept patch.
pub fn render(img: &GrayImage, set: &PrunedTokenSet) -> Vec<u8> {
    let p = set.patch_size;
    let mut kept = vec![false; set.grid_area()];
    for t in &set.tokens {
        kept[set.raster_index(t)] = true;
    }
    let mut rgb = Vec::with_capacity(img.width() * img.height() * 3);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (r, c) = (y / p, x / p);
            let v = img.get(x, y);
            if !kept[r * set.grid_cols + c] {
                rgb.extend_from_slice(&[v / 2; 3]);
                continue;
            }
            let (dy, dx) = (y % p, x % p);
            let bottom = (r + 1) * p - 1;
            let right = (c + 1) * p - 1;
            let edge = dy == 0 || dx == 0 || y == bottom.min(img.height() - 1) || x == right.min(img.width() - 1);
            rgb.extend_from_slice(&if edge { BORDER } else { [v; 3] });
        }
    }
    rgb
}

/// Metrics: `L`, `total_patches`.
pub fn run(a: OverlayArgs) -> CmdResult {
    let img = GrayImage::open(&a.image)?;
    let set = read_ptok(&a.tokens)?;
    if set.source_image != (img.width(), img.height()) {
        return Err(Failure::usage(format!(
            "token set was cut from a {}x{} image but {} is {}x{}",
            set.source_image.0,
            set.source_image.1,
            a.image.display(),
            img.width(),
            img.height()
        )));
    }
    let rgb = render(&img, &set);
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, rgb).expect("buffer sized to image");
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::io(parent.display(), e))?;
    }
    buf.save(&a.out).map_err(|e| Failure::io(a.out.display(), e))?;

    let mut manifest = RunManifest::new("overlay", &a, 0);
    manifest.input(&a.image);
    manifest.input(&a.tokens);
    manifest.output(&a.out);
    manifest.metric("L", set.len() as f64);
    manifest.metric("total_patches", set.grid_area() as f64);
    emit(&manifest, a.manifest.as_ref(), &a.out)?;
    println!("{} of {} patches outlined in {}", set.len(), set.grid_area(), a.out.display());
    Ok(0)
}
