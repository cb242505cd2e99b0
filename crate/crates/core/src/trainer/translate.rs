use std::fs;
use std::path::Path;

use super::batch::Split;
use crate::data::{image_batch, Image};
use crate::error::{Error, Result};
use crate::nets::Translate;
use crate::toyworld::{Manifest, ManifestEntry};

pub const TRANSLATED_MANIFEST: &str = "translated.tsv";

const CHUNK: usize = 16;

/// Translates every source image and writes the results under
/// `out/translated/`, each paired with its original source mask.
pub fn translate_dataset(t: &dyn Translate, sources: &Manifest, out: &Path) -> Result<Manifest> {
    let dir = out.join("translated");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let base = fs::canonicalize(out).map_err(|e| Error::io(out, e))?;
    let mut entries = Vec::with_capacity(sources.len());
    for chunk in sources.entries.chunks(CHUNK) {
        let imgs = chunk
            .iter()
            .map(|e| Image::load(&sources.image_path(e)))
            .collect::<Result<Vec<_>>>()?;
        let y = t.translate(&image_batch(&imgs.iter().collect::<Vec<_>>())?)?;
        for (i, e) in chunk.iter().enumerate() {
            let img = Image::from_tensor(&y, i)?;
            let rel = Path::new("translated").join(format!("img_{}.png", e.seed));
            img.save(&out.join(&rel))?;
            let mask = match sources.mask_path(e) {
                Some(p) => {
                    // Relative to `out`, so that a run directory can be moved.
                    let abs = fs::canonicalize(&p).map_err(|err| Error::io(&p, err))?;
                    Some(pathdiff::diff_paths(&abs, &base).unwrap_or(abs))
                }
                None => None,
            };
            entries.push(ManifestEntry {
                image: rel,
                mask,
                domain: e.domain,
                seed: e.seed,
            });
        }
    }
    let m = Manifest {
        root: out.to_path_buf(),
        entries,
    };
    m.write(&out.join(TRANSLATED_MANIFEST))?;
    Ok(m)
}

/// Per-channel histograms of per-image channel means over `[-1, 1]`,
/// each normalised to unit mass and concatenated.
pub fn channel_mean_histogram(images: &[Image], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; 3 * bins];
    for img in images {
        let hw = (img.height() * img.width()) as f64;
        for c in 0..3 {
            let plane = &img.data()[c * img.height() * img.width()..(c + 1) * img.height() * img.width()];
            let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / hw;
            let b = (((mean + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);
            h[c * bins + b] += 1.0;
        }
    }
    let n = images.len().max(1) as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

pub fn histogram_l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Mean absolute per-value reconstruction error `|G(x) − x|` on a split.
pub fn identity_error(t: &dyn Translate, split: &Split) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for chunk in split.images.chunks(CHUNK) {
        let x = image_batch(&chunk.iter().collect::<Vec<_>>())?;
        let y = t.translate(&x)?;
        total += x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>();
        n += x.len();
    }
    Ok(total / n.max(1) as f64)
}
