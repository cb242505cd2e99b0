use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uda_autograd::Tensor;

use super::batch::Split;
use crate::data::{argmax_masks, image_batch, SegMask};
use crate::error::{Error, Result};
use crate::losses::softmax;
use crate::nets::Segmenter;

/// Confidence summary of a pseudo-label set. Low-confidence pixels keep
/// their argmax label; they are only counted here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub threshold: f64,
    /// Fraction of pixels whose top softmax probability reaches `threshold`.
    pub confident_fraction: f64,
    pub mean_max_prob: f64,
    pub min_max_prob: f64,
    pub max_max_prob: f64,
    pub class_fractions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelSet {
    /// One mask per target-train image, in split order.
    pub masks: Vec<SegMask>,
    pub coverage: Coverage,
}

const CHUNK: usize = 16;

/// Labels every target image with the teacher's per-pixel argmax.
pub fn generate_pseudo_labels(teacher: &Segmenter, targets: &Split, threshold: f64) -> Result<PseudoLabelSet> {
    let k = teacher.cfg.num_classes;
    let mut masks = Vec::with_capacity(targets.len());
    let mut sum_max = 0.0;
    let mut min_max = f64::INFINITY;
    let mut max_max: f64 = 0.0;
    let mut confident = 0usize;
    let mut pixels = 0usize;
    let mut counts = vec![0u64; k];
    for chunk in targets.images.chunks(CHUNK) {
        let x: Tensor<f32> = image_batch(&chunk.iter().collect::<Vec<_>>())?;
        let logits = teacher.logits(&x)?;
        let p = softmax(&logits);
        let (n, _, h, w) = p.dims4();
        let hw = h * w;
        for s in 0..n {
            for i in 0..hw {
                let m = (0..k).map(|c| p.data()[(s * k + c) * hw + i] as f64).fold(0.0, f64::max);
                sum_max += m;
                min_max = min_max.min(m);
                max_max = max_max.max(m);
                confident += (m >= threshold) as usize;
            }
        }
        pixels += n * hw;
        for mask in argmax_masks(&logits) {
            for (c, v) in counts.iter_mut().zip(mask.histogram(k)) {
                *c += v;
            }
            masks.push(mask);
        }
    }
    let px = pixels.max(1) as f64;
    Ok(PseudoLabelSet {
        masks,
        coverage: Coverage {
            threshold,
            confident_fraction: confident as f64 / px,
            mean_max_prob: sum_max / px,
            min_max_prob: if pixels == 0 { 0.0 } else { min_max },
            max_max_prob: max_max,
            class_fractions: counts.iter().map(|&c| c as f64 / px).collect(),
        },
    })
}

impl PseudoLabelSet {
    /// Writes one mask PNG per image (named by scene seed) and the coverage
    /// report.
    pub fn save(&self, dir: &Path, seeds: &[u64]) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (m, s) in self.masks.iter().zip(seeds) {
            m.save(&dir.join(format!("pl_{s}.png")))?;
        }
        let p = dir.join("coverage.json");
        fs::write(&p, serde_json::to_string_pretty(&self.coverage)?).map_err(|e| Error::io(&p, e))
    }

    pub fn load(dir: &Path, seeds: &[u64]) -> Result<Self> {
        let p = dir.join("coverage.json");
        if !p.exists() {
            return Err(Error::Prerequisite(format!("pseudo-labels not found in {}", dir.display())));
        }
        let coverage = serde_json::from_str(&fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?;
        let masks = seeds
            .iter()
            .map(|s| SegMask::load(&dir.join(format!("pl_{s}.png"))))
            .collect::<Result<_>>()?;
        Ok(PseudoLabelSet { masks, coverage })
    }
}
