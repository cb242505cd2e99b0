use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uda_autograd::Tensor;

use crate::data::{image_batch, onehot_batch, Image, SegMask};
use crate::error::{Error, Result};
use crate::toyworld::{Manifest, SceneSample};

/// A split held in memory.
#[derive(Clone, Debug, Default)]
pub struct Split {
    pub images: Vec<Image>,
    pub masks: Option<Vec<SegMask>>,
    pub seeds: Vec<u64>,
}

impl Split {
    pub fn load(m: &Manifest, with_masks: bool) -> Result<Self> {
        let mut images = Vec::with_capacity(m.len());
        let mut masks = Vec::new();
        for e in &m.entries {
            images.push(Image::load(&m.image_path(e))?);
            if with_masks {
                let p = m.mask_path(e).ok_or_else(|| {
                    Error::Prerequisite(format!("{} has no ground-truth mask", e.image.display()))
                })?;
                masks.push(SegMask::load(&p)?);
            }
        }
        Ok(Split {
            images,
            masks: with_masks.then_some(masks),
            seeds: m.entries.iter().map(|e| e.seed).collect(),
        })
    }

    /// In-memory split of generated scenes.
    pub fn from_samples(samples: &[SceneSample], with_masks: bool) -> Self {
        Split {
            images: samples.iter().map(|s| s.image.clone()).collect(),
            masks: with_masks.then(|| samples.iter().map(|s| s.mask.clone()).collect()),
            seeds: samples.iter().map(|s| s.seed).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn masks(&self) -> Result<&[SegMask]> {
        self.masks
            .as_deref()
            .ok_or_else(|| Error::Prerequisite("split carries no masks".into()))
    }

    /// Splits into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Split, Split) {
        let take = |r: std::ops::Range<usize>| Split {
            images: self.images[r.clone()].to_vec(),
            masks: self.masks.as_ref().map(|m| m[r.clone()].to_vec()),
            seeds: self.seeds[r].to_vec(),
        };
        (take(0..n), take(n..self.len()))
    }
}

/// A crop window into sample `index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pick {
    pub index: usize,
    pub y0: usize,
    pub x0: usize,
}

/// Seeded sampler of random crops.
pub struct Batcher {
    rng: ChaCha8Rng,
    pub crop: usize,
}

impl Batcher {
    pub fn new(seed: u64, crop: usize) -> Self {
        Batcher {
            rng: ChaCha8Rng::seed_from_u64(seed),
            crop,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn draw(&mut self, split: &Split, n: usize) -> Vec<Pick> {
        (0..n)
            .map(|_| {
                let index = self.rng.gen_range(0..split.len());
                let img = &split.images[index];
                Pick {
                    index,
                    y0: self.rng.gen_range(0..=img.height() - self.crop),
                    x0: self.rng.gen_range(0..=img.width() - self.crop),
                }
            })
            .collect()
    }

    pub fn images(&self, split: &Split, picks: &[Pick]) -> Result<Tensor<f32>> {
        let crops = picks
            .iter()
            .map(|p| split.images[p.index].crop(p.y0, p.x0, self.crop, self.crop))
            .collect::<Result<Vec<_>>>()?;
        image_batch(&crops.iter().collect::<Vec<_>>())
    }

    pub fn onehot(&self, masks: &[SegMask], picks: &[Pick], k: usize) -> Result<Tensor<f32>> {
        let crops = picks
            .iter()
            .map(|p| masks[p.index].crop(p.y0, p.x0, self.crop, self.crop))
            .collect::<Result<Vec<_>>>()?;
        onehot_batch(&crops.iter().collect::<Vec<_>>(), k)
    }
}
