//! Confusion-matrix metrics, model evaluation, linear probing and the
//! domain-gap report.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uda_autograd::{Graph, Tensor};

use crate::config::ProbeConfig;
use crate::data::{image_batch, onehot_batch, ClassSet, Image, SegMask, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::losses::seg_ce;
use crate::nets::{Binder, Segmenter, CLASSIFIER};
use crate::trainer::{Adam, Split};

/// `counts[g·K + p]`: pixels with ground truth `g` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, pred: &SegMask, gt: &SegMask) -> Result<()> {
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            return Err(Error::Shape(format!(
                "prediction {}×{} vs ground truth {}×{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        pred.validate(self.k)?;
        gt.validate(self.k)?;
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            self.counts[g as usize * self.k + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::Shape(format!("confusion matrices over {} and {} classes", self.k, other.k)));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }
}

/// Returns `cm` with the pixels of one prediction added.
pub fn accumulate_cm(pred: &SegMask, gt: &SegMask, mut cm: ConfusionMatrix) -> Result<ConfusionMatrix> {
    cm.add(pred, gt)?;
    Ok(cm)
}

/// `TP / (TP + FP + FN)` per class; `None` when the class is absent from
/// both prediction and ground truth.
pub fn iou_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    let k = cm.k;
    (0..k)
        .map(|c| {
            let tp = cm.get(c, c);
            let fn_: u64 = (0..k).filter(|&p| p != c).map(|p| cm.get(c, p)).sum();
            let fp: u64 = (0..k).filter(|&g| g != c).map(|g| cm.get(g, c)).sum();
            let denom = tp + fp + fn_;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect()
}

/// Mean over the subset's classes, skipping undefined entries.
pub fn miou(ious: &[Option<f64>], subset: &ClassSet) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    if ious.len() != subset.total() {
        return Err(Error::Shape(format!("{} IoUs for a {}-class set", ious.len(), subset.total())));
    }
    let vals: Vec<f64> = subset.classes().iter().filter_map(|&c| ious[c]).collect();
    if vals.is_empty() {
        return Err(Error::EmptySubset);
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Anything that segments an image of a split.
pub trait Predict {
    /// `index` is the image's position in the evaluated split.
    fn predict(&self, index: usize, image: &Image) -> Result<SegMask>;
}

impl Predict for Segmenter {
    fn predict(&self, _index: usize, image: &Image) -> Result<SegMask> {
        Segmenter::predict(self, image)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub iou: Vec<Option<f64>>,
    pub subset: Vec<usize>,
    pub miou: f64,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, v) in self.classes.iter().zip(&self.iou) {
            match v {
                Some(v) => s.push_str(&format!("{name:<12} {:6.2}\n", 100.0 * v)),
                None => s.push_str(&format!("{name:<12}    n/a\n")),
            }
        }
        s.push_str(&format!("{:<12} {:6.2}\n", "mIoU", 100.0 * self.miou));
        s
    }
}

/// Whole-image evaluation over a labelled split with one global confusion
/// matrix.
pub fn evaluate_model(f: &dyn Predict, split: &Split, subset: &ClassSet) -> Result<EvalReport> {
    let masks = split.masks()?;
    let mut cm = ConfusionMatrix::new(subset.total());
    for (i, (img, gt)) in split.images.iter().zip(masks).enumerate() {
        cm.add(&f.predict(i, img)?, gt)?;
    }
    let iou = iou_per_class(&cm);
    Ok(EvalReport {
        classes: (0..subset.total())
            .map(|c| CLASS_NAMES.get(c).map_or_else(|| format!("class{c}"), |s| s.to_string()))
            .collect(),
        miou: miou(&iou, subset)?,
        iou,
        subset: subset.classes().to_vec(),
        confusion: cm,
    })
}

/// Retrains only the final classification layer on labelled target images,
/// with the trunk features computed once.
pub fn linear_probe(f: &Segmenter, labelled: &Split, cfg: &ProbeConfig, seed: u64) -> Result<Segmenter> {
    let mut out = f.clone();
    if cfg.steps == 0 || labelled.is_empty() {
        return Ok(out);
    }
    let masks = labelled.masks()?;
    let feats = labelled
        .images
        .iter()
        .map(|img| f.features(&image_batch(&[img])?))
        .collect::<Result<Vec<_>>>()?;
    let mut head = f.params.filtered(|n| n.starts_with(CLASSIFIER));
    let mut opt = Adam::new(cfg.lr, 1.0, 0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9_0be);
    let k = f.cfg.num_classes;
    for _ in 0..cfg.steps {
        let picks: Vec<usize> = (0..cfg.batch_size).map(|_| rng.gen_range(0..labelled.len())).collect();
        let x = Tensor::stack(&picks.iter().map(|&i| feats[i].clone()).collect::<Vec<_>>())?;
        let y = onehot_batch(&picks.iter().map(|&i| &masks[i]).collect::<Vec<_>>(), k)?;
        let (h, w) = (masks[picks[0]].height(), masks[picks[0]].width());
        let mut g = Graph::<f32>::new();
        let b = Binder::bind(&mut g, &head, "", |_| true);
        let xv = g.constant(x);
        let z = Segmenter::build_head(&f.cfg, &mut g, &b, "", xv, h, w);
        let l = seg_ce(g.value(z), &y)?;
        let grads = g.backward(&[(z, l.grads.into_iter().next().expect("grad"))]);
        opt.step(&mut head, &b.grads(&g, &grads, ""))?;
    }
    for (name, t) in head.iter() {
        *out.params.get_mut(name).expect("classifier parameter") = t.clone();
    }
    Ok(out)
}

const MASK_COLOURS: [[u8; 3]; 8] = [
    [40, 40, 40],
    [128, 64, 128],
    [220, 200, 0],
    [70, 130, 180],
    [220, 20, 60],
    [0, 160, 80],
    [250, 170, 30],
    [150, 100, 200],
];

/// Side-by-side `input | prediction | ground truth` PNG for inspection.
pub fn dump_triptych(image: &Image, pred: &SegMask, gt: &SegMask, path: &Path) -> Result<()> {
    let (h, w) = (image.height() as u32, image.width() as u32);
    let rgb = image.to_rgb8();
    let colour = |m: &SegMask, x: u32, y: u32| Rgb(MASK_COLOURS[m.get(y as usize, x as usize) as usize % MASK_COLOURS.len()]);
    let out = RgbImage::from_fn(3 * w, h, |x, y| match x / w {
        0 => *rgb.get_pixel(x, y),
        1 => colour(pred, x - w, y),
        _ => colour(gt, x - 2 * w, y),
    });
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    out.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

/// Share of the source-to-upper-bound gap a method leaves open and closes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub upper_miou: f64,
    pub source_miou: f64,
    pub method_miou: f64,
    pub remaining_gap_pct: f64,
    pub closed_gap_pct: f64,
}

pub fn gap_report(upper: f64, source: f64, method: f64) -> Result<GapReport> {
    if upper == source {
        return Err(Error::UndefinedGap(upper));
    }
    if upper < source {
        return Err(Error::config("gap.upper", "upper bound must not be below the source-only score"));
    }
    let remaining = (upper - method) / (upper - source) * 100.0;
    Ok(GapReport {
        upper_miou: upper,
        source_miou: source,
        method_miou: method,
        remaining_gap_pct: remaining,
        closed_gap_pct: 100.0 - remaining,
    })
}
