//! Value types shared by every stage: images, label masks and their one-hot
//! form, class subsets, named parameter collections, loss reports and the
//! loss-weight bundle.

use std::collections::BTreeMap;
use std::path::Path;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};
use uda_autograd::{Float, Tensor};

use crate::error::{Error, Result};

/// Default number of toy classes: background, road band, disc, box, pole.
pub const NUM_CLASSES: usize = 5;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["background", "road", "disc", "box", "pole"];

/// An RGB image with values in `[-1, 1]`, stored channel-major (`3 × H × W`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("image must be non-empty, got {height}x{width}")));
        }
        if data.len() != 3 * height * width {
            return Err(Error::Shape(format!(
                "image {height}x{width}x3 needs {} values, got {}",
                3 * height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::Shape(format!("image value {v} outside [-1, 1]")));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    /// Builds an image from a per-pixel function; values are clamped.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = vec![0.0; 3 * height * width];
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data[(c * height + y) * width + x] = f(y, x, c).clamp(-1.0, 1.0);
                }
            }
        }
        Image {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(height, width, |_, _, c| rgb[c])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// `1 × 3 × H × W` tensor view of the pixels.
    pub fn to_tensor<F: Float>(&self) -> Tensor<F> {
        Tensor::from_vec(
            &[1, 3, self.height, self.width],
            self.data.iter().map(|&v| F::c(v as f64)).collect(),
        )
        .expect("image tensor")
    }

    /// Reads sample `n` of an NCHW tensor, clamping into `[-1, 1]`.
    pub fn from_tensor<F: Float>(t: &Tensor<F>, n: usize) -> Result<Self> {
        let (_, c, h, w) = t.dims4();
        if c != 3 {
            return Err(Error::Shape(format!("expected 3 channels, got {c}")));
        }
        let s = t.sample(n);
        let data: Vec<f32> = s
            .data()
            .iter()
            .map(|v| (v.to_f64_lossy() as f32).clamp(-1.0, 1.0))
            .collect();
        Image::new(h, w, data)
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::Shape(format!(
                "crop {h}x{w}@({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(Image::from_fn(h, w, |y, x, c| self.get(y0 + y, x0 + x, c)))
    }

    pub fn mean_abs_diff(&self, other: &Image) -> Result<f32> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Shape("image sizes differ".into()));
        }
        let s: f32 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        Ok(s / self.data.len() as f32)
    }

    /// 8-bit RGB, `[-1, 1]` mapped linearly onto `[0, 255]`.
    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = |c| (((self.get(y as usize, x as usize, c) + 1.0) * 0.5 * 255.0).round()).clamp(0.0, 255.0) as u8;
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        Image::from_fn(h, w, |y, x, c| img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0 * 2.0 - 1.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|source| Error::Image {
            path: path.into(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.into(),
            source,
        })?;
        Ok(Image::from_rgb8(&img.to_rgb8()))
    }
}

/// Dense per-pixel class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl SegMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(SegMask {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, class: u8) -> Self {
        SegMask {
            height,
            width,
            data: vec![class; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, class: u8) {
        self.data[y * self.width + x] = class;
    }

    /// Checks every id is below `classes`.
    pub fn validate(&self, classes: usize) -> Result<()> {
        match self.data.iter().position(|&v| v as usize >= classes) {
            Some(i) => Err(Error::InvalidLabel {
                id: self.data[i] as usize,
                y: i / self.width,
                x: i % self.width,
                classes,
            }),
            None => Ok(()),
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::Shape("mask crop out of bounds".into()));
        }
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            data.extend_from_slice(&self.data[(y0 + y) * self.width + x0..(y0 + y) * self.width + x0 + w]);
        }
        SegMask::new(h, w, data)
    }

    pub fn histogram(&self, classes: usize) -> Vec<u64> {
        let mut h = vec![0u64; classes];
        for &v in &self.data {
            if (v as usize) < classes {
                h[v as usize] += 1;
            }
        }
        h
    }

    /// Single-channel 8-bit image, pixel value = class id.
    pub fn save(&self, path: &Path) -> Result<()> {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("mask buffer")
            .save(path)
            .map_err(|source| Error::Image {
                path: path.into(),
                source,
            })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.into(),
            source,
        })?;
        let g = img.to_luma8();
        SegMask::new(g.height() as usize, g.width() as usize, g.into_raw())
    }
}

/// `K × H × W` indicator planes.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHotMask {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f32>,
}

impl OneHotMask {
    /// Wraps raw planes; only the length is checked here, one-hotness is
    /// checked by [`onehot_decode`].
    pub fn from_raw(height: usize, width: usize, classes: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * classes {
            return Err(Error::Shape(format!(
                "one-hot {height}x{width}x{classes} needs {} values, got {}",
                height * width * classes,
                data.len()
            )));
        }
        Ok(OneHotMask {
            height,
            width,
            classes,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_tensor<F: Float>(&self) -> Tensor<F> {
        Tensor::from_vec(
            &[1, self.classes, self.height, self.width],
            self.data.iter().map(|&v| F::c(v as f64)).collect(),
        )
        .expect("one-hot tensor")
    }
}

pub fn onehot_encode(mask: &SegMask, k: usize) -> Result<OneHotMask> {
    mask.validate(k)?;
    let hw = mask.height * mask.width;
    let mut data = vec![0.0; k * hw];
    for (p, &c) in mask.data.iter().enumerate() {
        data[c as usize * hw + p] = 1.0;
    }
    OneHotMask::from_raw(mask.height, mask.width, k, data)
}

pub fn onehot_decode(onehot: &OneHotMask) -> Result<SegMask> {
    let hw = onehot.height * onehot.width;
    let mut data = vec![0u8; hw];
    for (p, slot) in data.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut best = 0;
        for c in 0..onehot.classes {
            let v = onehot.data[c * hw + p];
            if v != 0.0 && v != 1.0 {
                sum = f32::NAN;
                break;
            }
            sum += v;
            if v == 1.0 {
                best = c;
            }
        }
        if sum != 1.0 {
            return Err(Error::InvalidEncoding {
                y: p / onehot.width,
                x: p % onehot.width,
                sum,
            });
        }
        *slot = best as u8;
    }
    SegMask::new(onehot.height, onehot.width, data)
}

/// Stacks masks into an `N × K × H × W` one-hot tensor.
pub fn onehot_batch<F: Float>(masks: &[&SegMask], k: usize) -> Result<Tensor<F>> {
    let first = masks.first().ok_or_else(|| Error::Shape("empty mask batch".into()))?;
    let (h, w) = (first.height, first.width);
    let hw = h * w;
    let mut data = vec![F::zero(); masks.len() * k * hw];
    for (n, m) in masks.iter().enumerate() {
        if m.height != h || m.width != w {
            return Err(Error::Shape("mask batch sizes differ".into()));
        }
        m.validate(k)?;
        for (p, &c) in m.data.iter().enumerate() {
            data[(n * k + c as usize) * hw + p] = F::one();
        }
    }
    Ok(Tensor::from_vec(&[masks.len(), k, h, w], data)?)
}

/// Stacks images into an `N × 3 × H × W` tensor.
pub fn image_batch<F: Float>(images: &[&Image]) -> Result<Tensor<F>> {
    let first = images.first().ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let mut data = Vec::with_capacity(images.len() * first.data.len());
    for im in images {
        if im.height != first.height || im.width != first.width {
            return Err(Error::Shape("image batch sizes differ".into()));
        }
        data.extend(im.data.iter().map(|&v| F::c(v as f64)));
    }
    Ok(Tensor::from_vec(&[images.len(), 3, first.height, first.width], data)?)
}

/// Per-pixel argmax over the class axis of an NCHW score tensor.
pub fn argmax_masks<F: Float>(scores: &Tensor<F>) -> Vec<SegMask> {
    let (n, k, h, w) = scores.dims4();
    let hw = h * w;
    let d = scores.data();
    (0..n)
        .map(|s| {
            let data = (0..hw)
                .map(|p| {
                    let mut best = 0;
                    for c in 1..k {
                        if d[(s * k + c) * hw + p] > d[(s * k + best) * hw + p] {
                            best = c;
                        }
                    }
                    best as u8
                })
                .collect();
            SegMask::new(h, w, data).expect("argmax mask")
        })
        .collect()
}

/// An ordered subset of class ids used to average a metric.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSet {
    total: usize,
    subset: Vec<usize>,
}

impl ClassSet {
    pub fn new(total: usize, subset: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; total];
        for &c in &subset {
            if c >= total {
                return Err(Error::config("subset", format!("class {c} is not below {total}")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::config("subset", format!("class {c} listed twice")));
            }
        }
        Ok(ClassSet { total, subset })
    }

    pub fn all(total: usize) -> Self {
        ClassSet {
            total,
            subset: (0..total).collect(),
        }
    }

    /// All classes except the given ones, in order.
    pub fn excluding(total: usize, excluded: &[usize]) -> Result<Self> {
        Self::new(total, (0..total).filter(|c| !excluded.contains(c)).collect())
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn classes(&self) -> &[usize] {
        &self.subset
    }

    pub fn is_empty(&self) -> bool {
        self.subset.is_empty()
    }
}

/// Named trainable arrays of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams<F = f32> {
    arrays: BTreeMap<String, Tensor<F>>,
}

impl<F: Float> Default for NetParams<F> {
    fn default() -> Self {
        NetParams {
            arrays: BTreeMap::new(),
        }
    }
}

impl<F: Float> NetParams<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<F>) {
        self.arrays.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.arrays.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.arrays.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<F>)> {
        self.arrays.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<F>)> {
        self.arrays.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.arrays.values().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.arrays.values().all(|t| t.all_finite())
    }

    /// Keeps only arrays whose name satisfies `keep`.
    pub fn filtered(&self, keep: impl Fn(&str) -> bool) -> Self {
        NetParams {
            arrays: self
                .arrays
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Fails unless both collections have identical names and shapes.
    pub fn check_schema(&self, other: &Self) -> Result<()> {
        if self.arrays.len() != other.arrays.len() {
            return Err(Error::Schema(format!(
                "{} arrays vs {} arrays",
                self.arrays.len(),
                other.arrays.len()
            )));
        }
        for ((ka, va), (kb, vb)) in self.arrays.iter().zip(&other.arrays) {
            if ka != kb {
                return Err(Error::Schema(format!("`{ka}` vs `{kb}`")));
            }
            if va.shape() != vb.shape() {
                return Err(Error::Schema(format!(
                    "`{ka}` has shape {:?} vs {:?}",
                    va.shape(),
                    vb.shape()
                )));
            }
        }
        Ok(())
    }

    /// `weight · self + (1 − weight) · other`, elementwise.
    pub fn blend(&self, other: &Self, weight: F) -> Result<Self> {
        self.check_schema(other)?;
        let arrays = self
            .arrays
            .iter()
            .zip(&other.arrays)
            .map(|((k, a), (_, b))| {
                let t = a
                    .zip_map(b, |x, y| weight * x + (F::one() - weight) * y)
                    .expect("schema checked");
                (k.clone(), t)
            })
            .collect();
        Ok(NetParams { arrays })
    }

    /// Copies every array of `src` into `self` under `prefix + name`.
    pub fn graft(&mut self, src: &Self, prefix: &str) {
        for (k, v) in &src.arrays {
            self.arrays.insert(format!("{prefix}{k}"), v.clone());
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.arrays.values().map(|t| t.sum_sq().to_f64_lossy()).sum()
    }

    pub fn cast<G: Float>(&self) -> NetParams<G> {
        NetParams {
            arrays: self.arrays.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Scalar losses logged for one training step. Each loss is normalised per
/// pixel; totals are the weighted sums the optimiser actually minimised.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    pub phase: String,
    pub seg_src: f64,
    pub seg_trans: f64,
    pub seg_pl: f64,
    pub seg_g: f64,
    pub dgan_d: f64,
    pub dgan_g: f64,
    pub cgan_d: f64,
    pub cgan_g: f64,
    pub id: f64,
    pub con: f64,
    pub total_d: f64,
    pub total_g: f64,
    pub total_fs: f64,
    pub lambda_pl: f64,
    pub lambda_cgan: f64,
    pub lambda_con: f64,
    /// 1 when the generator receives the segmentation term, else 0.
    pub g_seg_weight: f64,
    pub classes: usize,
}

impl LossReport {
    pub fn fields(&self) -> [(&'static str, f64); 17] {
        [
            ("seg_src", self.seg_src),
            ("seg_trans", self.seg_trans),
            ("seg_pl", self.seg_pl),
            ("seg_g", self.seg_g),
            ("dgan_d", self.dgan_d),
            ("dgan_g", self.dgan_g),
            ("cgan_d", self.cgan_d),
            ("cgan_g", self.cgan_g),
            ("id", self.id),
            ("con", self.con),
            ("total_d", self.total_d),
            ("total_g", self.total_g),
            ("total_fs", self.total_fs),
            ("lambda_pl", self.lambda_pl),
            ("lambda_cgan", self.lambda_cgan),
            ("lambda_con", self.lambda_con),
            ("g_seg_weight", self.g_seg_weight),
        ]
    }

    /// First non-finite field, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        self.fields().into_iter().find(|(_, v)| !v.is_finite()).map(|(k, _)| k)
    }

    /// Checks every total against its defining weighted sum (1e-6 relative).
    pub fn check_totals(&self) -> std::result::Result<(), String> {
        let k = self.classes.max(1) as f64;
        let close = |name: &str, got: f64, want: f64| {
            if (got - want).abs() <= 1e-6 * want.abs().max(1.0) {
                Ok(())
            } else {
                Err(format!("{name}: logged {got}, components give {want}"))
            }
        };
        if self.phase == "i2i" {
            close(
                "total_d",
                self.total_d,
                self.seg_src + self.lambda_pl * self.seg_pl + self.dgan_d + self.lambda_cgan / k * self.cgan_d,
            )?;
            close(
                "total_g",
                self.total_g,
                self.g_seg_weight * self.seg_g + self.dgan_g + self.lambda_cgan / k * self.cgan_g + self.id,
            )
        } else {
            close(
                "total_fs",
                self.total_fs,
                self.seg_src + self.seg_trans + self.lambda_con * self.con,
            )
        }
    }
}

/// Loss weights and schedule constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    pub lambda_pl: f64,
    pub lambda_cgan: f64,
    pub lambda_con: f64,
    pub ema_decay: f64,
    pub clip_norm: f64,
    pub fade_start: usize,
    pub fade_end: usize,
    pub lambda_max: f64,
}

impl Default for Hyper {
    /// Desk-scale values: pseudo-label and class-wise weights at 0.3, the
    /// fade window scaled by 1/125.
    fn default() -> Self {
        Hyper {
            lambda_pl: 0.3,
            lambda_cgan: 0.3,
            lambda_con: 1.0,
            ema_decay: 0.99,
            clip_norm: 5.0,
            fade_start: 160,
            fade_end: 800,
            lambda_max: 0.3,
        }
    }
}

impl Hyper {
    /// The unscaled constants used at full scale.
    pub fn full_scale() -> Self {
        Hyper {
            ema_decay: 0.999,
            fade_start: 20_000,
            fade_end: 100_000,
            ..Hyper::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("lambda_pl", self.lambda_pl),
            ("lambda_cgan", self.lambda_cgan),
            ("lambda_con", self.lambda_con),
            ("lambda_max", self.lambda_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("hyper.{k}"), "must be finite and >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::config("hyper.ema_decay", "must lie in [0, 1]"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("hyper.clip_norm", "must be > 0"));
        }
        if self.fade_start > self.fade_end {
            return Err(Error::config("hyper.fade_start", "must not exceed fade_end"));
        }
        Ok(())
    }
}
