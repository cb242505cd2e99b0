//! Procedural two-domain scenes.
//!
//! A scene is painted in fixed layer order (background, road band, boxes,
//! discs, poles). Every layer draws its geometry from an independent,
//! discrete, uniform spawn model, so the expected per-pixel class
//! distribution can be computed exactly by [`expected_class_frequencies`].
//! Appearance knobs (palette, texture, sky gradient, sensor noise) and
//! content knobs (spawn probabilities, viewpoint jitter) are separate.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Image, SegMask, NUM_CLASSES};
use crate::error::{Error, Result};

pub const BACKGROUND: u8 = 0;
pub const ROAD: u8 = 1;
pub const DISC: u8 = 2;
pub const BOX: u8 = 3;
pub const POLE: u8 = 4;

const HORIZON_FRAC: f64 = 0.45;
const ROAD_SLOPE: f64 = 0.6;
const SLOTS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// Base RGB colour per class, in `[-1, 1]`.
    pub palette: Vec<[f32; 3]>,
    pub texture_amp: f32,
    pub sky_gradient: f32,
    pub noise_std: f32,
    /// Spawn probability per class (index 0, background, is ignored).
    pub object_freq: Vec<f32>,
    pub viewpoint_jitter: f32,
}

impl DomainSpec {
    /// Clean, saturated, "rendered" look.
    pub fn source() -> Self {
        DomainSpec {
            palette: vec![
                [0.30, 0.50, 0.90],
                [-0.40, -0.40, -0.35],
                [0.90, -0.50, -0.45],
                [-0.50, 0.70, -0.40],
                [0.90, 0.85, -0.55],
            ],
            texture_amp: 0.04,
            sky_gradient: 0.15,
            noise_std: 0.02,
            object_freq: vec![1.0, 0.9, 0.6, 0.6, 0.5],
            viewpoint_jitter: 0.2,
        }
    }

    /// Hazy, shifted palette with texture and sensor noise; different object
    /// statistics and a wider range of viewpoints.
    pub fn target() -> Self {
        DomainSpec {
            palette: vec![
                [-0.05, 0.10, 0.30],
                [-0.10, -0.20, -0.35],
                [0.55, 0.05, 0.30],
                [0.05, 0.30, 0.20],
                [0.55, 0.50, 0.35],
            ],
            texture_amp: 0.18,
            sky_gradient: 0.45,
            noise_std: 0.07,
            object_freq: vec![1.0, 0.95, 0.75, 0.45, 0.7],
            viewpoint_jitter: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.palette.len() != NUM_CLASSES {
            return Err(Error::config("palette", format!("needs {NUM_CLASSES} colours")));
        }
        if self.object_freq.len() != NUM_CLASSES {
            return Err(Error::config("object_freq", format!("needs {NUM_CLASSES} entries")));
        }
        if let Some(p) = self.object_freq.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::config("object_freq", format!("probability {p} outside [0, 1]")));
        }
        for (k, v) in [
            ("texture_amp", self.texture_amp),
            ("noise_std", self.noise_std),
            ("viewpoint_jitter", self.viewpoint_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(k, "must be finite and >= 0"));
            }
        }
        if !self.sky_gradient.is_finite() || self.palette.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("palette", "amplitudes must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub image: Image,
    pub mask: SegMask,
    pub seed: u64,
    pub domain: Domain,
}

/// Integer geometry ranges for a canvas of `size` pixels.
#[derive(Clone, Copy, Debug)]
struct Layout {
    size: usize,
    horizon: usize,
    jitter: usize,
    box_side: (usize, usize),
    disc_r: (usize, usize),
    pole_w: (usize, usize),
    pole_top: usize,
}

impl Layout {
    fn new(size: usize, viewpoint_jitter: f32) -> Self {
        let horizon = (size as f64 * HORIZON_FRAC).round() as usize;
        let max_jitter = size - 2 - horizon;
        Layout {
            size,
            horizon,
            jitter: ((viewpoint_jitter as f64 * size as f64 / 4.0).round() as usize).min(max_jitter).min(horizon),
            box_side: (size / 8, size / 4),
            disc_r: (size / 16, size / 8),
            pole_w: ((size / 32).max(1), (size / 16).max(1)),
            pole_top: size / 2,
        }
    }

    fn road_covers(&self, x: usize, y: usize, horizon: usize, vx: f64) -> bool {
        y > horizon && ((x as f64 + 0.5) - vx).abs() <= ROAD_SLOPE * (y - horizon) as f64 + 1.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Road { horizon: usize, vx: f64 },
    Rect { x0: usize, y0: usize, w: usize, h: usize },
    Disc { cx: usize, cy: usize, r: usize },
}

impl Shape {
    fn covers(&self, lay: &Layout, x: usize, y: usize) -> bool {
        match *self {
            Shape::Road { horizon, vx } => lay.road_covers(x, y, horizon, vx),
            Shape::Rect { x0, y0, w, h } => x >= x0 && x < x0 + w && y >= y0 && y < y0 + h,
            Shape::Disc { cx, cy, r } => {
                let dx = x as i64 - cx as i64;
                let dy = y as i64 - cy as i64;
                dx * dx + dy * dy <= (r * r) as i64
            }
        }
    }
}

fn check_size(size: usize) -> Result<()> {
    if size < 16 || !size.is_multiple_of(8) {
        return Err(Error::Shape(format!("scene size {size} must be >= 16 and divisible by 8")));
    }
    Ok(())
}

/// Renders one labelled scene. Pure in `(seed, spec, size)`.
pub fn sample_scene(seed: u64, spec: &DomainSpec, size: usize, domain: Domain) -> Result<SceneSample> {
    check_size(size)?;
    spec.validate()?;
    let lay = Layout::new(size, spec.viewpoint_jitter);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = lay.jitter as i64;

    // Geometry: one draw sequence per layer, in paint order.
    let mut shapes: Vec<(u8, Shape)> = Vec::new();
    let road_on = rng.gen::<f32>() < spec.object_freq[ROAD as usize];
    let dh = rng.gen_range(-j..=j);
    let dx = rng.gen_range(-j..=j);
    if road_on {
        shapes.push((
            ROAD,
            Shape::Road {
                horizon: (lay.horizon as i64 + dh) as usize,
                vx: size as f64 / 2.0 + dx as f64,
            },
        ));
    }
    for _ in 0..SLOTS {
        let on = rng.gen::<f32>() < spec.object_freq[BOX as usize];
        let w = rng.gen_range(lay.box_side.0..=lay.box_side.1);
        let h = rng.gen_range(lay.box_side.0..=lay.box_side.1);
        let x0 = rng.gen_range(0..=size - w);
        let y0 = rng.gen_range(0..=size - h);
        if on {
            shapes.push((BOX, Shape::Rect { x0, y0, w, h }));
        }
    }
    for _ in 0..SLOTS {
        let on = rng.gen::<f32>() < spec.object_freq[DISC as usize];
        let r = rng.gen_range(lay.disc_r.0..=lay.disc_r.1);
        let cx = rng.gen_range(r..=size - 1 - r);
        let cy = rng.gen_range(r..=size - 1 - r);
        if on {
            shapes.push((DISC, Shape::Disc { cx, cy, r }));
        }
    }
    for _ in 0..SLOTS {
        let on = rng.gen::<f32>() < spec.object_freq[POLE as usize];
        let w = rng.gen_range(lay.pole_w.0..=lay.pole_w.1);
        let x0 = rng.gen_range(0..=size - w);
        let top = rng.gen_range(0..=lay.pole_top);
        if on {
            shapes.push((
                POLE,
                Shape::Rect {
                    x0,
                    y0: top,
                    w,
                    h: size - top,
                },
            ));
        }
    }

    let mut mask = SegMask::filled(size, size, BACKGROUND);
    for (class, shape) in &shapes {
        paint(&mut mask, &lay, *class, shape);
    }
    // Certain classes must stay visible: repaint their first instance on top.
    for class in [ROAD, BOX, DISC, POLE] {
        if spec.object_freq[class as usize] >= 1.0 && !mask.data().contains(&class) {
            if let Some((_, shape)) = shapes.iter().find(|(c, _)| *c == class) {
                paint(&mut mask, &lay, class, shape);
            }
        }
    }

    // Appearance.
    let phases: Vec<(f32, f32)> = (0..NUM_CLASSES)
        .map(|_| (rng.gen_range(0.0..std::f32::consts::TAU), rng.gen_range(0.0..std::f32::consts::TAU)))
        .collect();
    let noise = Normal::new(0.0f32, spec.noise_std.max(0.0)).expect("noise std");
    let mut data = vec![0.0f32; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let c = mask.get(y, x) as usize;
            let f = 0.35 + 0.15 * c as f32;
            let (px, py) = phases[c];
            let tex = spec.texture_amp * (f * x as f32 + px).sin() * (1.3 * f * y as f32 + py).sin();
            let sky = if c == BACKGROUND as usize {
                spec.sky_gradient * (0.5 - y as f32 / size as f32)
            } else {
                0.0
            };
            for ch in 0..3 {
                data[(ch * size + y) * size + x] = spec.palette[c][ch] + tex + sky;
            }
        }
    }
    if spec.noise_std > 0.0 {
        for v in &mut data {
            *v += noise.sample(&mut rng);
        }
    }
    data.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    Ok(SceneSample {
        image: Image::new(size, size, data)?,
        mask,
        seed,
        domain,
    })
}

fn paint(mask: &mut SegMask, lay: &Layout, class: u8, shape: &Shape) {
    for y in 0..lay.size {
        for x in 0..lay.size {
            if shape.covers(lay, x, y) {
                mask.set(y, x, class);
            }
        }
    }
}

/// Exact expected fraction of pixels per class under the spawn model
/// (ignoring the rare forced-visibility repaint).
pub fn expected_class_frequencies(spec: &DomainSpec, size: usize) -> Result<[f64; NUM_CLASSES]> {
    check_size(size)?;
    spec.validate()?;
    let lay = Layout::new(size, spec.viewpoint_jitter);
    let s = size;
    let f = |c: u8| spec.object_freq[c as usize] as f64;

    // Per-instance coverage probabilities, one map per layer.
    let j = lay.jitter as i64;
    let mut road = vec![0.0; s * s];
    let combos = ((2 * j + 1) * (2 * j + 1)) as f64;
    for dh in -j..=j {
        for dx in -j..=j {
            let horizon = (lay.horizon as i64 + dh) as usize;
            let vx = s as f64 / 2.0 + dx as f64;
            for y in 0..s {
                for x in 0..s {
                    if lay.road_covers(x, y, horizon, vx) {
                        road[y * s + x] += 1.0 / combos;
                    }
                }
            }
        }
    }

    // Fraction of placements `start ∈ [0, s - len]` with `start <= p < start + len`.
    let interval = |p: usize, len: usize| -> f64 {
        let lo = (p + 1).saturating_sub(len);
        let hi = p.min(s - len);
        if hi < lo {
            0.0
        } else {
            (hi - lo + 1) as f64 / (s - len + 1) as f64
        }
    };
    let sides: Vec<usize> = (lay.box_side.0..=lay.box_side.1).collect();
    let mut boxes = vec![0.0; s * s];
    for y in 0..s {
        for x in 0..s {
            let mut acc = 0.0;
            for &w in &sides {
                for &h in &sides {
                    acc += interval(x, w) * interval(y, h);
                }
            }
            boxes[y * s + x] = acc / (sides.len() * sides.len()) as f64;
        }
    }

    let radii: Vec<usize> = (lay.disc_r.0..=lay.disc_r.1).collect();
    let mut discs = vec![0.0; s * s];
    for &r in &radii {
        let span = (s - 2 * r) as f64;
        let ri = r as i64;
        for y in 0..s as i64 {
            for x in 0..s as i64 {
                let mut n = 0usize;
                for oy in -ri..=ri {
                    for ox in -ri..=ri {
                        if ox * ox + oy * oy > ri * ri {
                            continue;
                        }
                        let (cx, cy) = (x - ox, y - oy);
                        if cx >= ri && cx <= s as i64 - 1 - ri && cy >= ri && cy <= s as i64 - 1 - ri {
                            n += 1;
                        }
                    }
                }
                discs[(y as usize) * s + x as usize] += n as f64 / (span * span) / radii.len() as f64;
            }
        }
    }

    let widths: Vec<usize> = (lay.pole_w.0..=lay.pole_w.1).collect();
    let mut poles = vec![0.0; s * s];
    for y in 0..s {
        let vert = (y.min(lay.pole_top) + 1) as f64 / (lay.pole_top + 1) as f64;
        for x in 0..s {
            let horiz: f64 = widths.iter().map(|&w| interval(x, w)).sum::<f64>() / widths.len() as f64;
            poles[y * s + x] = horiz * vert;
        }
    }

    let layer = |q: f64, p: f64, slots: i32| 1.0 - (1.0 - p * q).powi(slots);
    let mut out = [0.0; NUM_CLASSES];
    for i in 0..s * s {
        let p_road = f(ROAD) * road[i];
        let p_box = layer(boxes[i], f(BOX), SLOTS as i32);
        let p_disc = layer(discs[i], f(DISC), SLOTS as i32);
        let p_pole = layer(poles[i], f(POLE), SLOTS as i32);
        let pole = p_pole;
        let disc = p_disc * (1.0 - p_pole);
        let bx = p_box * (1.0 - p_disc) * (1.0 - p_pole);
        let rd = p_road * (1.0 - p_box) * (1.0 - p_disc) * (1.0 - p_pole);
        out[POLE as usize] += pole;
        out[DISC as usize] += disc;
        out[BOX as usize] += bx;
        out[ROAD as usize] += rd;
        out[BACKGROUND as usize] += 1.0 - pole - disc - bx - rd;
    }
    out.iter_mut().for_each(|v| *v /= (s * s) as f64);
    Ok(out)
}

/// Strength of the label-preserving perturbation used for consistency
/// training (colour jitter, Gaussian blur, additive noise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    pub jitter_strength: f32,
    pub blur_sigma_range: (f32, f32),
    pub noise_std: f32,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec {
            jitter_strength: 0.2,
            blur_sigma_range: (0.0, 1.5),
            noise_std: 0.05,
        }
    }
}

impl PerturbSpec {
    pub fn identity() -> Self {
        PerturbSpec {
            jitter_strength: 0.0,
            blur_sigma_range: (0.0, 0.0),
            noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.blur_sigma_range;
        if !(self.jitter_strength >= 0.0 && self.noise_std >= 0.0 && lo >= 0.0 && hi >= lo) {
            return Err(Error::config("perturb", "strengths must be >= 0 and the blur range ordered"));
        }
        Ok(())
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| (v / s) as f32).collect()
}

fn blur(img: &Image, sigma: f64) -> Image {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (h, w) = (img.height() as i64, img.width() as i64);
    let clampi = |v: i64, n: i64| v.clamp(0, n - 1) as usize;
    let horiz = Image::from_fn(h as usize, w as usize, |y, x, c| {
        let mut acc = 0.0;
        for (i, kv) in k.iter().enumerate() {
            acc += kv * img.get(y, clampi(x as i64 + i as i64 - r, w), c);
        }
        acc
    });
    Image::from_fn(h as usize, w as usize, |y, x, c| {
        let mut acc = 0.0;
        for (i, kv) in k.iter().enumerate() {
            acc += kv * horiz.get(clampi(y as i64 + i as i64 - r, h), x, c);
        }
        acc
    })
}

/// Strong, label-preserving perturbation `P(x)`. No spatial transforms are
/// applied, so the ground truth of `perturb(x)` is the ground truth of `x`.
pub fn perturb(x: &Image, spec: &PerturbSpec, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9e37_79b9_7f4a);
    let mut out = x.clone();
    let j = spec.jitter_strength;
    if j > 0.0 {
        let brightness = rng.gen_range(-j..=j);
        let contrast = rng.gen_range(1.0 - j..=1.0 + j);
        let saturation = rng.gen_range(1.0 - j..=1.0 + j);
        let mean = x.data().iter().sum::<f32>() / x.data().len() as f32;
        out = Image::from_fn(x.height(), x.width(), |y, xx, c| {
            let gray = (x.get(y, xx, 0) + x.get(y, xx, 1) + x.get(y, xx, 2)) / 3.0;
            let v = gray + saturation * (x.get(y, xx, c) - gray);
            (v - mean) * contrast + mean + brightness
        });
    }
    let (lo, hi) = spec.blur_sigma_range;
    if hi > 0.0 {
        let sigma = if hi > lo { rng.gen_range(lo..=hi) } else { lo } as f64;
        if sigma > 1e-3 {
            out = blur(&out, sigma);
        }
    }
    if spec.noise_std > 0.0 {
        let n = Normal::new(0.0f32, spec.noise_std).expect("noise std");
        out = Image::from_fn(out.height(), out.width(), |y, xx, c| out.get(y, xx, c) + n.sample(&mut rng));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
    pub domain: Domain,
    pub seed: u64,
}

/// Line-delimited list of samples. Paths are stored relative to the
/// manifest's directory: `image<TAB>mask-or-empty<TAB>domain<TAB>seed`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn image_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.image)
    }

    pub fn mask_path(&self, e: &ManifestEntry) -> Option<PathBuf> {
        e.mask.as_ref().map(|m| self.root.join(m))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.image.display(),
                e.mask.as_ref().map(|m| m.display().to_string()).unwrap_or_default(),
                e.domain.as_str(),
                e.seed
            ));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |msg: &str| Error::config(format!("{}:{}", path.display(), i + 1), msg.to_string());
            if cols.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            let domain = match cols[2] {
                "source" => Domain::Source,
                "target" => Domain::Target,
                _ => return Err(bad("domain must be `source` or `target`")),
            };
            entries.push(ManifestEntry {
                image: PathBuf::from(cols[0]),
                mask: (!cols[1].is_empty()).then(|| PathBuf::from(cols[1])),
                domain,
                seed: cols[3].parse().map_err(|_| bad("seed must be an integer"))?,
            });
        }
        Ok(Manifest { root, entries })
    }
}

/// The three generated splits.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub source_train: Manifest,
    pub target_train: Manifest,
    pub target_val: Manifest,
}

impl DatasetManifest {
    pub const SOURCE_TRAIN: &'static str = "source_train.tsv";
    pub const TARGET_TRAIN: &'static str = "target_train.tsv";
    pub const TARGET_VAL: &'static str = "target_val.tsv";

    pub fn read(dir: &Path) -> Result<Self> {
        let need = |name: &str| -> Result<Manifest> {
            let p = dir.join(name);
            if !p.exists() {
                return Err(Error::Prerequisite(format!("manifest {} not found", p.display())));
            }
            Manifest::read(&p)
        };
        Ok(DatasetManifest {
            source_train: need(Self::SOURCE_TRAIN)?,
            target_train: need(Self::TARGET_TRAIN)?,
            target_val: need(Self::TARGET_VAL)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRequest {
    pub n_src: usize,
    pub n_tgt: usize,
    pub n_val_tgt: usize,
    pub size: usize,
    pub seed: u64,
    /// Seeds of split `i` are drawn from `[base + i·block, base + (i+1)·block)`.
    #[serde(default = "default_seed_block")]
    pub seed_block: u64,
}

fn default_seed_block() -> u64 {
    1 << 20
}

impl SplitRequest {
    fn seeds(&self) -> Result<[Vec<u64>; 3]> {
        for (k, n) in [("n_src", self.n_src), ("n_tgt", self.n_tgt), ("n_val_tgt", self.n_val_tgt)] {
            if n == 0 {
                return Err(Error::config(format!("data.{k}"), "must be > 0"));
            }
            if n as u64 > self.seed_block {
                return Err(Error::config(
                    format!("data.{k}"),
                    format!("{n} samples overlap the next split's seed block of {}", self.seed_block),
                ));
            }
        }
        let base = self.seed.wrapping_mul(3 * self.seed_block);
        let block = |i: u64, n: usize| (0..n as u64).map(|s| base.wrapping_add(i * self.seed_block + s)).collect();
        Ok([block(0, self.n_src), block(1, self.n_tgt), block(2, self.n_val_tgt)])
    }
}

/// Renders the source-train, target-train and target-val splits into `out`.
/// Target-train entries carry no mask path; target-val masks are for
/// evaluation only.
pub fn make_split(spec_src: &DomainSpec, spec_tgt: &DomainSpec, req: &SplitRequest, out: &Path) -> Result<DatasetManifest> {
    check_size(req.size)?;
    spec_src.validate()?;
    spec_tgt.validate()?;
    let [src, tgt, val] = req.seeds()?;
    let mut histograms = BTreeMap::new();
    let mut write_split = |name: &str, seeds: &[u64], spec: &DomainSpec, domain: Domain, keep_mask: bool| -> Result<Manifest> {
        let dir = out.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut hist = vec![0u64; NUM_CLASSES];
        let mut entries = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let s = sample_scene(seed, spec, req.size, domain)?;
            for (h, v) in hist.iter_mut().zip(s.mask.histogram(NUM_CLASSES)) {
                *h += v;
            }
            let image = PathBuf::from(name).join(format!("img_{seed}.png"));
            s.image.save(&out.join(&image))?;
            let mask = if keep_mask {
                let m = PathBuf::from(name).join(format!("mask_{seed}.png"));
                s.mask.save(&out.join(&m))?;
                Some(m)
            } else {
                None
            };
            entries.push(ManifestEntry { image, mask, domain, seed });
        }
        histograms.insert(name.to_string(), hist);
        Ok(Manifest {
            root: out.to_path_buf(),
            entries,
        })
    };
    let manifest = DatasetManifest {
        source_train: write_split("source_train", &src, spec_src, Domain::Source, true)?,
        target_train: write_split("target_train", &tgt, spec_tgt, Domain::Target, false)?,
        target_val: write_split("target_val", &val, spec_tgt, Domain::Target, true)?,
    };
    manifest.source_train.write(&out.join(DatasetManifest::SOURCE_TRAIN))?;
    manifest.target_train.write(&out.join(DatasetManifest::TARGET_TRAIN))?;
    manifest.target_val.write(&out.join(DatasetManifest::TARGET_VAL))?;
    let hpath = out.join("class_histograms.json");
    let mut f = fs::File::create(&hpath).map_err(|e| Error::io(&hpath, e))?;
    f.write_all(serde_json::to_string_pretty(&histograms)?.as_bytes())
        .map_err(|e| Error::io(&hpath, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic() {
        let a = sample_scene(7, &DomainSpec::source(), 64, Domain::Source).unwrap();
        let b = sample_scene(7, &DomainSpec::source(), 64, Domain::Source).unwrap();
        assert_eq!(a, b);
        let c = sample_scene(8, &DomainSpec::source(), 64, Domain::Source).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn background_only_spec_gives_constant_mask() {
        let spec = DomainSpec {
            object_freq: vec![1.0, 0.0, 0.0, 0.0, 0.0],
            ..DomainSpec::source()
        };
        for seed in 0..10 {
            let s = sample_scene(seed, &spec, 32, Domain::Source).unwrap();
            assert!(s.mask.data().iter().all(|&c| c == BACKGROUND));
        }
    }

    #[test]
    fn certain_classes_always_appear() {
        let spec = DomainSpec {
            object_freq: vec![1.0; NUM_CLASSES],
            ..DomainSpec::target()
        };
        for seed in 0..50 {
            let s = sample_scene(seed, &spec, 32, Domain::Target).unwrap();
            let h = s.mask.histogram(NUM_CLASSES);
            assert!(h.iter().all(|&n| n > 0), "seed {seed}: {h:?}");
        }
    }

    #[test]
    fn size_must_be_divisible_by_eight() {
        assert!(matches!(sample_scene(1, &DomainSpec::source(), 60, Domain::Source), Err(Error::Shape(_))));
        assert!(sample_scene(1, &DomainSpec::source(), 8, Domain::Source).is_err());
    }

    #[test]
    fn mask_matches_image_shape_and_range() {
        let s = sample_scene(3, &DomainSpec::target(), 48, Domain::Target).unwrap();
        assert_eq!((s.image.height(), s.image.width()), (s.mask.height(), s.mask.width()));
        s.mask.validate(NUM_CLASSES).unwrap();
        assert!(s.image.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn identity_perturbation_is_exact() {
        let s = sample_scene(1, &DomainSpec::target(), 32, Domain::Target).unwrap();
        assert_eq!(perturb(&s.image, &PerturbSpec::identity(), 5), s.image);
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = Image::filled(24, 24, [0.3, -0.2, 0.7]);
        let spec = PerturbSpec {
            jitter_strength: 0.0,
            blur_sigma_range: (2.0, 2.0),
            noise_std: 0.0,
        };
        let out = perturb(&img, &spec, 9);
        assert!(out.mean_abs_diff(&img).unwrap() < 1e-6);
    }

    #[test]
    fn perturbation_is_seeded() {
        let s = sample_scene(1, &DomainSpec::target(), 32, Domain::Target).unwrap();
        let p = PerturbSpec::default();
        assert_eq!(perturb(&s.image, &p, 3), perturb(&s.image, &p, 3));
        assert_ne!(perturb(&s.image, &p, 3), perturb(&s.image, &p, 4));
        assert!(perturb(&s.image, &p, 3).data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn noise_std_matches_request() {
        // Mid-range constant image: clamping never triggers.
        let img = Image::filled(64, 64, [0.0, 0.1, -0.1]);
        let spec = PerturbSpec {
            jitter_strength: 0.0,
            blur_sigma_range: (0.0, 0.0),
            noise_std: 0.1,
        };
        let out = perturb(&img, &spec, 11);
        let d: Vec<f64> = out.data().iter().zip(img.data()).map(|(a, b)| (a - b) as f64).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        assert!((std - 0.1).abs() <= 0.01, "std {std}");
    }

    #[test]
    fn expected_frequencies_sum_to_one() {
        let f = expected_class_frequencies(&DomainSpec::source(), 32).unwrap();
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(f.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn split_seeds_are_disjoint_and_overlap_is_rejected() {
        let req = SplitRequest {
            n_src: 8,
            n_tgt: 8,
            n_val_tgt: 4,
            size: 16,
            seed: 3,
            seed_block: 1 << 20,
        };
        let [a, b, c] = req.seeds().unwrap();
        let mut all: Vec<u64> = a.into_iter().chain(b).chain(c).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 20);
        let bad = SplitRequest {
            n_src: 9,
            seed_block: 8,
            ..req
        };
        assert!(matches!(bad.seeds(), Err(Error::Config { .. })));
    }

    #[test]
    fn manifest_text_round_trips() {
        let m = Manifest {
            root: PathBuf::from("/data"),
            entries: vec![
                ManifestEntry {
                    image: "a/img_1.png".into(),
                    mask: Some("a/mask_1.png".into()),
                    domain: Domain::Source,
                    seed: 1,
                },
                ManifestEntry {
                    image: "b/img_2.png".into(),
                    mask: None,
                    domain: Domain::Target,
                    seed: 2,
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        m.write(&p).unwrap();
        let back = Manifest::read(&p).unwrap();
        assert_eq!(back.entries, m.entries);
        assert_eq!(back.root, dir.path());
    }
}
