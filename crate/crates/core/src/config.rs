//! Run configuration: one TOML document covering data generation, network
//! sizes, loss weights and every training phase.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Hyper;
use crate::error::{Error, Result};
use crate::losses::{GanMetric, SymCe};
use crate::nets::{DiscriminatorCfg, GeneratorCfg, SegmenterCfg};
use crate::toyworld::{DomainSpec, PerturbSpec, SplitRequest};

/// Environment variable that overrides the run-directory root.
pub const RUN_ROOT_ENV: &str = "UDA_RUN_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_src: usize,
    pub n_tgt: usize,
    pub n_val_tgt: usize,
    /// Side length of generated scenes.
    pub size: usize,
    /// Side length of training crops.
    pub crop: usize,
    pub seed: u64,
    pub source: DomainSpec,
    pub target: DomainSpec,
}

impl DataConfig {
    pub fn split_request(&self) -> SplitRequest {
        SplitRequest {
            n_src: self.n_src,
            n_tgt: self.n_tgt,
            n_val_tgt: self.n_val_tgt,
            size: self.size,
            seed: self.seed,
            seed_block: 1 << 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetsConfig {
    pub generator: GeneratorCfg,
    pub segmenter: SegmenterCfg,
    pub disc_width: usize,
    pub disc_res_blocks: usize,
}

impl NetsConfig {
    pub fn discriminator(&self) -> DiscriminatorCfg {
        DiscriminatorCfg {
            width: self.disc_width,
            res_blocks: self.disc_res_blocks,
            trunk: self.segmenter.clone(),
        }
    }
}

/// Settings of a segmentation phase (warm-up or final training).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning-rate factor per 1000 steps (1 keeps it constant).
    pub lr_decay: f64,
    pub beta1: f64,
    /// Share of the supervised batch drawn from real source images.
    pub source_fraction: f64,
    /// Share drawn from translated source images.
    pub translated_fraction: f64,
    /// Enables the teacher-student consistency term on target images.
    pub consistency: bool,
    pub con_warmup_steps: usize,
    pub log_every: usize,
}

impl PhaseConfig {
    pub fn validate(&self, key: &str) -> Result<()> {
        if self.steps > 0 && self.batch_size == 0 {
            return Err(Error::config(format!("{key}.batch_size"), "must be > 0"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("{key}.lr"), "must be > 0"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config(format!("{key}.lr_decay"), "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config(format!("{key}.beta1"), "must lie in [0, 1)"));
        }
        let (s, t) = (self.source_fraction, self.translated_fraction);
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) || (s + t - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                format!("{key}.source_fraction"),
                "source and translated fractions must lie in [0, 1] and sum to 1",
            ));
        }
        if self.log_every == 0 {
            return Err(Error::config(format!("{key}.log_every"), "must be > 0"));
        }
        Ok(())
    }

    /// Source and translated sample counts for one batch.
    pub fn split_batch(&self) -> (usize, usize) {
        let src = (self.batch_size as f64 * self.source_fraction).round() as usize;
        (src, self.batch_size - src)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabelSource {
    /// Fixed labels from the warm-up teacher, weights held constant.
    Precomputed,
    /// Argmax of the discriminator's classifier head, weights faded in.
    Online,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct I2iConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub pseudo_labels: PseudoLabelSource,
    pub gan_metric: GanMetric,
    /// Class-wise adversarial term on/off.
    pub class_gan: bool,
    /// Segmentation term in the generator objective on/off.
    pub g_seg: bool,
    pub sym_ce: SymCe,
    /// Confidence threshold reported by the pseudo-label coverage summary.
    pub pl_threshold: f64,
    pub log_every: usize,
}

impl I2iConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps > 0 && self.batch_size == 0 {
            return Err(Error::config("i2i.batch_size", "must be > 0"));
        }
        for (k, v) in [("i2i.lr_g", self.lr_g), ("i2i.lr_d", self.lr_d)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(k, "must be > 0"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("i2i.beta1", "must lie in [0, 1)"));
        }
        if self.sym_ce.log_clamp >= 0.0 {
            return Err(Error::config("i2i.sym_ce.log_clamp", "must be < 0"));
        }
        if self.log_every == 0 {
            return Err(Error::config("i2i.log_every", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    /// Run directory root; `UDA_RUN_ROOT` takes precedence when set.
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub nets: NetsConfig,
    pub hyper: Hyper,
    pub perturb: PerturbSpec,
    pub warmup: PhaseConfig,
    pub i2i: I2iConfig,
    pub seg: PhaseConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    /// Desk-scale defaults: 96×96 scenes, 64×64 crops, step budgets at
    /// roughly 1/125 of full scale.
    fn default() -> Self {
        let seg_phase = PhaseConfig {
            steps: 6000,
            batch_size: 8,
            lr: 1e-3,
            lr_decay: 0.97,
            beta1: 0.9,
            source_fraction: 0.5,
            translated_fraction: 0.5,
            consistency: true,
            con_warmup_steps: 300,
            log_every: 50,
        };
        RunConfig {
            name: "default".into(),
            seed: 0,
            out_dir: PathBuf::from("runs"),
            data: DataConfig {
                n_src: 2000,
                n_tgt: 2000,
                n_val_tgt: 200,
                size: 96,
                crop: 64,
                seed: 0,
                source: DomainSpec::source(),
                target: DomainSpec::target(),
            },
            nets: NetsConfig {
                generator: GeneratorCfg::default(),
                segmenter: SegmenterCfg::default(),
                disc_width: 64,
                disc_res_blocks: 3,
            },
            hyper: Hyper::default(),
            perturb: PerturbSpec::default(),
            warmup: PhaseConfig {
                steps: 3000,
                source_fraction: 1.0,
                translated_fraction: 0.0,
                ..seg_phase.clone()
            },
            i2i: I2iConfig {
                steps: 8000,
                batch_size: 8,
                lr_g: 2e-4,
                lr_d: 2e-4,
                beta1: 0.5,
                pseudo_labels: PseudoLabelSource::Precomputed,
                gan_metric: GanMetric::LeastSquares,
                class_gan: true,
                g_seg: true,
                sym_ce: SymCe::default(),
                pl_threshold: 0.9,
                log_every: 50,
            },
            seg: seg_phase,
            probe: ProbeConfig {
                steps: 500,
                lr: 1e-3,
                batch_size: 8,
            },
        }
    }
}

impl RunConfig {
    /// Reduced benchmark used by the acceptance suite and examples:
    /// 64×64 scenes, smaller networks, shorter phases.
    pub fn bench() -> Self {
        let mut c = RunConfig::default();
        c.name = "bench".into();
        c.data.n_src = 400;
        c.data.n_tgt = 400;
        c.data.n_val_tgt = 100;
        c.data.size = 64;
        c.data.crop = 32;
        c.nets.generator.base_width = 16;
        c.nets.generator.style_dim = 8;
        c.nets.segmenter = SegmenterCfg {
            width1: 16,
            width2: 32,
            depth: 2,
            ..SegmenterCfg::default()
        };
        c.nets.disc_width = 32;
        for p in [&mut c.warmup, &mut c.seg] {
            p.steps = 1500;
            p.con_warmup_steps = 75;
            p.log_every = 25;
        }
        c.i2i.steps = 1500;
        c.i2i.log_every = 25;
        c.hyper.fade_start = 30;
        c.hyper.fade_end = 150;
        c.probe.steps = 300;
        c
    }

    /// Tiny configuration for smoke tests.
    pub fn smoke() -> Self {
        let mut c = RunConfig::bench();
        c.name = "smoke".into();
        c.data.n_src = 16;
        c.data.n_tgt = 16;
        c.data.n_val_tgt = 8;
        c.data.size = 32;
        c.data.crop = 32;
        c.nets.generator.base_width = 8;
        c.nets.segmenter = SegmenterCfg {
            width1: 8,
            width2: 12,
            depth: 1,
            ..SegmenterCfg::default()
        };
        c.nets.disc_width = 8;
        for p in [&mut c.warmup, &mut c.seg] {
            p.steps = 30;
            p.batch_size = 4;
            p.con_warmup_steps = 5;
            p.log_every = 5;
        }
        c.i2i.steps = 30;
        c.i2i.batch_size = 4;
        c.i2i.log_every = 5;
        c.hyper.fade_start = 5;
        c.hyper.fade_end = 20;
        c.probe.steps = 20;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "bench" => Ok(Self::bench()),
            "smoke" => Ok(Self::smoke()),
            _ => Err(Error::config("preset", format!("unknown preset `{name}` (default, bench, smoke)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.perturb.validate()?;
        self.data.source.validate()?;
        self.data.target.validate()?;
        let d = &self.data;
        if d.size < 16 || !d.size.is_multiple_of(8) {
            return Err(Error::config("data.size", "must be >= 16 and divisible by 8"));
        }
        if d.crop == 0 || d.crop > d.size || !d.crop.is_multiple_of(8) {
            return Err(Error::config("data.crop", "must be a multiple of 8 no larger than data.size"));
        }
        if d.n_val_tgt < 2 {
            return Err(Error::config("data.n_val_tgt", "needs at least 2 images (probe and eval halves)"));
        }
        if self.nets.segmenter.num_classes != crate::data::NUM_CLASSES {
            return Err(Error::config("nets.segmenter.num_classes", "must equal the toy class count"));
        }
        if self.nets.segmenter.dilation_rates.is_empty() {
            return Err(Error::config("nets.segmenter.dilation_rates", "must not be empty"));
        }
        if self.nets.generator.base_width < 2 || self.nets.disc_width < 2 {
            return Err(Error::config("nets", "widths must be >= 2"));
        }
        self.warmup.validate("warmup")?;
        self.seg.validate("seg")?;
        self.i2i.validate()?;
        if self.probe.batch_size == 0 || !(self.probe.lr > 0.0) {
            return Err(Error::config("probe", "batch_size and lr must be > 0"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serialisable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| {
            let key = e.message().split('`').nth(1).unwrap_or("<document>").to_string();
            Error::config(key, e.to_string())
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Applies `dotted.key=value` overrides. Values are parsed as TOML
    /// literals, falling back to plain strings.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        let mut doc: toml::Value = toml::Value::try_from(self).expect("config is serialisable");
        for s in sets {
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| Error::config(s.clone(), "override must look like key=value"))?;
            let key = key.trim();
            let value = parse_value(raw.trim());
            let mut cur = &mut doc;
            let parts: Vec<&str> = key.split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let table = cur
                    .as_table_mut()
                    .ok_or_else(|| Error::config(key, format!("`{part}` is not inside a table")))?;
                if !table.contains_key(*part) {
                    return Err(Error::config(key, "unknown configuration key"));
                }
                if i + 1 == parts.len() {
                    let old = &table[*part];
                    let value = match (old, &value) {
                        (toml::Value::Float(_), toml::Value::Integer(n)) => toml::Value::Float(*n as f64),
                        (o, v) if o.same_type(v) => value.clone(),
                        (o, _) => {
                            return Err(Error::config(key, format!("expected a {}, got `{}`", o.type_str(), raw.trim())))
                        }
                    };
                    table.insert(part.to_string(), value);
                    break;
                }
                cur = table.get_mut(*part).expect("checked");
            }
        }
        let text = toml::to_string(&doc).map_err(|e| Error::config("<overrides>", e.to_string()))?;
        Self::from_toml(&text)
    }

    /// Directory holding every artefact of this run.
    pub fn run_dir(&self) -> PathBuf {
        let root = std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| self.out_dir.clone());
        root.join(&self.name)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.run_dir().join("data")
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
