//! Phase orchestration on disk: dataset preparation, cached per-seed stages,
//! the ablation variants and the summary tables.
//!
//! Every stage lives in `run_dir/seed_{seed}/{stage}/` next to a
//! `config.toml` holding the exact configuration it ran with. A stage is
//! reused only when that snapshot matches the current configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{PseudoLabelSource, RunConfig};
use crate::data::{ClassSet, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, gap_report, linear_probe, EvalReport, GapReport};
use crate::losses::GanMetric;
use crate::nets::{load_params, Generator, Segmenter};
use crate::trainer::{
    channel_mean_histogram, generate_pseudo_labels, histogram_l1, identity_error, initial_generator, run_i2i,
    run_segmentation, run_warmup, translate_dataset, Coverage, PseudoLabelSet, Split, TRANSLATED_MANIFEST,
};
use crate::toyworld::{make_split, DatasetManifest, Manifest};

pub const CONFIG_SNAPSHOT: &str = "config.toml";
const DATA_SNAPSHOT: &str = "data.toml";
const STAGE_KEY: &str = "stage_key.json";
const HIST_BINS: usize = 16;

const WARMUP_KEY: &[&str] = &["data", "nets", "hyper", "perturb", "warmup"];
const I2I_KEY: &[&str] = &["data", "nets", "hyper", "perturb", "warmup", "i2i"];
const SEG_KEY: &[&str] = &["data", "nets", "hyper", "perturb", "warmup", "i2i", "seg", "probe"];

/// The config sections a stage depends on, as canonical JSON.
fn stage_key(rc: &RunConfig, sections: &[&str]) -> Result<String> {
    let v = serde_json::to_value(rc)?;
    let picked: serde_json::Map<String, serde_json::Value> =
        sections.iter().map(|&k| (k.to_string(), v[k].clone())).collect();
    Ok(serde_json::to_string(&picked)?)
}

/// Writes `rc` as `dir/config.toml`.
pub fn write_snapshot(rc: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(CONFIG_SNAPSHOT);
    fs::write(&p, rc.to_toml()).map_err(|e| Error::io(&p, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?)
}

/// Generates the dataset under `rc.data_dir()` unless an identical one is
/// already there.
pub fn prepare_data(rc: &RunConfig) -> Result<DatasetManifest> {
    let dir = rc.data_dir();
    let spec = toml::to_string(&rc.data).map_err(|e| Error::config("data", e.to_string()))?;
    let snap = dir.join(DATA_SNAPSHOT);
    if fs::read_to_string(&snap).is_ok_and(|s| s == spec) {
        if let Ok(m) = DatasetManifest::read(&dir) {
            return Ok(m);
        }
    }
    let m = make_split(&rc.data.source, &rc.data.target, &rc.data.split_request(), &dir)?;
    fs::write(&snap, spec).map_err(|e| Error::io(&snap, e))?;
    Ok(m)
}

pub fn load_segmenter(rc: &RunConfig, path: &Path) -> Result<Segmenter> {
    let mut f = Segmenter::new(rc.nets.segmenter.clone(), 0);
    f.params = load_params(path, &f.fingerprint())?;
    Ok(f)
}

pub fn load_generator(rc: &RunConfig, path: &Path) -> Result<Generator> {
    let mut g = Generator::new(rc.nets.generator.clone(), 0);
    g.params = load_params(path, &g.fingerprint())?;
    Ok(g)
}

/// I2I configurations compared in the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Full,
    NoClassGan,
    StandardGan,
    OnlinePseudo,
    NoGeneratorSeg,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoClassGan,
        Variant::StandardGan,
        Variant::OnlinePseudo,
        Variant::NoGeneratorSeg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoClassGan => "no_cgan",
            Variant::StandardGan => "sgan",
            Variant::OnlinePseudo => "online",
            Variant::NoGeneratorSeg => "no_gseg",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Variant::Full => "full model",
            Variant::NoClassGan => "without class-wise GAN loss",
            Variant::StandardGan => "standard GAN loss instead of least squares",
            Variant::OnlinePseudo => "online pseudo-labels from the classifier head",
            Variant::NoGeneratorSeg => "without the generator's segmentation loss",
        }
    }

    /// `rc` with this variant's toggle applied.
    pub fn apply(self, rc: &RunConfig) -> RunConfig {
        let mut c = rc.clone();
        match self {
            Variant::Full => {}
            Variant::NoClassGan => c.i2i.class_gan = false,
            Variant::StandardGan => c.i2i.gan_metric = GanMetric::Standard,
            Variant::OnlinePseudo => c.i2i.pseudo_labels = PseudoLabelSource::Online,
            Variant::NoGeneratorSeg => c.i2i.g_seg = false,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::config("variants", format!("unknown variant `{s}`; valid: {}", names.join(", ")))
        })
    }
}

/// Segmentation models of the component grid and the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegKind {
    /// Supervised on source only.
    SourceOnly,
    /// Source supervision plus consistency on target.
    Ssl,
    /// Source and translated supervision, no consistency.
    I2i(Variant),
    /// Source and translated supervision plus consistency.
    SslI2i(Variant),
}

impl SegKind {
    pub fn stage(self) -> String {
        match self {
            SegKind::SourceOnly => "seg_only".into(),
            SegKind::Ssl => "seg_ssl".into(),
            SegKind::I2i(v) => format!("seg_i2i_{v}"),
            SegKind::SslI2i(v) => format!("seg_ssl_i2i_{v}"),
        }
    }
}

/// Loaded dataset splits.
#[derive(Clone, Debug)]
pub struct Data {
    pub manifests: DatasetManifest,
    pub source: Split,
    pub target: Split,
    pub val: Split,
}

impl Data {
    pub fn load(manifests: DatasetManifest) -> Result<Self> {
        Ok(Data {
            source: Split::load(&manifests.source_train, true)?,
            target: Split::load(&manifests.target_train, false)?,
            val: Split::load(&manifests.target_val, true)?,
            manifests,
        })
    }

    /// Labelled halves of the validation split: probe training, probe eval.
    pub fn probe_halves(&self) -> (Split, Split) {
        self.val.split_at(self.val.len() / 2)
    }
}

/// Translation realism and reconstruction measurements of one I2I run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    /// Channel-mean histogram L1 distance of raw source images to target.
    pub source_to_target_l1: f64,
    /// The same distance for translated source images.
    pub translated_to_target_l1: f64,
    /// Mean `|G(x) − x|` on validation target images before training.
    pub identity_error_init: f64,
    pub identity_error_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub source_only_miou: f64,
    /// Also the quality of the pseudo-labels, which are its argmax.
    pub warmup_miou: f64,
    pub pseudo_label_coverage: Coverage,
    pub final_miou: f64,
    pub improvement: f64,
    pub translation: TranslationReport,
    pub gap: Option<GapReport>,
}

impl PipelineReport {
    pub fn to_text(&self) -> String {
        let t = &self.translation;
        let mut s = format!(
            "seed {}\n  source-only mIoU   {:6.2}\n  warm-up mIoU       {:6.2}\n  final mIoU         {:6.2}\n  improvement        {:+6.2}\n  hist L1 source     {:.4}\n  hist L1 translated {:.4}\n  identity err init  {:.4}\n  identity err final {:.4}\n",
            self.seed,
            100.0 * self.source_only_miou,
            100.0 * self.warmup_miou,
            100.0 * self.final_miou,
            100.0 * self.improvement,
            t.source_to_target_l1,
            t.translated_to_target_l1,
            t.identity_error_init,
            t.identity_error_final,
        );
        if let Some(g) = &self.gap {
            s.push_str(&format!(
                "  gap: upper {:.2}, source {:.2}, method {:.2}, closed {:.1}%\n",
                100.0 * g.upper_miou,
                100.0 * g.source_miou,
                100.0 * g.method_miou,
                g.closed_gap_pct
            ));
        }
        s
    }
}

/// One row per model, one score (mIoU in `[0, 1]`) per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub description: String,
    pub scores: Vec<f64>,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<Row>,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

impl Table {
    pub fn push(&mut self, name: &str, description: &str, scores: Vec<f64>) {
        self.rows.push(Row {
            name: name.into(),
            description: description.into(),
            median: median(&scores),
            scores,
        });
    }

    pub fn median_of(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.median)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n{:<14}", self.title, "variant");
        for seed in &self.seeds {
            s.push_str(&format!(" {:>8}", format!("seed {seed}")));
        }
        s.push_str(&format!(" {:>8}  description\n", "median"));
        for r in &self.rows {
            s.push_str(&format!("{:<14}", r.name));
            for v in &r.scores {
                s.push_str(&format!(" {:>8.2}", 100.0 * v));
            }
            s.push_str(&format!(" {:>8.2}  {}\n", 100.0 * r.median, r.description));
        }
        s
    }

    /// Writes `{stem}.json` and `{stem}.txt` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        write_json(&dir.join(format!("{stem}.json")), self)?;
        let p = dir.join(format!("{stem}.txt"));
        fs::write(&p, self.to_text()).map_err(|e| Error::io(&p, e))
    }
}

/// Runs and caches the stages of one run directory.
pub struct Runner {
    pub rc: RunConfig,
    pub data: Data,
    root: PathBuf,
    quiet: bool,
    auto: bool,
    started: Instant,
}

impl Runner {
    /// Validates `rc`, prepares its dataset and snapshots the config.
    pub fn open(rc: RunConfig) -> Result<Self> {
        rc.validate()?;
        let data = Data::load(prepare_data(&rc)?)?;
        let root = rc.run_dir();
        write_snapshot(&rc, &root)?;
        Ok(Runner {
            rc,
            data,
            root,
            quiet: false,
            auto: true,
            started: Instant::now(),
        })
    }

    /// Suppresses per-stage progress lines on stderr.
    pub fn quiet(mut self, quiet: bool) -> Self {
        self.quiet = quiet;
        self
    }

    /// Whether missing upstream stages are trained on demand (the default)
    /// or reported as prerequisite errors.
    pub fn auto(mut self, auto: bool) -> Self {
        self.auto = auto;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, seed: u64, stage: &str) -> PathBuf {
        self.root.join(format!("seed_{seed}")).join(stage)
    }

    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("[{} {:>7.1}s] {msg}", self.rc.name, self.started.elapsed().as_secs_f64());
        }
    }

    /// The stage directory, and whether `artefact` exists there from a run
    /// whose config agreed with `rc` on `sections`.
    fn cached(&self, rc: &RunConfig, sections: &[&str], seed: u64, stage: &str, artefact: &str) -> Result<(PathBuf, bool)> {
        let dir = self.stage_dir(seed, stage);
        let key = stage_key(rc, sections)?;
        let hit = dir.join(artefact).exists() && fs::read_to_string(dir.join(STAGE_KEY)).is_ok_and(|s| s == key);
        Ok((dir, hit))
    }

    /// Clears `dir` and records the config the stage is about to run with.
    fn fresh(&self, rc: &RunConfig, sections: &[&str], dir: &Path) -> Result<()> {
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_snapshot(rc, dir)?;
        let p = dir.join(STAGE_KEY);
        fs::write(&p, stage_key(rc, sections)?).map_err(|e| Error::io(&p, e))
    }

    /// Fails when a dependency is missing and may not be trained implicitly.
    fn require(&self, hit: bool, dep: bool, what: &str, command: &str) -> Result<()> {
        if hit || !dep || self.auto {
            Ok(())
        } else {
            Err(Error::Prerequisite(format!(
                "{what} not found under {} (run `uda {command}` first with the same config)",
                self.root.display()
            )))
        }
    }

    /// Warm-up teacher (the initial segmentation model).
    pub fn warmup(&self, seed: u64) -> Result<Segmenter> {
        self.warmup_at(seed, false)
    }

    fn warmup_at(&self, seed: u64, dep: bool) -> Result<Segmenter> {
        let rc = &self.rc;
        let (dir, hit) = self.cached(rc, WARMUP_KEY, seed, "warmup", "teacher.ckpt")?;
        if !hit {
            self.require(hit, dep, "warm-up checkpoint", "run warmup")?;
            self.log(&format!("seed {seed}: warm-up"));
            self.fresh(rc, WARMUP_KEY, &dir)?;
            run_warmup(rc, &rc.warmup, &self.data.source, Some(&self.data.target), seed, Some(&dir))?;
        }
        load_segmenter(rc, &dir.join("teacher.ckpt"))
    }

    /// Warm-up teacher predictions on the target-train split.
    pub fn pseudo_labels(&self, seed: u64) -> Result<PseudoLabelSet> {
        let rc = &self.rc;
        let (dir, hit) = self.cached(rc, I2I_KEY, seed, "pseudo", "coverage.json")?;
        if hit {
            return PseudoLabelSet::load(&dir, &self.data.target.seeds);
        }
        let teacher = self.warmup_at(seed, true)?;
        self.log(&format!("seed {seed}: pseudo-labels"));
        self.fresh(rc, I2I_KEY, &dir)?;
        let pl = generate_pseudo_labels(&teacher, &self.data.target, rc.i2i.pl_threshold)?;
        pl.save(&dir, &self.data.target.seeds)?;
        Ok(pl)
    }

    /// EMA generator of an I2I run.
    pub fn i2i(&self, seed: u64, v: Variant) -> Result<Generator> {
        self.i2i_at(seed, v, false)
    }

    fn i2i_at(&self, seed: u64, v: Variant, dep: bool) -> Result<Generator> {
        let rc = v.apply(&self.rc);
        let stage = format!("i2i_{v}");
        let (dir, hit) = self.cached(&rc, I2I_KEY, seed, &stage, "generator_ema.ckpt")?;
        if !hit {
            self.require(hit, dep, &format!("I2I checkpoint ({v})"), "run i2i")?;
            let trunk = self.warmup_at(seed, true)?;
            let pl = match rc.i2i.pseudo_labels {
                PseudoLabelSource::Precomputed => Some(self.pseudo_labels(seed)?),
                PseudoLabelSource::Online => None,
            };
            self.log(&format!("seed {seed}: I2I ({v})"));
            self.fresh(&rc, I2I_KEY, &dir)?;
            run_i2i(&rc, &self.data.source, &self.data.target, &trunk, pl.as_ref(), seed, Some(&dir))?;
        }
        load_generator(&rc, &dir.join("generator_ema.ckpt"))
    }

    /// Source images translated by an I2I run's EMA generator, paired with
    /// the source masks.
    pub fn translated(&self, seed: u64, v: Variant) -> Result<Split> {
        self.translated_at(seed, v, false)
    }

    fn translated_at(&self, seed: u64, v: Variant, dep: bool) -> Result<Split> {
        let rc = v.apply(&self.rc);
        let stage = format!("i2i_{v}");
        let (dir, hit) = self.cached(&rc, I2I_KEY, seed, &stage, TRANSLATED_MANIFEST)?;
        let m = if hit {
            Manifest::read(&dir.join(TRANSLATED_MANIFEST))?
        } else {
            self.require(hit, dep, &format!("translated images ({v})"), "run translate")?;
            let g = self.i2i_at(seed, v, true)?;
            self.log(&format!("seed {seed}: translating ({v})"));
            translate_dataset(&g, &self.data.manifests.source_train, &dir)?
        };
        Split::load(&m, true)
    }

    /// Effective config of a segmentation model. The SSL-only model reuses
    /// the warm-up run when the two phase settings coincide.
    fn seg_config(&self, kind: SegKind) -> RunConfig {
        let mut rc = match kind {
            SegKind::I2i(v) | SegKind::SslI2i(v) => v.apply(&self.rc),
            _ => self.rc.clone(),
        };
        let p = &mut rc.seg;
        match kind {
            SegKind::SourceOnly | SegKind::Ssl => {
                p.source_fraction = 1.0;
                p.translated_fraction = 0.0;
            }
            SegKind::I2i(_) | SegKind::SslI2i(_) => {}
        }
        p.consistency = matches!(kind, SegKind::Ssl | SegKind::SslI2i(_));
        rc
    }

    /// Teacher of a segmentation model.
    pub fn seg(&self, seed: u64, kind: SegKind) -> Result<Segmenter> {
        let rc = self.seg_config(kind);
        if kind == SegKind::Ssl && rc.seg == self.rc.warmup {
            return self.warmup(seed);
        }
        let stage = kind.stage();
        let (dir, hit) = self.cached(&rc, SEG_KEY, seed, &stage, "teacher.ckpt")?;
        if !hit {
            let translated = match kind {
                SegKind::I2i(v) | SegKind::SslI2i(v) => Some(self.translated_at(seed, v, true)?),
                _ => None,
            };
            self.log(&format!("seed {seed}: segmentation ({stage})"));
            self.fresh(&rc, SEG_KEY, &dir)?;
            run_segmentation(
                &rc,
                &rc.seg,
                &self.data.source,
                translated.as_ref(),
                Some(&self.data.target),
                seed,
                Some(&dir),
            )?;
        }
        load_segmenter(&rc, &dir.join("teacher.ckpt"))
    }

    /// Validation-split evaluation of a segmentation model, cached as
    /// `eval.json` in its stage directory.
    pub fn seg_eval(&self, seed: u64, kind: SegKind) -> Result<EvalReport> {
        let stage = if kind == SegKind::Ssl && self.seg_config(kind).seg == self.rc.warmup {
            "warmup".to_string()
        } else {
            kind.stage()
        };
        self.eval_stage(seed, &stage, || self.seg(seed, kind))
    }

    pub fn warmup_eval(&self, seed: u64) -> Result<EvalReport> {
        self.eval_stage(seed, "warmup", || self.warmup(seed))
    }

    fn eval_stage(&self, seed: u64, stage: &str, model: impl FnOnce() -> Result<Segmenter>) -> Result<EvalReport> {
        let f = model()?;
        let path = self.stage_dir(seed, stage).join("eval.json");
        if path.exists() {
            return read_json(&path);
        }
        let r = evaluate_model(&f, &self.data.val, &ClassSet::all(NUM_CLASSES))?;
        write_json(&path, &r)?;
        Ok(r)
    }

    /// Histogram distances and identity errors of an I2I run.
    pub fn translation_report(&self, seed: u64, v: Variant) -> Result<TranslationReport> {
        let path = self.stage_dir(seed, &format!("i2i_{v}")).join("translation.json");
        let translated = self.translated(seed, v)?;
        if path.exists() {
            return read_json(&path);
        }
        let g = self.i2i(seed, v)?;
        let target = channel_mean_histogram(&self.data.target.images, HIST_BINS);
        let r = TranslationReport {
            source_to_target_l1: histogram_l1(&channel_mean_histogram(&self.data.source.images, HIST_BINS), &target),
            translated_to_target_l1: histogram_l1(&channel_mean_histogram(&translated.images, HIST_BINS), &target),
            identity_error_init: identity_error(&initial_generator(&v.apply(&self.rc), seed), &self.data.val)?,
            identity_error_final: identity_error(&g, &self.data.val)?,
        };
        write_json(&path, &r)?;
        Ok(r)
    }

    /// Linear-probe gap analysis on the two labelled validation halves:
    /// a model trained on the first half is the upper bound, and the
    /// source-only and final models are probed on it. All three are scored
    /// on the second half.
    pub fn gap(&self, seed: u64) -> Result<GapReport> {
        let rc = self.seg_config(SegKind::SourceOnly);
        let (dir, hit) = self.cached(&rc, SEG_KEY, seed, "gap", "gap.json")?;
        let path = dir.join("gap.json");
        if hit {
            return read_json(&path);
        }
        let (train, eval) = self.data.probe_halves();
        let all = ClassSet::all(NUM_CLASSES);
        self.log(&format!("seed {seed}: target-supervised upper bound"));
        self.fresh(&rc, SEG_KEY, &dir)?;
        let upper = run_segmentation(&rc, &rc.seg, &train, None, None, seed, Some(&dir.join("upper")))?.teacher;
        let probe = |f: &Segmenter| -> Result<f64> {
            let p = linear_probe(f, &train, &self.rc.probe, seed)?;
            Ok(evaluate_model(&p, &eval, &all)?.miou)
        };
        let source = probe(&self.seg(seed, SegKind::SourceOnly)?)?;
        let method = probe(&self.seg(seed, SegKind::SslI2i(Variant::Full))?)?;
        let r = gap_report(evaluate_model(&upper, &eval, &all)?.miou, source, method)?;
        write_json(&path, &r)?;
        Ok(r)
    }

    /// All phases for one seed: warm-up, pseudo-labels, I2I, translation,
    /// final segmentation and the comparison against source-only training.
    pub fn pipeline(&self, seed: u64, with_gap: bool) -> Result<PipelineReport> {
        let source_only = self.seg_eval(seed, SegKind::SourceOnly)?.miou;
        let warmup = self.warmup_eval(seed)?.miou;
        let coverage = self.pseudo_labels(seed)?.coverage;
        let translation = self.translation_report(seed, Variant::Full)?;
        let final_miou = self.seg_eval(seed, SegKind::SslI2i(Variant::Full))?.miou;
        let gap = if with_gap { Some(self.gap(seed)?) } else { None };
        let r = PipelineReport {
            seed,
            source_only_miou: source_only,
            warmup_miou: warmup,
            pseudo_label_coverage: coverage,
            final_miou,
            improvement: final_miou - source_only,
            translation,
            gap,
        };
        write_json(&self.root.join(format!("seed_{seed}")).join("pipeline.json"), &r)?;
        Ok(r)
    }

    /// Downstream mIoU of segmentation models trained without consistency
    /// on each variant's translations.
    pub fn ablate(&self, seeds: &[u64], variants: &[Variant]) -> Result<Table> {
        let mut t = Table {
            title: "I2I ablation: target mIoU of segmentation trained on source + translated".into(),
            seeds: seeds.to_vec(),
            rows: Vec::new(),
        };
        for &v in variants {
            let scores = seeds
                .iter()
                .map(|&s| Ok(self.seg_eval(s, SegKind::I2i(v))?.miou))
                .collect::<Result<Vec<_>>>()?;
            t.push(v.name(), v.describe(), scores);
        }
        t.save(&self.root, "ablation")?;
        Ok(t)
    }

    /// Segmentation with and without consistency training and translated
    /// images.
    pub fn component_grid(&self, seeds: &[u64]) -> Result<Table> {
        let mut t = Table {
            title: "Component grid: target mIoU".into(),
            seeds: seeds.to_vec(),
            rows: Vec::new(),
        };
        let kinds = [
            (SegKind::SourceOnly, "seg_only", "source supervision only"),
            (SegKind::Ssl, "seg_ssl", "plus consistency on target"),
            (SegKind::I2i(Variant::Full), "seg_i2i", "plus translated source"),
            (SegKind::SslI2i(Variant::Full), "seg_ssl_i2i", "consistency and translated source"),
        ];
        for (kind, name, desc) in kinds {
            let scores = seeds
                .iter()
                .map(|&s| Ok(self.seg_eval(s, kind)?.miou))
                .collect::<Result<Vec<_>>>()?;
            t.push(name, desc, scores);
        }
        t.save(&self.root, "components")?;
        Ok(t)
    }
}
