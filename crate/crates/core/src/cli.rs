//! The `uda` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::data::{ClassSet, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::eval::{dump_triptych, evaluate_model, gap_report, linear_probe, Predict};
use crate::pipeline::{load_segmenter, prepare_data, write_snapshot, Data, Runner, SegKind, Variant};

#[derive(Parser, Debug)]
#[command(name = "uda", version, about = "Domain-adaptive segmentation with image-to-image translation on a toy world")]
pub struct Cli {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Run configuration file (TOML); replaces the preset.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: default, bench or smoke.
    #[arg(long, global = true, default_value = "default")]
    pub preset: String,
    /// Override a config key by dotted path, e.g. `--set i2i.steps=100`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Run-directory root (the UDA_RUN_ROOT variable takes precedence).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// No progress lines on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::preset(&self.preset)?,
        };
        let mut rc = base.with_overrides(&self.sets)?;
        if let Some(out) = &self.out {
            rc.out_dir = out.clone();
        }
        rc.validate()?;
        Ok(rc)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the source, target and validation splits.
    GenData,
    /// Run one training phase. Earlier phases must already exist.
    Run(RunArgs),
    /// Evaluate a segmentation checkpoint on the validation split.
    Eval(EvalArgs),
    /// Train every requested I2I variant and tabulate downstream mIoU.
    Ablate(AblateArgs),
    /// All phases, from data generation to the final model and its report.
    Pipeline(PipelineArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    I2i,
    Translate,
    Seg,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegModel {
    /// Source supervision only.
    #[value(name = "source-only")]
    Only,
    /// Plus consistency on target images.
    Ssl,
    /// Plus translated source images.
    I2i,
    /// Consistency and translated source images.
    SslI2i,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    pub phase: Phase,
    /// Training seed (defaults to the config's `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// I2I variant for i2i, translate and seg.
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    pub variant: Variant,
    /// Which segmentation model `run seg` trains.
    #[arg(long, value_enum, default_value = "ssl-i2i")]
    pub model: SegModel,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Segmentation checkpoint, e.g. `runs/default/seed_0/warmup/teacher.ckpt`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Class ids left out of the mean, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<usize>,
    /// Retrain the classifier on the first half of the validation split and
    /// score both models on the second half.
    #[arg(long)]
    pub probe: bool,
    /// Upper-bound mIoU (percent) for the gap report.
    #[arg(long, requires = "probe")]
    pub upper: Option<f64>,
    /// Source-only mIoU (percent) for the gap report.
    #[arg(long, requires = "probe")]
    pub source: Option<f64>,
    /// Use this mIoU (percent) as the method score instead of the probed one.
    #[arg(long, requires = "probe")]
    pub method: Option<f64>,
    /// Write `input | prediction | truth` images for the first N images.
    #[arg(long, default_value_t = 0)]
    pub dump: usize,
    /// Report directory (defaults to `<run dir>/eval`).
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Training seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// I2I variants to train and score.
    #[arg(long, value_delimiter = ',', default_value = "full,no_cgan,sgan,online,no_gseg", value_parser = parse_variant)]
    pub variants: Vec<Variant>,
    /// Also tabulate the consistency × translation component grid.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Training seeds, comma separated (defaults to the config's `seed`).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Add the linear-probe domain-gap analysis.
    #[arg(long)]
    pub gap: bool,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let rc = cli.config.load()?;
    let quiet = cli.config.quiet;
    match &cli.command {
        Command::GenData => gen_data(&rc),
        Command::Run(a) => run_phase(rc, a, quiet),
        Command::Eval(a) => eval(&rc, a),
        Command::Ablate(a) => {
            let runner = Runner::open(rc)?.quiet(quiet);
            println!("{}", runner.ablate(&a.seeds, &a.variants)?.to_text());
            if a.grid {
                println!("{}", runner.component_grid(&a.seeds)?.to_text());
            }
            Ok(())
        }
        Command::Pipeline(a) => {
            let seeds = if a.seeds.is_empty() { vec![rc.seed] } else { a.seeds.clone() };
            let runner = Runner::open(rc)?.quiet(quiet);
            for seed in seeds {
                let r = runner.pipeline(seed, a.gap)?;
                print!("{}", r.to_text());
                println!("final teacher: {}", runner.stage_dir(seed, &SegKind::SslI2i(Variant::Full).stage()).join("teacher.ckpt").display());
            }
            Ok(())
        }
    }
}

fn gen_data(rc: &RunConfig) -> Result<()> {
    let m = prepare_data(rc)?;
    write_snapshot(rc, &rc.data_dir())?;
    for (name, split) in [("source_train", &m.source_train), ("target_train", &m.target_train), ("target_val", &m.target_val)] {
        println!("{name}: {} images", split.len());
    }
    println!("data written to {}", rc.data_dir().display());
    Ok(())
}

fn run_phase(rc: RunConfig, a: &RunArgs, quiet: bool) -> Result<()> {
    let seed = a.seed.unwrap_or(rc.seed);
    let runner = Runner::open(rc)?.quiet(quiet).auto(false);
    let v = a.variant;
    match a.phase {
        Phase::Warmup => {
            let r = runner.warmup_eval(seed)?;
            println!("warm-up teacher: {}", runner.stage_dir(seed, "warmup").join("teacher.ckpt").display());
            print!("{}", r.to_text());
        }
        Phase::I2i => {
            runner.i2i(seed, v)?;
            println!("generator: {}", runner.stage_dir(seed, &format!("i2i_{v}")).join("generator_ema.ckpt").display());
        }
        Phase::Translate => {
            let s = runner.translated(seed, v)?;
            println!("{} translated images in {}", s.len(), runner.stage_dir(seed, &format!("i2i_{v}")).display());
        }
        Phase::Seg => {
            let kind = match a.model {
                SegModel::Only => SegKind::SourceOnly,
                SegModel::Ssl => SegKind::Ssl,
                SegModel::I2i => SegKind::I2i(v),
                SegModel::SslI2i => SegKind::SslI2i(v),
            };
            let r = runner.seg_eval(seed, kind)?;
            println!("teacher: {}", runner.stage_dir(seed, &kind.stage()).join("teacher.ckpt").display());
            print!("{}", r.to_text());
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn eval(rc: &RunConfig, a: &EvalArgs) -> Result<()> {
    let model = load_segmenter(rc, &a.checkpoint)?;
    let data = Data::load(prepare_data(rc)?)?;
    let subset = ClassSet::excluding(NUM_CLASSES, &a.exclude)?;
    let dir = a.report_dir.clone().unwrap_or_else(|| rc.run_dir().join("eval"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_snapshot(rc, &dir)?;

    let (split, probed) = if a.probe {
        let (train, held) = data.probe_halves();
        let p = linear_probe(&model, &train, &rc.probe, rc.seed)?;
        (held, Some(p))
    } else {
        (data.val.clone(), None)
    };
    let report = evaluate_model(&model, &split, &subset)?;
    write_text(&dir.join("eval.json"), &serde_json::to_string_pretty(&report)?)?;
    write_text(&dir.join("eval.txt"), &report.to_text())?;
    print!("{}", report.to_text());

    let mut shown: &dyn Predict = &model;
    if let Some(p) = &probed {
        let pr = evaluate_model(p, &split, &subset)?;
        write_text(&dir.join("probe.json"), &serde_json::to_string_pretty(&pr)?)?;
        println!("after linear probe:");
        print!("{}", pr.to_text());
        if let (Some(upper), Some(source)) = (a.upper, a.source) {
            let method = a.method.unwrap_or(100.0 * pr.miou);
            let g = gap_report(upper, source, method)?;
            write_text(&dir.join("gap.json"), &serde_json::to_string_pretty(&g)?)?;
            println!(
                "domain gap: remaining {:.1}%, closed {:.1}%",
                g.remaining_gap_pct, g.closed_gap_pct
            );
        }
        shown = p;
    }
    if a.dump > 0 {
        let dump = dir.join("dump");
        fs::create_dir_all(&dump).map_err(|e| Error::io(&dump, e))?;
        let masks = split.masks()?;
        for (i, (img, gt)) in split.images.iter().zip(masks).take(a.dump).enumerate() {
            let pred = shown.predict(i, img)?;
            dump_triptych(img, &pred, gt, &dump.join(format!("{}.png", split.seeds[i])))?;
        }
    }
    println!("reports in {}", dir.display());
    Ok(())
}
