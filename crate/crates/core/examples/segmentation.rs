//! Source-only training against self-training on source, translated
//! source and target images, scored on the labelled target split.
//!
//! `cargo run --release --example segmentation`

use uda_i2i::config::RunConfig;
use uda_i2i::data::{ClassSet, NUM_CLASSES};
use uda_i2i::eval::evaluate_model;
use uda_i2i::pipeline::{prepare_data, Data};
use uda_i2i::trainer::{generate_pseudo_labels, run_i2i, run_segmentation, run_warmup, translate_dataset, Split};

fn main() -> uda_i2i::Result<()> {
    let mut rc = RunConfig::smoke();
    rc.out_dir = std::env::temp_dir().join("uda-examples");
    let data = Data::load(prepare_data(&rc)?)?;
    let all = ClassSet::all(NUM_CLASSES);

    let mut plain = rc.seg.clone();
    plain.consistency = false;
    plain.source_fraction = 1.0;
    plain.translated_fraction = 0.0;
    let source_only = run_segmentation(&rc, &plain, &data.source, None, None, 0, None)?.teacher;

    let teacher = run_warmup(&rc, &rc.warmup, &data.source, Some(&data.target), 0, None)?.teacher;
    let pl = generate_pseudo_labels(&teacher, &data.target, rc.i2i.pl_threshold)?;
    let g = run_i2i(&rc, &data.source, &data.target, &teacher, Some(&pl), 0, None)?.generator_ema;
    let dir = rc.run_dir().join("segmentation_example");
    let translated = Split::load(&translate_dataset(&g, &data.manifests.source_train, &dir)?, true)?;
    let adapted = run_segmentation(&rc, &rc.seg, &data.source, Some(&translated), Some(&data.target), 0, None)?.teacher;

    for (name, f) in [("source only", &source_only), ("SSL + I2I", &adapted)] {
        println!("{name:>12}: target mIoU {:.1}", 100.0 * evaluate_model(f, &data.val, &all)?.miou);
    }
    Ok(())
}
