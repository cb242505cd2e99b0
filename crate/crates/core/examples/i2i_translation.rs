//! Trains the translator against a warmed-up segmenter and measures how
//! far translated source images moved towards the target statistics.
//!
//! `cargo run --release --example i2i_translation`

use uda_i2i::config::RunConfig;
use uda_i2i::pipeline::{prepare_data, Data};
use uda_i2i::trainer::{
    channel_mean_histogram, generate_pseudo_labels, histogram_l1, identity_error, initial_generator, run_i2i,
    run_warmup, translate_dataset, Split,
};

fn main() -> uda_i2i::Result<()> {
    let mut rc = RunConfig::smoke();
    rc.out_dir = std::env::temp_dir().join("uda-examples");
    let data = Data::load(prepare_data(&rc)?)?;
    let teacher = run_warmup(&rc, &rc.warmup, &data.source, Some(&data.target), 0, None)?.teacher;
    let pl = generate_pseudo_labels(&teacher, &data.target, rc.i2i.pl_threshold)?;
    let out = run_i2i(&rc, &data.source, &data.target, &teacher, Some(&pl), 0, None)?;
    if let Some(last) = out.reports.last() {
        for (name, v) in last.fields() {
            println!("{name:>12} {v:.4}");
        }
    }

    let dir = rc.run_dir().join("i2i_example");
    let translated = Split::load(&translate_dataset(&out.generator_ema, &data.manifests.source_train, &dir)?, true)?;
    let target = channel_mean_histogram(&data.target.images, 16);
    let raw = histogram_l1(&channel_mean_histogram(&data.source.images, 16), &target);
    let moved = histogram_l1(&channel_mean_histogram(&translated.images, 16), &target);
    println!("channel-mean histogram L1 to target: raw {raw:.3}, translated {moved:.3}");
    let before = identity_error(&initial_generator(&rc, 0), &data.val)?;
    let after = identity_error(&out.generator_ema, &data.val)?;
    println!("identity error on target: {before:.4} -> {after:.4}");
    println!("translated images under {}", dir.display());
    Ok(())
}
