//! Evaluation tools: per-class IoU, a linear probe on labelled target
//! images, the closed-gap arithmetic and prediction triptychs.
//!
//! `cargo run --release --example eval_probe`

use uda_i2i::config::RunConfig;
use uda_i2i::data::{ClassSet, NUM_CLASSES};
use uda_i2i::eval::{dump_triptych, evaluate_model, gap_report, linear_probe};
use uda_i2i::pipeline::{prepare_data, Data};
use uda_i2i::trainer::run_warmup;

fn main() -> uda_i2i::Result<()> {
    let mut rc = RunConfig::smoke();
    rc.out_dir = std::env::temp_dir().join("uda-examples");
    let data = Data::load(prepare_data(&rc)?)?;
    let all = ClassSet::all(NUM_CLASSES);
    let f = run_warmup(&rc, &rc.warmup, &data.source, Some(&data.target), 0, None)?.teacher;
    print!("{}", evaluate_model(&f, &data.val, &all)?.to_text());

    let (train, held_out) = data.probe_halves();
    let before = evaluate_model(&f, &held_out, &all)?.miou;
    let probed = linear_probe(&f, &train, &rc.probe, 0)?;
    let after = evaluate_model(&probed, &held_out, &all)?.miou;
    println!("held-out mIoU {:.1} -> {:.1} after probing the classifier", 100.0 * before, 100.0 * after);

    let gap = gap_report(68.0, 39.6, 59.0)?;
    println!("upper 68.0, source 39.6, method 59.0: closed {:.1}% of the gap", gap.closed_gap_pct);

    let dir = rc.run_dir().join("eval_example");
    let masks = held_out.masks().expect("labelled split");
    for (i, (x, y)) in held_out.images.iter().zip(masks).take(3).enumerate() {
        dump_triptych(x, &f.predict(x)?, y, &dir.join(format!("triptych_{i}.png")))?;
    }
    println!("triptychs under {}", dir.display());
    Ok(())
}
