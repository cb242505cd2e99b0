//! Mean-teacher warm-up on the smoke data, its target mIoU and the
//! pseudo-labels it produces.
//!
//! `cargo run --release --example warmup -- [steps]`

use uda_i2i::config::RunConfig;
use uda_i2i::data::{ClassSet, NUM_CLASSES};
use uda_i2i::eval::evaluate_model;
use uda_i2i::pipeline::{prepare_data, Data};
use uda_i2i::trainer::{generate_pseudo_labels, run_warmup};

fn main() -> uda_i2i::Result<()> {
    let mut rc = RunConfig::smoke();
    rc.out_dir = std::env::temp_dir().join("uda-examples");
    if let Some(steps) = std::env::args().nth(1) {
        rc.warmup.steps = steps.parse().expect("steps must be an integer");
    }
    let data = Data::load(prepare_data(&rc)?)?;
    let out = run_warmup(&rc, &rc.warmup, &data.source, Some(&data.target), 0, None)?;
    for r in out.reports.iter().step_by((rc.warmup.steps / 6).max(1)) {
        println!("step {:>4}  ce {:.4}  con {:.4}  lambda_con {:.3}", r.step, r.seg_src, r.con, r.lambda_con);
    }
    let all = ClassSet::all(NUM_CLASSES);
    print!("{}", evaluate_model(&out.teacher, &data.val, &all)?.to_text());
    let pl = generate_pseudo_labels(&out.teacher, &data.target, rc.i2i.pl_threshold)?;
    let c = &pl.coverage;
    println!(
        "pseudo-labels: {} masks, {:.1}% of pixels at max-prob >= {}",
        pl.masks.len(),
        100.0 * c.confident_fraction,
        c.threshold
    );
    Ok(())
}
