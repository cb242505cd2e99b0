//! I2I ablation and component grid over several seeds.
//!
//! `cargo run --release --example ablation -- [preset] [seeds] [run_root]`,
//! seeds as a comma list such as `0,1,2`. Stages already present in the run
//! directory are reused.

use uda_i2i::config::RunConfig;
use uda_i2i::pipeline::{Runner, Variant};

fn main() -> uda_i2i::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut rc = RunConfig::preset(args.first().map_or("smoke", String::as_str))?;
    let seeds: Vec<u64> = args
        .get(1)
        .map_or("0,1,2", String::as_str)
        .split(',')
        .map(|s| s.trim().parse().expect("seeds must be integers"))
        .collect();
    rc.out_dir = args.get(2).map_or_else(|| std::env::temp_dir().join("uda-runs"), Into::into);
    let runner = Runner::open(rc)?;
    print!("{}", runner.ablate(&seeds, &Variant::ALL)?.to_text());
    println!();
    print!("{}", runner.component_grid(&seeds)?.to_text());
    Ok(())
}
