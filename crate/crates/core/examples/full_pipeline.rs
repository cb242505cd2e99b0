//! Every phase for one seed on a named preset, then the report.
//!
//! `cargo run --release --example full_pipeline -- [preset] [seed] [run_root]`
//! with preset `smoke` (default), `bench` or `default`.

use uda_i2i::config::RunConfig;
use uda_i2i::pipeline::Runner;

fn main() -> uda_i2i::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut rc = RunConfig::preset(args.first().map_or("smoke", String::as_str))?;
    let seed = args.get(1).map_or(Ok(0), |s| s.parse()).expect("seed must be an integer");
    rc.out_dir = args.get(2).map_or_else(|| std::env::temp_dir().join("uda-runs"), Into::into);
    let runner = Runner::open(rc)?;
    let report = runner.pipeline(seed, true)?;
    print!("{}", report.to_text());
    println!("artefacts under {}", runner.root().display());
    Ok(())
}
