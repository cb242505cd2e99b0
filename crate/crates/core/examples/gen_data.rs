//! Generates a source/target toy split and compares the measured class
//! frequencies with the spawn model's expectation.
//!
//! `cargo run --release --example gen_data -- [out_dir] [size]`

use std::path::PathBuf;

use uda_i2i::data::NUM_CLASSES;
use uda_i2i::eval::dump_triptych;
use uda_i2i::toyworld::{expected_class_frequencies, make_split, perturb, DomainSpec, PerturbSpec, SplitRequest};
use uda_i2i::trainer::Split;

fn main() -> uda_i2i::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out: PathBuf = args.first().map_or_else(|| std::env::temp_dir().join("uda-toyworld"), Into::into);
    let size = args.get(1).map_or(64, |s| s.parse().expect("size must be an integer"));
    let (src, tgt) = (DomainSpec::source(), DomainSpec::target());
    let req = SplitRequest {
        n_src: 64,
        n_tgt: 64,
        n_val_tgt: 32,
        size,
        seed: 0,
        seed_block: 1 << 20,
    };
    let m = make_split(&src, &tgt, &req, &out)?;

    for (name, spec, manifest) in [("source", &src, &m.source_train), ("target val", &tgt, &m.target_val)] {
        let split = Split::load(manifest, true)?;
        let mut counts = [0u64; NUM_CLASSES];
        for mask in split.masks().expect("labelled split") {
            for (c, n) in counts.iter_mut().zip(mask.histogram(NUM_CLASSES)) {
                *c += n;
            }
        }
        let total: u64 = counts.iter().sum();
        let want = expected_class_frequencies(spec, size)?;
        println!("{name}: class  measured  expected");
        for c in 0..NUM_CLASSES {
            println!("        {c:>5}  {:>8.3}  {:>8.3}", counts[c] as f64 / total as f64, want[c]);
        }
    }

    let source = Split::load(&m.source_train, true)?;
    let (x, y) = (&source.images[0], &source.masks().expect("labelled")[0]);
    let noisy = perturb(x, &PerturbSpec::default(), 7);
    dump_triptych(&noisy, y, y, &out.join("perturbed_example.png"))?;
    println!("{} source, {} target, {} validation images under {}", m.source_train.len(), m.target_train.len(), m.target_val.len(), out.display());
    Ok(())
}
