//! Evaluates every training objective on one small random batch and
//! prints its value and gradient norm.
//!
//! `cargo run --example losses_tour`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uda_autograd::Tensor;
use uda_i2i::losses::{self, GanMetric, Loss, SymCe};

fn random(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

/// One-hot labels over `k` channels with roughly a fifth of the pixels
/// left unlabelled.
fn labels(r: &mut ChaCha8Rng, n: usize, k: usize, hw: usize) -> Tensor<f64> {
    let mut y = vec![0.0; n * k * hw];
    for b in 0..n {
        for p in 0..hw {
            if r.gen_bool(0.8) {
                y[(b * k + r.gen_range(0..k)) * hw + p] = 1.0;
            }
        }
    }
    Tensor::from_vec(&[n, k, hw, 1], y).unwrap()
}

fn show(name: &str, l: &Loss<f64>) {
    let norm: f64 = l.grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
    println!("{name:<22} {:>10.5}   |grad| {norm:.5}", l.value);
}

fn main() -> uda_i2i::Result<()> {
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let (n, k, hw) = (2, 5, 16);
    let logits = random(&mut r, &[n, k, hw, 1], -3.0, 3.0);
    let y = labels(&mut r, n, k, hw);
    show("seg_ce", &losses::seg_ce(&logits, &y)?);
    show("sym_ce", &losses::sym_ce(&logits, &y, SymCe::default())?);

    let (fake, real) = (random(&mut r, &[n, 1, hw, 1], -2.0, 2.0), random(&mut r, &[n, 1, hw, 1], -2.0, 2.0));
    let (fake_k, real_k) = (random(&mut r, &[n, k, hw, 1], -2.0, 2.0), random(&mut r, &[n, k, hw, 1], -2.0, 2.0));
    let y_t = labels(&mut r, n, k, hw);
    for m in [GanMetric::LeastSquares, GanMetric::Standard] {
        println!("-- {m:?}");
        show("dgan_d", &losses::dgan_d(&fake, &real, m)?);
        show("dgan_g", &losses::dgan_g(&fake, m)?);
        show("cgan_d", &losses::cgan_d(&fake_k, &y, &real_k, &y_t, m)?);
        show("cgan_g", &losses::cgan_g(&fake_k, &y, m)?);
    }

    let x = random(&mut r, &[n, 3, hw, 1], -1.0, 1.0);
    let gx = random(&mut r, &[n, 3, hw, 1], -1.0, 1.0);
    show("identity", &losses::identity_loss(&gx, &x)?);
    let teacher = random(&mut r, &[n, k, hw, 1], -3.0, 3.0);
    show("consistency", &losses::consistency_loss(&teacher, &logits)?);
    Ok(())
}
