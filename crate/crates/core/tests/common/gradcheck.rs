//! Central finite differences against the analytic loss gradients, in f64.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uda_autograd::{Graph, Tensor};
use uda_i2i::losses::{self, GanMetric, Loss, SymCe};
use uda_i2i::nets::{Binder, Segmenter, SegmenterCfg};

use super::{onehot, rng, soft_labels, uniform, Check, Dims};

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-7;

fn numeric(f: &dyn Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += STEP;
            let mut m = x.clone();
            m.data_mut()[i] -= STEP;
            (f(&p) - f(&m)) / (2.0 * STEP)
        })
        .collect()
}

fn err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(FLOOR))
        .fold(0.0, f64::max)
}

/// Checks gradient `which` of `loss` w.r.t. input `which` of `inputs`.
fn check_input(
    c: &mut Check,
    inputs: &[Tensor<f64>],
    which: usize,
    loss: &dyn Fn(&[Tensor<f64>]) -> Loss<f64>,
) {
    let analytic = loss(inputs).grads[which].clone();
    let f = |x: &Tensor<f64>| {
        let mut v = inputs.to_vec();
        v[which] = x.clone();
        loss(&v).value
    };
    c.record(err(analytic.data(), &numeric(&f, &inputs[which])));
}

fn small(r: &mut ChaCha8Rng) -> Dims {
    Dims::random(r, 2, 4, 3)
}

fn seg_ce(r: &mut ChaCha8Rng, n: usize) -> Check {
    let mut c = Check::new("seg_ce");
    for i in 0..n {
        let d = small(r);
        let y = if i % 2 == 0 { onehot(r, d, 0.0) } else { soft_labels(r, d) };
        let z = uniform(r, d, -3.0, 3.0);
        check_input(&mut c, &[z], 0, &|v| losses::seg_ce(&v[0], &y).unwrap());
        c.done();
    }
    c
}

fn sym_ce(r: &mut ChaCha8Rng, n: usize) -> Check {
    let mut c = Check::new("sym_ce");
    for i in 0..n {
        let d = small(r);
        let y = if i % 2 == 0 { onehot(r, d, 0.0) } else { soft_labels(r, d) };
        let z = uniform(r, d, -3.0, 3.0);
        let s = SymCe {
            alpha: r.gen_range(0.2..1.5),
            beta: r.gen_range(0.2..1.5),
            log_clamp: -4.0,
        };
        check_input(&mut c, &[z], 0, &|v| losses::sym_ce(&v[0], &y, s).unwrap());
        c.done();
    }
    c
}

fn dgan(r: &mut ChaCha8Rng, n: usize) -> Vec<Check> {
    let (mut cd, mut cg) = (Check::new("dgan_d"), Check::new("dgan_g"));
    for i in 0..n {
        let m = [GanMetric::LeastSquares, GanMetric::Standard][i % 2];
        let d = small(r).with_k(1);
        let inputs = [uniform(r, d, -3.0, 3.0), uniform(r, d, -3.0, 3.0)];
        for which in 0..2 {
            check_input(&mut cd, &inputs, which, &|v| losses::dgan_d(&v[0], &v[1], m).unwrap());
        }
        check_input(&mut cg, &inputs[..1], 0, &|v| losses::dgan_g(&v[0], m).unwrap());
        cd.done();
        cg.done();
    }
    vec![cd, cg]
}

fn cgan(r: &mut ChaCha8Rng, n: usize) -> Vec<Check> {
    let (mut cd, mut cg) = (Check::new("cgan_d"), Check::new("cgan_g"));
    for i in 0..n {
        let m = [GanMetric::LeastSquares, GanMetric::Standard][i % 2];
        let d = small(r);
        let (ys, yt) = (onehot(r, d, 0.2), onehot(r, d, 0.2));
        let inputs = [uniform(r, d, -3.0, 3.0), uniform(r, d, -3.0, 3.0)];
        for which in 0..2 {
            check_input(&mut cd, &inputs, which, &|v| losses::cgan_d(&v[0], &ys, &v[1], &yt, m).unwrap());
        }
        check_input(&mut cg, &inputs[..1], 0, &|v| losses::cgan_g(&v[0], &ys, m).unwrap());
        cd.done();
        cg.done();
    }
    vec![cd, cg]
}

fn identity(r: &mut ChaCha8Rng, n: usize) -> Check {
    let mut c = Check::new("identity_loss");
    for _ in 0..n {
        let d = small(r).with_k(3);
        let x = uniform(r, d, -1.0, 1.0);
        // Offsets bounded away from the kink at zero.
        let shifted = x
            .data()
            .iter()
            .map(|&v| v + if r.gen_bool(0.5) { 1.0 } else { -1.0 } * r.gen_range(0.01..0.5))
            .collect();
        let gx = Tensor::from_vec(x.shape(), shifted).unwrap();
        check_input(&mut c, &[gx], 0, &|v| losses::identity_loss(&v[0], &x).unwrap());
        c.done();
    }
    c
}

fn consistency(r: &mut ChaCha8Rng, n: usize) -> Check {
    let mut c = Check::new("consistency_loss");
    for _ in 0..n {
        let d = small(r);
        let t = uniform(r, d, -3.0, 3.0);
        let s = uniform(r, d, -3.0, 3.0);
        check_input(&mut c, &[s], 0, &|v| losses::consistency_loss(&t, &v[0]).unwrap());
        c.done();
    }
    c
}

/// Cross-entropy through a small segmenter: every parameter of a random
/// subset of coordinates, perturbed in place.
fn segmenter_ce(r: &mut ChaCha8Rng, n: usize) -> Check {
    let mut c = Check::new("seg_ce through segmenter");
    let cfg = SegmenterCfg {
        width1: 4,
        width2: 6,
        depth: 1,
        dilation_rates: vec![1, 2],
        ..SegmenterCfg::default()
    };
    for _ in 0..n {
        let f = Segmenter::new(cfg.clone(), r.gen());
        let params = f.params.cast::<f64>();
        let d = Dims {
            n: 1,
            k: 3,
            h: 8,
            w: 8,
        };
        let x = uniform(r, d, -1.0, 1.0);
        let y = onehot(r, d.with_k(cfg.num_classes), 0.0);
        let forward = |p: &uda_i2i::data::NetParams<f64>| {
            let mut g = Graph::<f64>::new();
            let b = Binder::bind(&mut g, p, "", |_| true);
            let xv = g.constant(x.clone());
            let z = f.build(&mut g, &b, "", xv).unwrap();
            let l = losses::seg_ce(g.value(z), &y).unwrap();
            (g, b, z, l)
        };
        let (g, b, z, l) = forward(&params);
        let grads = g.backward(&[(z, l.grads[0].clone())]);
        let analytic = b.grads(&g, &grads, "");
        let names: Vec<String> = params.names().map(String::from).collect();
        let mut a = Vec::new();
        let mut num = Vec::new();
        for _ in 0..12 {
            let name = &names[r.gen_range(0..names.len())];
            let i = r.gen_range(0..params.get(name).unwrap().len());
            let at = |delta: f64| {
                let mut p = params.clone();
                p.get_mut(name).unwrap().data_mut()[i] += delta;
                forward(&p).3.value
            };
            num.push((at(STEP) - at(-STEP)) / (2.0 * STEP));
            a.push(analytic.get(name).unwrap().data()[i]);
        }
        c.record(err(&a, &num));
        c.done();
    }
    c
}

/// `instances` finite-difference checks per loss.
pub fn run_all(instances: usize, seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let mut out = vec![seg_ce(&mut r, instances), sym_ce(&mut r, instances)];
    out.extend(dgan(&mut r, instances));
    out.extend(cgan(&mut r, instances));
    out.push(identity(&mut r, instances));
    out.push(consistency(&mut r, instances));
    out.push(segmenter_ce(&mut r, instances));
    out
}
