//! Masking, stop-gradient, frozen-trunk, EMA and schedule invariants.

use rand::Rng;
use uda_autograd::{Graph, Tensor};
use uda_i2i::data::{Hyper, NetParams};
use uda_i2i::losses::{self, GanMetric};
use uda_i2i::nets::{Binder, Segmenter, TRUNK};
use uda_i2i::toyworld::{Domain, DomainSpec};
use uda_i2i::trainer::{ema_update, initial_generator, lambda_fade, run_i2i, Schedule};

use super::{onehot, rng, scenes, tiny_config, uniform, Dims};

type Outcome = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bits(t: &Tensor<f64>) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

/// Class-wise GAN terms ignore scores wherever the label mask is zero.
pub fn cgan_masking(instances: usize, seed: u64) -> Outcome {
    let mut r = rng(seed);
    for i in 0..instances {
        let m = [GanMetric::LeastSquares, GanMetric::Standard][i % 2];
        let d = Dims::random(&mut r, 2, 5, 5);
        let (f, re) = (uniform(&mut r, d, -3.0, 3.0), uniform(&mut r, d, -3.0, 3.0));
        let (ys, yt) = (onehot(&mut r, d, 0.3), onehot(&mut r, d, 0.3));
        let scramble = |t: &Tensor<f64>, mask: &Tensor<f64>, r: &mut rand_chacha::ChaCha8Rng| {
            let data = t
                .data()
                .iter()
                .zip(mask.data())
                .map(|(&v, &y)| if y == 0.0 { r.gen_range(-50.0..50.0) } else { v })
                .collect();
            Tensor::from_vec(t.shape(), data).unwrap()
        };
        let (f2, re2) = (scramble(&f, &ys, &mut r), scramble(&re, &yt, &mut r));
        let a = losses::cgan_d(&f, &ys, &re, &yt, m).map_err(|e| e.to_string())?;
        let b = losses::cgan_d(&f2, &ys, &re2, &yt, m).map_err(|e| e.to_string())?;
        ensure(a.value.to_bits() == b.value.to_bits(), || format!("cgan_d changed under masked edits ({m:?})"))?;
        ensure(bits(&a.grads[0]) == bits(&b.grads[0]) && bits(&a.grads[1]) == bits(&b.grads[1]), || {
            "cgan_d gradients changed under masked edits".into()
        })?;
        let ga = losses::cgan_g(&f, &ys, m).map_err(|e| e.to_string())?;
        let gb = losses::cgan_g(&f2, &ys, m).map_err(|e| e.to_string())?;
        ensure(ga.value.to_bits() == gb.value.to_bits(), || "cgan_g changed under masked edits".into())?;
        let masked_zero = ga.grads[0].data().iter().zip(ys.data()).all(|(&g, &y)| y != 0.0 || g == 0.0);
        ensure(masked_zero, || "cgan_g gradient non-zero at an unlabelled position".into())?;
    }
    Ok(())
}

/// The consistency objective yields a gradient for the student only, and
/// a teacher bound as constants receives nothing from the reverse sweep.
pub fn teacher_gradient_absent(seed: u64) -> Outcome {
    let rc = tiny_config(1);
    let teacher = Segmenter::new(rc.nets.segmenter.clone(), seed);
    let student = Segmenter::new(rc.nets.segmenter.clone(), seed + 1);
    let mut r = rng(seed);
    let x = uniform(&mut r, Dims { n: 2, k: 3, h: 16, w: 16 }, -1.0, 1.0).cast::<f32>();
    let mut g = Graph::<f32>::new();
    let mut b = Binder::frozen(&mut g, &teacher.params, "t.");
    b.add(&mut g, &student.params, "s.", |_| true);
    let xv = g.constant(x);
    let zt = teacher.build(&mut g, &b, "t.", xv).map_err(|e| e.to_string())?;
    let zs = student.build(&mut g, &b, "s.", xv).map_err(|e| e.to_string())?;
    let l = losses::consistency_loss(g.value(zt), g.value(zs)).map_err(|e| e.to_string())?;
    ensure(l.grads.len() == 1, || format!("consistency loss returned {} gradients", l.grads.len()))?;
    ensure(!g.requires_grad(zt), || "teacher output requires a gradient".into())?;
    let grads = g.backward(&[(zs, l.grads[0].clone())]);
    for name in teacher.params.names() {
        let v = b.var(&format!("t.{name}"));
        ensure(grads.get(v).is_none(), || format!("teacher parameter {name} received a gradient"))?;
    }
    let student_grads = b.grads(&g, &grads, "s.");
    ensure(student_grads.sum_sq() > 0.0, || "student received no gradient".into())?;
    ensure(b.grads(&g, &grads, "t.").is_empty(), || "teacher parameters are trainable".into())
}

/// A short I2I run leaves the discriminator trunk bitwise equal to the
/// segmentation trunk it was built from.
pub fn d_trunk_frozen(steps: usize) -> Outcome {
    let mut rc = tiny_config(steps);
    rc.i2i.pseudo_labels = uda_i2i::config::PseudoLabelSource::Online;
    let size = rc.data.size;
    let src = scenes(&DomainSpec::source(), Domain::Source, 0..6, size);
    let tgt = scenes(&DomainSpec::target(), Domain::Target, 100..106, size);
    let trunk = Segmenter::new(rc.nets.segmenter.clone(), 11);
    let before = trunk.params.filtered(|n| n.starts_with(TRUNK));
    let out = run_i2i(&rc, &src, &tgt, &trunk, None, 3, None).map_err(|e| e.to_string())?;
    let same = |a: &NetParams, b: &NetParams| {
        a.len() == b.len()
            && a.iter().zip(b.iter()).all(|((na, ta), (nb, tb))| {
                na == nb && ta.data().iter().zip(tb.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    };
    ensure(same(&out.discriminator.trunk, &before), || "discriminator trunk changed during I2I".into())?;
    ensure(same(&trunk.params.filtered(|n| n.starts_with(TRUNK)), &before), || "segmenter trunk changed".into())?;
    ensure(!same(&out.generator.params, &initial_generator(&rc, 3).params), || "generator never updated".into())
}

/// `ema_update` is the exact affine blend, with the two degenerate decays
/// returning one side unchanged.
pub fn ema_blend(instances: usize, seed: u64) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..instances {
        let mut t = NetParams::new();
        let mut s = NetParams::new();
        for j in 0..r.gen_range(1..4) {
            let len = r.gen_range(1..20);
            let draw = |r: &mut rand_chacha::ChaCha8Rng| (0..len).map(|_| r.gen_range(-2.0f32..2.0)).collect::<Vec<_>>();
            t.insert(format!("p{j}"), Tensor::from_vec(&[len], draw(&mut r)).unwrap());
            s.insert(format!("p{j}"), Tensor::from_vec(&[len], draw(&mut r)).unwrap());
        }
        let decay: f64 = r.gen_range(0.0..1.0);
        let out = ema_update(&t, &s, decay).map_err(|e| e.to_string())?;
        for ((name, o), (tt, ss)) in out.iter().zip(t.iter().map(|(_, a)| a).zip(s.iter().map(|(_, b)| b))) {
            for i in 0..o.len() {
                let want = decay * tt.data()[i] as f64 + (1.0 - decay) * ss.data()[i] as f64;
                ensure((o.data()[i] as f64 - want).abs() <= 1e-6 * (1.0 + want.abs()), || {
                    format!("blend of {name}[{i}] is {}, expected {want}", o.data()[i])
                })?;
            }
        }
        ensure(ema_update(&t, &s, 1.0).map_err(|e| e.to_string())? == t, || "decay 1 moved the teacher".into())?;
        ensure(ema_update(&t, &s, 0.0).map_err(|e| e.to_string())? == s, || "decay 0 did not copy the student".into())?;
    }
    Ok(())
}

/// Fade endpoints, midpoint linearity, monotonicity and slope bound.
pub fn fade_schedule() -> Outcome {
    let hyper = Hyper::default();
    for (start, end) in [(20_000, 100_000), (hyper.fade_start, hyper.fade_end), (30, 150)] {
        let s = Schedule {
            fade_start: start,
            fade_end: end,
            lambda_max: hyper.lambda_max,
            con_warmup_steps: 0,
        };
        ensure(lambda_fade(start, &s) == 0.0, || format!("fade at start {start} is not 0"))?;
        ensure((lambda_fade(end, &s) - 0.3).abs() < 1e-12, || format!("fade at end {end} is not 0.3"))?;
        let mid = lambda_fade((start + end) / 2, &s);
        ensure((mid - 0.15).abs() < 1e-12, || format!("fade midpoint is {mid}"))?;
        let slope = s.lambda_max / (end - start) as f64;
        let mut prev = 0.0;
        for step in (0..end + 50).step_by(((end - start) / 40).max(1)) {
            let v = lambda_fade(step, &s);
            ensure(v >= prev && (0.0..=s.lambda_max).contains(&v), || format!("fade not monotone at {step}"))?;
            let next = lambda_fade(step + 1, &s);
            ensure(next - v <= slope + 1e-12, || format!("fade slope exceeded at {step}"))?;
            prev = v;
        }
    }
    Ok(())
}
