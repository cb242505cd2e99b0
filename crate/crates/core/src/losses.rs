//! Training objectives as pure functions of network outputs.
//!
//! Score tensors are `N×K×H×W` (or `N×1×H×W` for the domain map), labels
//! are one-hot tensors of the same shape. Every scalar loss is a mean over
//! the `N·H·W` pixels of its own branch and comes with its analytic
//! gradient, which the trainer feeds into the reverse sweep. The map-level
//! functions (`*_map`, [`gan_total`], [`disc_total`], [`gen_total`]) follow
//! the sum-over-pixels-then-divide-by-HW form and exist for composition
//! checks against the scalar versions.

use serde::{Deserialize, Serialize};
use uda_autograd::{Float, Tensor};

use crate::error::{Error, Result};

/// Value and gradients of a scalar loss, one gradient per differentiable
/// input in argument order.
#[derive(Clone, Debug)]
pub struct Loss<F> {
    pub value: f64,
    pub grads: Vec<Tensor<F>>,
}

/// Real/fake targets of the adversarial terms.
pub const REAL: f64 = 1.0;
pub const FAKE: f64 = 0.0;

/// Distance between a discriminator output and its target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanMetric {
    /// `(a - t)²`
    #[default]
    LeastSquares,
    /// Binary cross-entropy of `sigmoid(a)` against `t`.
    Standard,
}

impl GanMetric {
    pub fn value(self, a: f64, t: f64) -> f64 {
        match self {
            GanMetric::LeastSquares => (a - t) * (a - t),
            GanMetric::Standard => softplus(a) - a * t,
        }
    }

    pub fn deriv(self, a: f64, t: f64) -> f64 {
        match self {
            GanMetric::LeastSquares => 2.0 * (a - t),
            GanMetric::Standard => sigmoid(a) - t,
        }
    }
}

fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Symmetric cross-entropy weights. `log_clamp` replaces `log 0` of the
/// label distribution in the reverse term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymCe {
    pub alpha: f64,
    pub beta: f64,
    pub log_clamp: f64,
}

impl Default for SymCe {
    fn default() -> Self {
        SymCe {
            alpha: 1.0,
            beta: 1.0,
            log_clamp: -4.0,
        }
    }
}

fn check<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Result<()> {
    if a.shape() != b.shape() || a.shape().len() != 4 {
        return Err(Error::Shape(format!("loss inputs {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Softmax over the channel axis, computed in f64.
fn softmax_at<F: Float>(t: &Tensor<F>, n: usize, p: usize, out: &mut [f64]) {
    let (_, k, h, w) = t.dims4();
    let hw = h * w;
    let base = n * k * hw + p;
    let mut max = f64::NEG_INFINITY;
    for (c, o) in out.iter_mut().enumerate() {
        *o = t.data()[base + c * hw].to_f64_lossy();
        max = max.max(*o);
    }
    let mut z = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

/// Channel softmax of a score tensor.
pub fn softmax<F: Float>(t: &Tensor<F>) -> Tensor<F> {
    let (n, k, h, w) = t.dims4();
    let hw = h * w;
    let mut out = Tensor::zeros(t.shape());
    let mut q = vec![0.0; k];
    for ni in 0..n {
        for p in 0..hw {
            softmax_at(t, ni, p, &mut q);
            for c in 0..k {
                out.data_mut()[(ni * k + c) * hw + p] = F::c(q[c]);
            }
        }
    }
    out
}

/// Visits every pixel with its softmax and label vector, accumulating a
/// per-pixel loss and writing per-logit gradients.
fn per_pixel<F: Float>(
    logits: &Tensor<F>,
    y: &Tensor<F>,
    mut f: impl FnMut(&[f64], &[f64], &mut [f64]) -> f64,
) -> Result<Loss<F>> {
    check(logits, y)?;
    let (n, k, h, w) = logits.dims4();
    let hw = h * w;
    let pixels = (n * hw) as f64;
    let mut grad = Tensor::zeros(logits.shape());
    let mut q = vec![0.0; k];
    let mut lab = vec![0.0; k];
    let mut g = vec![0.0; k];
    let mut total = 0.0;
    for ni in 0..n {
        for p in 0..hw {
            softmax_at(logits, ni, p, &mut q);
            for c in 0..k {
                lab[c] = y.data()[(ni * k + c) * hw + p].to_f64_lossy();
            }
            total += f(&q, &lab, &mut g);
            for c in 0..k {
                grad.data_mut()[(ni * k + c) * hw + p] = F::c(g[c] / pixels);
            }
        }
    }
    Ok(Loss {
        value: total / pixels,
        grads: vec![grad],
    })
}

/// Softmax cross-entropy, mean over pixels.
pub fn seg_ce<F: Float>(logits: &Tensor<F>, y: &Tensor<F>) -> Result<Loss<F>> {
    per_pixel(logits, y, |q, lab, g| {
        let mut l = 0.0;
        let mass: f64 = lab.iter().sum();
        for c in 0..q.len() {
            if lab[c] != 0.0 {
                l -= lab[c] * q[c].max(f64::MIN_POSITIVE).ln();
            }
            g[c] = q[c] * mass - lab[c];
        }
        l
    })
}

/// `alpha·CE + beta·RCE`, where the reverse term is `-Σ_c q_c·max(log y_c, log_clamp)`.
pub fn sym_ce<F: Float>(logits: &Tensor<F>, y: &Tensor<F>, s: SymCe) -> Result<Loss<F>> {
    let k = logits.shape().get(1).copied().unwrap_or(0);
    let mut ell = vec![0.0; k];
    per_pixel(logits, y, |q, lab, g| {
        let mass: f64 = lab.iter().sum();
        let mut ce = 0.0;
        for c in 0..k {
            if lab[c] != 0.0 {
                ce -= lab[c] * q[c].max(f64::MIN_POSITIVE).ln();
            }
            ell[c] = if lab[c] > 0.0 { lab[c].ln().max(s.log_clamp) } else { s.log_clamp };
        }
        let qell: f64 = (0..k).map(|c| q[c] * ell[c]).sum();
        for c in 0..k {
            g[c] = s.alpha * (q[c] * mass - lab[c]) - s.beta * q[c] * (ell[c] - qell);
        }
        s.alpha * ce - s.beta * qell
    })
}

/// Segmentation objective of the auxiliary classifier: CE on translated
/// source images plus `lambda_pl` times symmetric CE on target images
/// against pseudo-labels. Gradients: `[d/d ac_fake, d/d ac_real]`.
pub fn total_seg_loss_d<F: Float>(
    ac_fake: &Tensor<F>,
    y_s: &Tensor<F>,
    ac_real: &Tensor<F>,
    y_hat_t: &Tensor<F>,
    lambda_pl: f64,
    s: SymCe,
) -> Result<Loss<F>> {
    let a = seg_ce(ac_fake, y_s)?;
    let b = sym_ce(ac_real, y_hat_t, s)?;
    let mut gb = b.grads.into_iter().next().expect("grad");
    gb.scale_inplace(F::c(lambda_pl));
    Ok(Loss {
        value: a.value + lambda_pl * b.value,
        grads: vec![a.grads.into_iter().next().expect("grad"), gb],
    })
}

fn map_with<F: Float>(a: &Tensor<F>, f: impl Fn(f64) -> f64) -> Tensor<F> {
    a.map(|v| F::c(f(v.to_f64_lossy())))
}

/// Per-pixel discriminator domain loss `m(fake, 0) + m(real, 1)`.
pub fn dgan_d_map<F: Float>(fake: &Tensor<F>, real: &Tensor<F>, m: GanMetric) -> Result<Tensor<F>> {
    check(fake, real)?;
    Ok(fake.zip_map(real, |f, r| F::c(m.value(f.to_f64_lossy(), FAKE) + m.value(r.to_f64_lossy(), REAL)))?)
}

/// Per-pixel generator domain loss `m(fake, 1)`.
pub fn dgan_g_map<F: Float>(fake: &Tensor<F>, m: GanMetric) -> Tensor<F> {
    map_with(fake, |f| m.value(f, REAL))
}

/// Per-(pixel, class) discriminator class-wise loss
/// `m(fake, 0)·y_s + m(real, 1)·ŷ_t`. Unlabelled positions contribute 0.
pub fn cgan_d_map<F: Float>(
    fake: &Tensor<F>,
    y_s: &Tensor<F>,
    real: &Tensor<F>,
    y_hat_t: &Tensor<F>,
    m: GanMetric,
) -> Result<Tensor<F>> {
    check(fake, y_s)?;
    check(real, y_hat_t)?;
    check(fake, real)?;
    let data = (0..fake.len())
        .map(|i| {
            let ys = y_s.data()[i].to_f64_lossy();
            let yt = y_hat_t.data()[i].to_f64_lossy();
            let a = if ys != 0.0 { m.value(fake.data()[i].to_f64_lossy(), FAKE) * ys } else { 0.0 };
            let b = if yt != 0.0 { m.value(real.data()[i].to_f64_lossy(), REAL) * yt } else { 0.0 };
            F::c(a + b)
        })
        .collect();
    Ok(Tensor::from_vec(fake.shape(), data)?)
}

/// Per-(pixel, class) generator class-wise loss `m(fake, 1)·y_s`.
pub fn cgan_g_map<F: Float>(fake: &Tensor<F>, y_s: &Tensor<F>, m: GanMetric) -> Result<Tensor<F>> {
    check(fake, y_s)?;
    Ok(fake.zip_map(y_s, |f, y| {
        let y = y.to_f64_lossy();
        F::c(if y != 0.0 { m.value(f.to_f64_lossy(), REAL) * y } else { 0.0 })
    })?)
}

/// Full adversarial loss in summed form:
/// `Σ_pixels (dgan + lambda_cgan/k · Σ_c cgan)`.
pub fn gan_total<F: Float>(dgan: &Tensor<F>, cgan: &Tensor<F>, lambda_cgan: f64, k: usize) -> Result<f64> {
    let (n, _, h, w) = dgan.dims4();
    if dgan.shape().len() != 4 || cgan.shape() != [n, k, h, w] {
        return Err(Error::Shape(format!("gan maps {:?} vs {:?}", dgan.shape(), cgan.shape())));
    }
    let d: f64 = dgan.data().iter().map(|v| v.to_f64_lossy()).sum();
    let c: f64 = cgan.data().iter().map(|v| v.to_f64_lossy()).sum();
    Ok(d + lambda_cgan / k as f64 * c)
}

/// Discriminator total from summed segmentation and adversarial terms.
pub fn disc_total(seg_sum: f64, gan_sum: f64, h: usize, w: usize) -> f64 {
    (seg_sum + gan_sum) / (h * w) as f64
}

/// Generator total from summed segmentation, adversarial and identity terms.
pub fn gen_total(seg_sum: f64, gan_sum: f64, id_sum: f64, h: usize, w: usize) -> f64 {
    (seg_sum + gan_sum + id_sum) / (h * w) as f64
}

/// Mean over pixels of the domain term for the discriminator.
/// Gradients: `[d/d fake, d/d real]`.
pub fn dgan_d<F: Float>(fake: &Tensor<F>, real: &Tensor<F>, m: GanMetric) -> Result<Loss<F>> {
    check(fake, real)?;
    let (n, c, h, w) = fake.dims4();
    let px = (n * h * w) as f64;
    if c != 1 {
        return Err(Error::Shape(format!("domain map needs one channel, got {c}")));
    }
    let value = dgan_d_map(fake, real, m)?.data().iter().map(|v| v.to_f64_lossy()).sum::<f64>() / px;
    Ok(Loss {
        value,
        grads: vec![
            map_with(fake, |f| m.deriv(f, FAKE) / px),
            map_with(real, |r| m.deriv(r, REAL) / px),
        ],
    })
}

/// Mean over pixels of the domain term for the generator.
pub fn dgan_g<F: Float>(fake: &Tensor<F>, m: GanMetric) -> Result<Loss<F>> {
    let (n, c, h, w) = fake.dims4();
    if fake.shape().len() != 4 || c != 1 {
        return Err(Error::Shape(format!("domain map shape {:?}", fake.shape())));
    }
    let px = (n * h * w) as f64;
    let value = dgan_g_map(fake, m).data().iter().map(|v| v.to_f64_lossy()).sum::<f64>() / px;
    Ok(Loss {
        value,
        grads: vec![map_with(fake, |f| m.deriv(f, REAL) / px)],
    })
}

fn masked_grad<F: Float>(a: &Tensor<F>, y: &Tensor<F>, target: f64, m: GanMetric, px: f64) -> Tensor<F> {
    a.zip_map(y, |v, l| {
        let l = l.to_f64_lossy();
        F::c(if l != 0.0 { m.deriv(v.to_f64_lossy(), target) * l / px } else { 0.0 })
    })
    .expect("shapes checked")
}

/// Class-wise discriminator term, summed over classes and averaged over
/// pixels (not yet weighted by `lambda_cgan/k`).
/// Gradients: `[d/d fake, d/d real]`.
pub fn cgan_d<F: Float>(
    fake: &Tensor<F>,
    y_s: &Tensor<F>,
    real: &Tensor<F>,
    y_hat_t: &Tensor<F>,
    m: GanMetric,
) -> Result<Loss<F>> {
    let map = cgan_d_map(fake, y_s, real, y_hat_t, m)?;
    let (n, _, h, w) = fake.dims4();
    let px = (n * h * w) as f64;
    Ok(Loss {
        value: map.data().iter().map(|v| v.to_f64_lossy()).sum::<f64>() / px,
        grads: vec![masked_grad(fake, y_s, FAKE, m, px), masked_grad(real, y_hat_t, REAL, m, px)],
    })
}

/// Class-wise generator term, summed over classes and averaged over pixels.
pub fn cgan_g<F: Float>(fake: &Tensor<F>, y_s: &Tensor<F>, m: GanMetric) -> Result<Loss<F>> {
    let map = cgan_g_map(fake, y_s, m)?;
    let (n, _, h, w) = fake.dims4();
    let px = (n * h * w) as f64;
    Ok(Loss {
        value: map.data().iter().map(|v| v.to_f64_lossy()).sum::<f64>() / px,
        grads: vec![masked_grad(fake, y_s, REAL, m, px)],
    })
}

/// Per-pixel L1 over channels, summed over pixels.
pub fn identity_loss_sum<F: Float>(gx: &Tensor<F>, x: &Tensor<F>) -> Result<f64> {
    check(gx, x)?;
    Ok(gx.data().iter().zip(x.data()).map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).abs()).sum())
}

/// Identity reconstruction error, mean over pixels. Gradient w.r.t. `gx`.
pub fn identity_loss<F: Float>(gx: &Tensor<F>, x: &Tensor<F>) -> Result<Loss<F>> {
    let sum = identity_loss_sum(gx, x)?;
    let (n, _, h, w) = gx.dims4();
    let px = (n * h * w) as f64;
    let grad = gx.zip_map(x, |a, b| {
        let d = a.to_f64_lossy() - b.to_f64_lossy();
        F::c(if d > 0.0 {
            1.0 / px
        } else if d < 0.0 {
            -1.0 / px
        } else {
            0.0
        })
    })?;
    Ok(Loss {
        value: sum / px,
        grads: vec![grad],
    })
}

/// Squared distance between teacher and student class distributions,
/// summed over classes and averaged over pixels. The teacher is a constant:
/// the only gradient is w.r.t. the student logits.
pub fn consistency_loss<F: Float>(teacher: &Tensor<F>, student: &Tensor<F>) -> Result<Loss<F>> {
    check(teacher, student)?;
    let (n, k, h, w) = student.dims4();
    let hw = h * w;
    let px = (n * hw) as f64;
    let mut grad = Tensor::zeros(student.shape());
    let mut qt = vec![0.0; k];
    let mut qs = vec![0.0; k];
    let mut total = 0.0;
    for ni in 0..n {
        for p in 0..hw {
            softmax_at(teacher, ni, p, &mut qt);
            softmax_at(student, ni, p, &mut qs);
            let d: Vec<f64> = (0..k).map(|c| qs[c] - qt[c]).collect();
            total += d.iter().map(|v| v * v).sum::<f64>();
            let dq: f64 = (0..k).map(|c| d[c] * qs[c]).sum();
            for c in 0..k {
                grad.data_mut()[(ni * k + c) * hw + p] = F::c(2.0 * qs[c] * (d[c] - dq) / px);
            }
        }
    }
    Ok(Loss {
        value: total / px,
        grads: vec![grad],
    })
}

/// Student objective `sup + lambda_con·con`.
pub fn student_total(sup: f64, con: f64, lambda_con: f64) -> f64 {
    sup + lambda_con * con
}

/// Supervised term on a source batch and its translation, both against the
/// source labels. Gradients: `[d/d logits_src, d/d logits_trans]`.
pub fn sup_combined<F: Float>(logits_src: &Tensor<F>, logits_trans: &Tensor<F>, y_s: &Tensor<F>) -> Result<Loss<F>> {
    let a = seg_ce(logits_src, y_s)?;
    let b = seg_ce(logits_trans, y_s)?;
    Ok(Loss {
        value: a.value + b.value,
        grads: a.grads.into_iter().chain(b.grads).collect(),
    })
}
