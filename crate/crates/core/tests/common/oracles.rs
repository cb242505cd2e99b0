//! Naive per-index reference implementations of every loss, compared with
//! the library on random instances.

use rand_chacha::ChaCha8Rng;
use uda_autograd::Tensor;
use uda_i2i::losses::{self, GanMetric, SymCe};

use super::{max_rel_err, onehot, rel_err, rng, soft_labels, uniform, Check, Dims};

fn lse(z: &[f64], d: Dims, n: usize, y: usize, x: usize) -> f64 {
    let m = (0..d.k).map(|c| z[d.at(n, c, y, x)]).fold(f64::NEG_INFINITY, f64::max);
    m + (0..d.k).map(|c| (z[d.at(n, c, y, x)] - m).exp()).sum::<f64>().ln()
}

fn px(d: Dims) -> f64 {
    (d.n * d.h * d.w) as f64
}

fn naive_softmax(z: &[f64], d: Dims) -> Vec<f64> {
    let mut out = vec![0.0; d.len()];
    for (n, y, x) in d.pixels() {
        let l = lse(z, d, n, y, x);
        for c in 0..d.k {
            out[d.at(n, c, y, x)] = (z[d.at(n, c, y, x)] - l).exp();
        }
    }
    out
}

/// Mean over pixels of `Σ_c y_c (lse − z_c)` and its gradient.
fn naive_ce(z: &[f64], lab: &[f64], d: Dims) -> (f64, Vec<f64>) {
    let q = naive_softmax(z, d);
    let mut total = 0.0;
    let mut g = vec![0.0; d.len()];
    for (n, y, x) in d.pixels() {
        let l = lse(z, d, n, y, x);
        let mass: f64 = (0..d.k).map(|c| lab[d.at(n, c, y, x)]).sum();
        for c in 0..d.k {
            let i = d.at(n, c, y, x);
            total += lab[i] * (l - z[i]);
            g[i] = (q[i] * mass - lab[i]) / px(d);
        }
    }
    (total / px(d), g)
}

fn naive_rce(z: &[f64], lab: &[f64], d: Dims, clamp: f64) -> f64 {
    let q = naive_softmax(z, d);
    let mut total = 0.0;
    for (n, y, x) in d.pixels() {
        for c in 0..d.k {
            let i = d.at(n, c, y, x);
            let log_y = if lab[i] > 0.0 { lab[i].ln() } else { f64::NEG_INFINITY };
            total -= q[i] * log_y.max(clamp);
        }
    }
    total / px(d)
}

fn sigma(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn metric(m: GanMetric, a: f64, t: f64) -> f64 {
    match m {
        GanMetric::LeastSquares => (a - t).powi(2),
        GanMetric::Standard => -(t * sigma(a).ln() + (1.0 - t) * (1.0 - sigma(a)).ln()),
    }
}

fn metric_deriv(m: GanMetric, a: f64, t: f64) -> f64 {
    match m {
        GanMetric::LeastSquares => 2.0 * (a - t),
        GanMetric::Standard => sigma(a) - t,
    }
}

fn v(t: &Tensor<f64>) -> &[f64] {
    t.data()
}

const METRICS: [GanMetric; 2] = [GanMetric::LeastSquares, GanMetric::Standard];

fn softmax_check(r: &mut ChaCha8Rng, instances: usize) -> Check {
    let mut c = Check::new("softmax");
    for _ in 0..instances {
        let d = Dims::random(r, 2, 6, 5);
        let z = uniform(r, d, -4.0, 4.0);
        c.record(max_rel_err(v(&losses::softmax(&z)), &naive_softmax(v(&z), d)));
        c.done();
    }
    c
}

fn seg_ce_check(r: &mut ChaCha8Rng, instances: usize) -> Check {
    let mut c = Check::new("seg_ce");
    for i in 0..instances {
        let d = Dims::random(r, 2, 6, 5);
        let z = uniform(r, d, -4.0, 4.0);
        let y = if i % 2 == 0 { onehot(r, d, 0.0) } else { soft_labels(r, d) };
        let l = losses::seg_ce(&z, &y).unwrap();
        let (val, g) = naive_ce(v(&z), v(&y), d);
        c.record(rel_err(l.value, val));
        c.record(max_rel_err(v(&l.grads[0]), &g));
        c.done();
    }
    c
}

fn sym_ce_check(r: &mut ChaCha8Rng, instances: usize) -> Check {
    let mut c = Check::new("sym_ce");
    for i in 0..instances {
        let d = Dims::random(r, 2, 6, 5);
        let z = uniform(r, d, -4.0, 4.0);
        let y = if i % 2 == 0 { onehot(r, d, 0.0) } else { soft_labels(r, d) };
        let s = SymCe {
            alpha: rand::Rng::gen_range(r, 0.1..2.0),
            beta: rand::Rng::gen_range(r, 0.1..2.0),
            log_clamp: -4.0,
        };
        let l = losses::sym_ce(&z, &y, s).unwrap();
        let want = s.alpha * naive_ce(v(&z), v(&y), d).0 + s.beta * naive_rce(v(&z), v(&y), d, s.log_clamp);
        c.record(rel_err(l.value, want));
        c.done();
    }
    c
}

fn total_seg_d_check(r: &mut ChaCha8Rng, instances: usize) -> Check {
    let mut c = Check::new("total_seg_loss_d");
    for _ in 0..instances {
        let d = Dims::random(r, 2, 6, 5);
        let (zf, zr) = (uniform(r, d, -3.0, 3.0), uniform(r, d, -3.0, 3.0));
        let (ys, yt) = (onehot(r, d, 0.0), onehot(r, d, 0.0));
        let lambda = rand::Rng::gen_range(r, 0.0..1.0);
        let s = SymCe::default();
        let l = losses::total_seg_loss_d(&zf, &ys, &zr, &yt, lambda, s).unwrap();
        let rev = naive_ce(v(&zr), v(&yt), d).0 + naive_rce(v(&zr), v(&yt), d, s.log_clamp);
        c.record(rel_err(l.value, naive_ce(v(&zf), v(&ys), d).0 + lambda * rev));
        c.record(max_rel_err(v(&l.grads[0]), &naive_ce(v(&zf), v(&ys), d).1));
        c.done();
    }
    c
}

fn dgan_check(r: &mut ChaCha8Rng, instances: usize) -> Vec<Check> {
    let (mut cd, mut cg, mut cdm, mut cgm) = (
        Check::new("dgan_d"),
        Check::new("dgan_g"),
        Check::new("dgan_d_map"),
        Check::new("dgan_g_map"),
    );
    for i in 0..instances {
        let m = METRICS[i % 2];
        let d = Dims::random(r, 3, 2, 5).with_k(1);
        let (f, re) = (uniform(r, d, -3.0, 3.0), uniform(r, d, -3.0, 3.0));
        let (fv, rv) = (v(&f), v(&re));
        let map_d: Vec<f64> = (0..d.len()).map(|i| metric(m, fv[i], 0.0) + metric(m, rv[i], 1.0)).collect();
        let map_g: Vec<f64> = (0..d.len()).map(|i| metric(m, fv[i], 1.0)).collect();
        let ld = losses::dgan_d(&f, &re, m).unwrap();
        cd.record(rel_err(ld.value, map_d.iter().sum::<f64>() / px(d)));
        let gf: Vec<f64> = fv.iter().map(|&a| metric_deriv(m, a, 0.0) / px(d)).collect();
        let gr: Vec<f64> = rv.iter().map(|&a| metric_deriv(m, a, 1.0) / px(d)).collect();
        cd.record(max_rel_err(v(&ld.grads[0]), &gf));
        cd.record(max_rel_err(v(&ld.grads[1]), &gr));
        let lg = losses::dgan_g(&f, m).unwrap();
        cg.record(rel_err(lg.value, map_g.iter().sum::<f64>() / px(d)));
        let gg: Vec<f64> = fv.iter().map(|&a| metric_deriv(m, a, 1.0) / px(d)).collect();
        cg.record(max_rel_err(v(&lg.grads[0]), &gg));
        cdm.record(max_rel_err(v(&losses::dgan_d_map(&f, &re, m).unwrap()), &map_d));
        cgm.record(max_rel_err(v(&losses::dgan_g_map(&f, m)), &map_g));
        for c in [&mut cd, &mut cg, &mut cdm, &mut cgm] {
            c.done();
        }
    }
    vec![cd, cg, cdm, cgm]
}

fn cgan_check(r: &mut ChaCha8Rng, instances: usize) -> Vec<Check> {
    let (mut cd, mut cg, mut cdm, mut cgm) = (
        Check::new("cgan_d"),
        Check::new("cgan_g"),
        Check::new("cgan_d_map"),
        Check::new("cgan_g_map"),
    );
    for i in 0..instances {
        let m = METRICS[i % 2];
        let d = Dims::random(r, 2, 6, 5);
        let (f, re) = (uniform(r, d, -3.0, 3.0), uniform(r, d, -3.0, 3.0));
        let (ys, yt) = (onehot(r, d, 0.2), onehot(r, d, 0.3));
        let (fv, rv, ysv, ytv) = (v(&f), v(&re), v(&ys), v(&yt));
        let mut map_d = vec![0.0; d.len()];
        let mut map_g = vec![0.0; d.len()];
        let mut gf = vec![0.0; d.len()];
        let mut gr = vec![0.0; d.len()];
        let mut gg = vec![0.0; d.len()];
        for (n, y, x) in d.pixels() {
            for c in 0..d.k {
                let j = d.at(n, c, y, x);
                map_d[j] = ysv[j] * metric(m, fv[j], 0.0) + ytv[j] * metric(m, rv[j], 1.0);
                map_g[j] = ysv[j] * metric(m, fv[j], 1.0);
                gf[j] = ysv[j] * metric_deriv(m, fv[j], 0.0) / px(d);
                gr[j] = ytv[j] * metric_deriv(m, rv[j], 1.0) / px(d);
                gg[j] = ysv[j] * metric_deriv(m, fv[j], 1.0) / px(d);
            }
        }
        let ld = losses::cgan_d(&f, &ys, &re, &yt, m).unwrap();
        cd.record(rel_err(ld.value, map_d.iter().sum::<f64>() / px(d)));
        cd.record(max_rel_err(v(&ld.grads[0]), &gf));
        cd.record(max_rel_err(v(&ld.grads[1]), &gr));
        let lg = losses::cgan_g(&f, &ys, m).unwrap();
        cg.record(rel_err(lg.value, map_g.iter().sum::<f64>() / px(d)));
        cg.record(max_rel_err(v(&lg.grads[0]), &gg));
        cdm.record(max_rel_err(v(&losses::cgan_d_map(&f, &ys, &re, &yt, m).unwrap()), &map_d));
        cgm.record(max_rel_err(v(&losses::cgan_g_map(&f, &ys, m).unwrap()), &map_g));
        for c in [&mut cd, &mut cg, &mut cdm, &mut cgm] {
            c.done();
        }
    }
    vec![cd, cg, cdm, cgm]
}

/// Summed-form totals against their scalar counterparts on single images.
fn totals_check(r: &mut ChaCha8Rng, instances: usize) -> Vec<Check> {
    let (mut gt, mut dt, mut gnt) = (Check::new("gan_total"), Check::new("disc_total"), Check::new("gen_total"));
    for i in 0..instances {
        let m = METRICS[i % 2];
        let d = Dims {
            n: 1,
            ..Dims::random(r, 1, 6, 5)
        };
        let d1 = d.with_k(1);
        let (df, dr) = (uniform(r, d1, -3.0, 3.0), uniform(r, d1, -3.0, 3.0));
        let (cf, cr) = (uniform(r, d, -3.0, 3.0), uniform(r, d, -3.0, 3.0));
        let (ys, yt) = (onehot(r, d, 0.1), onehot(r, d, 0.1));
        let (zs, x, gx) = (uniform(r, d, -3.0, 3.0), uniform(r, d, -1.0, 1.0), uniform(r, d, -1.0, 1.0));
        let lambda = rand::Rng::gen_range(r, 0.0..1.0);
        let hw = (d.h * d.w) as f64;

        let dmap = losses::dgan_d_map(&df, &dr, m).unwrap();
        let cmap = losses::cgan_d_map(&cf, &ys, &cr, &yt, m).unwrap();
        let naive_gan: f64 = v(&dmap).iter().sum::<f64>() + lambda / d.k as f64 * v(&cmap).iter().sum::<f64>();
        let gan = losses::gan_total(&dmap, &cmap, lambda, d.k).unwrap();
        gt.record(rel_err(gan, naive_gan));

        let seg = naive_ce(v(&zs), v(&ys), d).0;
        let want_d = seg + losses::dgan_d(&df, &dr, m).unwrap().value
            + lambda / d.k as f64 * losses::cgan_d(&cf, &ys, &cr, &yt, m).unwrap().value;
        dt.record(rel_err(losses::disc_total(seg * hw, gan, d.h, d.w), want_d));

        let gmap = losses::dgan_g_map(&df, m);
        let cgmap = losses::cgan_g_map(&cf, &ys, m).unwrap();
        let ggan = losses::gan_total(&gmap, &cgmap, lambda, d.k).unwrap();
        let id_sum: f64 = v(&gx).iter().zip(v(&x)).map(|(a, b)| (a - b).abs()).sum();
        let want_g = seg + losses::dgan_g(&df, m).unwrap().value
            + lambda / d.k as f64 * losses::cgan_g(&cf, &ys, m).unwrap().value
            + losses::identity_loss(&gx, &x).unwrap().value;
        gnt.record(rel_err(losses::gen_total(seg * hw, ggan, id_sum, d.h, d.w), want_g));
        for c in [&mut gt, &mut dt, &mut gnt] {
            c.done();
        }
    }
    vec![gt, dt, gnt]
}

fn identity_check(r: &mut ChaCha8Rng, instances: usize) -> Vec<Check> {
    let (mut c, mut cs) = (Check::new("identity_loss"), Check::new("identity_loss_sum"));
    for _ in 0..instances {
        let d = Dims::random(r, 2, 3, 6).with_k(3);
        let (gx, x) = (uniform(r, d, -1.0, 1.0), uniform(r, d, -1.0, 1.0));
        let mut sum = 0.0;
        let mut g = vec![0.0; d.len()];
        for (n, y, xx) in d.pixels() {
            for ch in 0..3 {
                let i = d.at(n, ch, y, xx);
                let diff = v(&gx)[i] - v(&x)[i];
                sum += diff.abs();
                g[i] = diff.signum() / px(d);
            }
        }
        let l = losses::identity_loss(&gx, &x).unwrap();
        c.record(rel_err(l.value, sum / px(d)));
        c.record(max_rel_err(v(&l.grads[0]), &g));
        cs.record(rel_err(losses::identity_loss_sum(&gx, &x).unwrap(), sum));
        c.done();
        cs.done();
    }
    vec![c, cs]
}

fn consistency_check(r: &mut ChaCha8Rng, instances: usize) -> Vec<Check> {
    let (mut c, mut st) = (Check::new("consistency_loss"), Check::new("student_total"));
    for _ in 0..instances {
        let d = Dims::random(r, 2, 6, 5);
        let (t, s) = (uniform(r, d, -3.0, 3.0), uniform(r, d, -3.0, 3.0));
        let (qt, qs) = (naive_softmax(v(&t), d), naive_softmax(v(&s), d));
        let want = qt.iter().zip(&qs).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / px(d);
        let l = losses::consistency_loss(&t, &s).unwrap();
        c.record(rel_err(l.value, want));
        let (sup, lambda) = (rand::Rng::gen_range(r, 0.0..3.0), rand::Rng::gen_range(r, 0.0..2.0));
        st.record(rel_err(losses::student_total(sup, l.value, lambda), sup + lambda * want));
        c.done();
        st.done();
    }
    vec![c, st]
}

fn sup_combined_check(r: &mut ChaCha8Rng, instances: usize) -> Check {
    let mut c = Check::new("sup_combined");
    for _ in 0..instances {
        let d = Dims::random(r, 2, 6, 5);
        let (a, b, y) = (uniform(r, d, -3.0, 3.0), uniform(r, d, -3.0, 3.0), onehot(r, d, 0.0));
        let l = losses::sup_combined(&a, &b, &y).unwrap();
        let (va, ga) = naive_ce(v(&a), v(&y), d);
        let (vb, gb) = naive_ce(v(&b), v(&y), d);
        c.record(rel_err(l.value, va + vb));
        c.record(max_rel_err(v(&l.grads[0]), &ga));
        c.record(max_rel_err(v(&l.grads[1]), &gb));
        c.done();
    }
    c
}

/// Every loss-module operation on `instances` random inputs each.
pub fn run_all(instances: usize, seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    let mut out = vec![
        softmax_check(&mut r, instances),
        seg_ce_check(&mut r, instances),
        sym_ce_check(&mut r, instances),
        total_seg_d_check(&mut r, instances),
        sup_combined_check(&mut r, instances),
    ];
    out.extend(dgan_check(&mut r, instances));
    out.extend(cgan_check(&mut r, instances));
    out.extend(totals_check(&mut r, instances));
    out.extend(identity_check(&mut r, instances));
    out.extend(consistency_check(&mut r, instances));
    out
}
