use std::path::Path;

use rand::Rng;
use uda_autograd::{Graph, Tensor};

use super::batch::{Batcher, Split};
use super::pseudo::PseudoLabelSet;
use super::{check_report, clip_global_norm, ema_decay_at, ema_update, lambda_fade, Adam, MetricsWriter, Schedule};
use crate::config::{PseudoLabelSource, RunConfig};
use crate::data::{argmax_masks, onehot_batch, LossReport, NetParams, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::losses::{cgan_d, cgan_g, dgan_d, dgan_g, identity_loss, seg_ce, sym_ce};
use crate::nets::{save_params, Binder, Discriminator, Generator, Segmenter};

#[derive(Clone, Debug)]
pub struct I2iOutput {
    pub generator: Generator,
    /// EMA of the generator weights, used for translation.
    pub generator_ema: Generator,
    pub discriminator: Discriminator,
    pub reports: Vec<LossReport>,
}

fn first(grads: Vec<Tensor<f32>>) -> Tensor<f32> {
    grads.into_iter().next().expect("grad")
}

fn scaled(mut t: Tensor<f32>, s: f64) -> Tensor<f32> {
    t.scale_inplace(s as f32);
    t
}

/// The generator `run_i2i` starts from for a given seed.
pub fn initial_generator(rc: &RunConfig, seed: u64) -> Generator {
    Generator::new(rc.nets.generator.clone(), seed ^ 0x6e4_0001)
}

/// Adversarial translator training. Each iteration takes one discriminator
/// step (classifier head on translated source and pseudo-labelled target,
/// domain and class-wise real/fake maps), then one generator step on the
/// same batch (classifier consistency on its translations, adversarial
/// terms, identity reconstruction of target images). The discriminator's
/// trunk comes from `trunk` and stays frozen.
pub fn run_i2i(
    rc: &RunConfig,
    source: &Split,
    target: &Split,
    trunk: &Segmenter,
    pseudo: Option<&PseudoLabelSet>,
    seed: u64,
    out: Option<&Path>,
) -> Result<I2iOutput> {
    let cfg = &rc.i2i;
    cfg.validate()?;
    let k = NUM_CLASSES;
    let src_masks = source.masks()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::Prerequisite("I2I training needs source and target images".into()));
    }
    let pl_masks = match (cfg.pseudo_labels, pseudo) {
        (PseudoLabelSource::Precomputed, Some(p)) if p.masks.len() == target.len() => Some(&p.masks),
        (PseudoLabelSource::Precomputed, Some(_)) => {
            return Err(Error::Prerequisite("pseudo-label count does not match the target split".into()))
        }
        (PseudoLabelSource::Precomputed, None) => {
            return Err(Error::Prerequisite(
                "precomputed pseudo-labels need a warm-up teacher (run the warmup phase first)".into(),
            ))
        }
        (PseudoLabelSource::Online, _) => None,
    };
    let schedule = Schedule {
        fade_start: rc.hyper.fade_start,
        fade_end: rc.hyper.fade_end,
        lambda_max: rc.hyper.lambda_max,
        con_warmup_steps: 0,
    };

    let mut gen = initial_generator(rc, seed);
    let mut gen_ema = gen.clone();
    let mut disc = Discriminator::new(rc.nets.discriminator(), Some(trunk), seed ^ 0xd15c_0002)?;
    let mut opt_g = Adam::new(cfg.lr_g, 1.0, cfg.beta1);
    let mut opt_d = Adam::new(cfg.lr_d, 1.0, cfg.beta1);
    let mut batcher = Batcher::new(seed ^ 0xba7c_0003, rc.data.crop);
    let mut metrics = out.map(|d| MetricsWriter::create(&d.join("metrics.jsonl"))).transpose()?;
    let mut reports = Vec::with_capacity(cfg.steps);
    let metric = cfg.gan_metric;

    for step in 0..cfg.steps {
        let (lambda_pl, lambda_cgan) = match cfg.pseudo_labels {
            PseudoLabelSource::Precomputed => (rc.hyper.lambda_pl, rc.hyper.lambda_cgan),
            PseudoLabelSource::Online => {
                let frac = if schedule.lambda_max > 0.0 {
                    lambda_fade(step, &schedule) / schedule.lambda_max
                } else {
                    0.0
                };
                (rc.hyper.lambda_pl * frac, rc.hyper.lambda_cgan * frac)
            }
        };
        let lambda_cgan = if cfg.class_gan { lambda_cgan } else { 0.0 };
        let wc = lambda_cgan / k as f64;
        let g_seg_weight = if cfg.g_seg { 1.0 } else { 0.0 };

        let ps = batcher.draw(source, cfg.batch_size);
        let pt = batcher.draw(target, cfg.batch_size);
        let xs = batcher.images(source, &ps)?;
        let ys = batcher.onehot(src_masks, &ps, k)?;
        let xt = batcher.images(target, &pt)?;
        let noise_seed: u64 = batcher.rng().gen();
        let mut report = LossReport {
            step,
            phase: "i2i".into(),
            classes: k,
            lambda_pl,
            lambda_cgan,
            g_seg_weight,
            ..LossReport::default()
        };

        // Discriminator step on G's current translations (held fixed).
        let fake = gen.forward_batch(&xs, Some(noise_seed))?;
        let mut g = Graph::<f32>::new();
        let mut b = Binder::frozen(&mut g, &NetParams::<f32>::new(), "");
        disc.bind(&mut g, &mut b, "", true);
        let vf = g.constant(fake);
        let vr = g.constant(xt.clone());
        let of = disc.build(&mut g, &b, "", vf)?;
        let or = disc.build(&mut g, &b, "", vr)?;
        let yt = match pl_masks {
            Some(m) => batcher.onehot(m, &pt, k)?,
            None => {
                let masks = argmax_masks(g.value(or.ac_logits));
                onehot_batch(&masks.iter().collect::<Vec<_>>(), k)?
            }
        };
        let l_src = seg_ce(g.value(of.ac_logits), &ys)?;
        let l_pl = sym_ce(g.value(or.ac_logits), &yt, cfg.sym_ce)?;
        let l_dom = dgan_d(g.value(of.domain), g.value(or.domain), metric)?;
        let l_cls = cgan_d(g.value(of.class_maps), &ys, g.value(or.class_maps), &yt, metric)?;
        report.seg_src = l_src.value;
        report.seg_pl = l_pl.value;
        report.dgan_d = l_dom.value;
        report.cgan_d = l_cls.value;
        report.total_d = l_src.value + lambda_pl * l_pl.value + l_dom.value + wc * l_cls.value;
        let mut seeds = vec![(of.ac_logits, first(l_src.grads))];
        if lambda_pl > 0.0 {
            seeds.push((or.ac_logits, scaled(first(l_pl.grads), lambda_pl)));
        }
        let mut dom = l_dom.grads.into_iter();
        seeds.push((of.domain, dom.next().expect("grad")));
        seeds.push((or.domain, dom.next().expect("grad")));
        if wc > 0.0 {
            let mut cls = l_cls.grads.into_iter();
            seeds.push((of.class_maps, scaled(cls.next().expect("grad"), wc)));
            seeds.push((or.class_maps, scaled(cls.next().expect("grad"), wc)));
        }
        let grads = g.backward(&seeds);
        let gd = clip_global_norm(&b.grads(&g, &grads, ""), rc.hyper.clip_norm, step)?;
        opt_d.step(&mut disc.params, &gd)?;

        // Generator step against the updated, now frozen, discriminator.
        let mut g = Graph::<f32>::new();
        let mut b = Binder::bind(&mut g, &gen.params, "g.", |_| true);
        disc.bind(&mut g, &mut b, "d.", false);
        let xs_v = g.constant(xs);
        let fake = gen.build(&mut g, &b, "g.", xs_v, Some(noise_seed))?;
        let of = disc.build(&mut g, &b, "d.", fake)?;
        let xt_v = g.constant(xt.clone());
        let rec = gen.build(&mut g, &b, "g.", xt_v, Some(noise_seed ^ 1))?;
        let l_seg = seg_ce(g.value(of.ac_logits), &ys)?;
        let l_dom = dgan_g(g.value(of.domain), metric)?;
        let l_cls = cgan_g(g.value(of.class_maps), &ys, metric)?;
        let l_id = identity_loss(g.value(rec), &xt)?;
        report.seg_g = l_seg.value;
        report.dgan_g = l_dom.value;
        report.cgan_g = l_cls.value;
        report.id = l_id.value;
        report.total_g = g_seg_weight * l_seg.value + l_dom.value + wc * l_cls.value + l_id.value;
        check_report(&report)?;
        let mut seeds = vec![(of.domain, first(l_dom.grads)), (rec, first(l_id.grads))];
        if g_seg_weight > 0.0 {
            seeds.push((of.ac_logits, first(l_seg.grads)));
        }
        if wc > 0.0 {
            seeds.push((of.class_maps, scaled(first(l_cls.grads), wc)));
        }
        let grads = g.backward(&seeds);
        let gg = clip_global_norm(&b.grads(&g, &grads, "g."), rc.hyper.clip_norm, step)?;
        opt_g.step(&mut gen.params, &gg)?;
        if !gen.params.all_finite() || !disc.params.all_finite() {
            if let Some(dir) = out {
                save_params(&dir.join("generator_ema.last_good.ckpt"), &gen_ema.fingerprint(), &gen_ema.params)?;
            }
            return Err(Error::NumericalFault {
                step,
                term: "generator or discriminator parameters".into(),
            });
        }
        gen_ema.params = ema_update(&gen_ema.params, &gen.params, ema_decay_at(rc.hyper.ema_decay, step))?;
        if let Some(m) = metrics.as_mut() {
            if step % cfg.log_every == 0 || step + 1 == cfg.steps {
                m.write(&report)?;
            }
        }
        reports.push(report);
    }
    if let Some(m) = metrics {
        m.finish()?;
    }
    if let Some(dir) = out {
        save_params(&dir.join("generator.ckpt"), &gen.fingerprint(), &gen.params)?;
        save_params(&dir.join("generator_ema.ckpt"), &gen_ema.fingerprint(), &gen_ema.params)?;
        let mut all = disc.params.clone();
        all.graft(&disc.trunk, "");
        save_params(&dir.join("discriminator.ckpt"), &disc.fingerprint(), &all)?;
    }
    Ok(I2iOutput {
        generator: gen,
        generator_ema: gen_ema,
        discriminator: disc,
        reports,
    })
}
