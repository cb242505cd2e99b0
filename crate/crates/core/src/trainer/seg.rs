use std::path::Path;

use rand::Rng;
use uda_autograd::Graph;

use super::batch::{Batcher, Split};
use super::{check_report, clip_global_norm, ema_decay_at, ema_update, Adam, MetricsWriter};
use crate::config::{PhaseConfig, RunConfig};
use crate::data::{Image, LossReport, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::losses::{consistency_loss, seg_ce, student_total};
use crate::nets::{save_params, Binder, Segmenter};
use crate::toyworld::perturb;

#[derive(Clone, Debug)]
pub struct SegOutput {
    pub student: Segmenter,
    /// EMA of the student; the reported model.
    pub teacher: Segmenter,
    /// One report per optimiser step.
    pub reports: Vec<LossReport>,
}

/// Initial segmentation model: supervised on labelled source crops plus,
/// when enabled, consistency between the teacher on clean target crops and
/// the student on perturbed ones.
pub fn run_warmup(
    rc: &RunConfig,
    phase: &PhaseConfig,
    source: &Split,
    target: Option<&Split>,
    seed: u64,
    out: Option<&Path>,
) -> Result<SegOutput> {
    if phase.translated_fraction != 0.0 {
        return Err(Error::config("warmup.translated_fraction", "the warm-up phase uses no translated images"));
    }
    train(rc, phase, "warmup", source, None, target, seed, out)
}

/// Final segmentation model on a mix of real and translated source crops,
/// with the same consistency term as the warm-up.
pub fn run_segmentation(
    rc: &RunConfig,
    phase: &PhaseConfig,
    source: &Split,
    translated: Option<&Split>,
    target: Option<&Split>,
    seed: u64,
    out: Option<&Path>,
) -> Result<SegOutput> {
    train(rc, phase, "seg", source, translated, target, seed, out)
}

#[allow(clippy::too_many_arguments)]
fn train(
    rc: &RunConfig,
    phase: &PhaseConfig,
    name: &str,
    source: &Split,
    translated: Option<&Split>,
    target: Option<&Split>,
    seed: u64,
    out: Option<&Path>,
) -> Result<SegOutput> {
    phase.validate(name)?;
    let (n_src, n_tr) = phase.split_batch();
    let src_masks = source.masks()?;
    let translated = match (n_tr, translated) {
        (0, _) => None,
        (_, Some(t)) if !t.is_empty() => Some(t),
        _ => {
            return Err(Error::Prerequisite(
                "translated images are required when translated_fraction > 0".into(),
            ))
        }
    };
    if n_src > 0 && source.is_empty() {
        return Err(Error::Prerequisite("source split is empty".into()));
    }
    let target = target.filter(|t| !t.is_empty());
    if phase.consistency && target.is_none() {
        return Err(Error::Prerequisite("consistency training needs target images".into()));
    }

    let mut student = Segmenter::new(rc.nets.segmenter.clone(), seed ^ 0x5e9_0001);
    let mut teacher = student.clone();
    let mut opt = Adam::new(phase.lr, phase.lr_decay, phase.beta1);
    let mut batcher = Batcher::new(seed ^ 0xba7c_0002, rc.data.crop);
    let mut metrics = out.map(|d| MetricsWriter::create(&d.join("metrics.jsonl"))).transpose()?;
    let mut reports = Vec::with_capacity(phase.steps);
    let k = NUM_CLASSES;

    for step in 0..phase.steps {
        let mut g = Graph::<f32>::new();
        let b = Binder::bind(&mut g, &student.params, "", |_| true);
        let mut seeds = Vec::new();
        let mut report = LossReport {
            step,
            phase: name.to_string(),
            classes: k,
            ..LossReport::default()
        };

        if n_src > 0 {
            let picks = batcher.draw(source, n_src);
            let x = g.constant(batcher.images(source, &picks)?);
            let y = batcher.onehot(src_masks, &picks, k)?;
            let z = student.build(&mut g, &b, "", x)?;
            let l = seg_ce(g.value(z), &y)?;
            report.seg_src = l.value;
            seeds.push((z, l.grads.into_iter().next().expect("grad")));
        }
        if let Some(tr) = translated {
            let picks = batcher.draw(tr, n_tr);
            let x = g.constant(batcher.images(tr, &picks)?);
            let y = batcher.onehot(tr.masks()?, &picks, k)?;
            let z = student.build(&mut g, &b, "", x)?;
            let l = seg_ce(g.value(z), &y)?;
            report.seg_trans = l.value;
            seeds.push((z, l.grads.into_iter().next().expect("grad")));
        }
        let lambda_con = match target {
            Some(_) if phase.consistency && step >= phase.con_warmup_steps => rc.hyper.lambda_con,
            _ => 0.0,
        };
        if let (Some(tgt), true) = (target, lambda_con > 0.0) {
            let picks = batcher.draw(tgt, phase.batch_size);
            let clean = batcher.images(tgt, &picks)?;
            let teacher_logits = teacher.logits(&clean)?;
            let mut perturbed = Vec::with_capacity(picks.len());
            for i in 0..picks.len() {
                let img = Image::from_tensor(&clean, i)?;
                let s: u64 = batcher.rng().gen();
                perturbed.push(perturb(&img, &rc.perturb, s));
            }
            let xp = g.constant(crate::data::image_batch(&perturbed.iter().collect::<Vec<_>>())?);
            let z = student.build(&mut g, &b, "", xp)?;
            let l = consistency_loss(&teacher_logits, g.value(z))?;
            report.con = l.value;
            let mut grad = l.grads.into_iter().next().expect("grad");
            grad.scale_inplace(lambda_con as f32);
            seeds.push((z, grad));
        }
        report.lambda_con = lambda_con;
        report.total_fs = student_total(report.seg_src + report.seg_trans, report.con, lambda_con);
        check_report(&report)?;

        let grads = g.backward(&seeds);
        let grads = clip_global_norm(&b.grads(&g, &grads, ""), rc.hyper.clip_norm, step)?;
        opt.step(&mut student.params, &grads)?;
        teacher.params = ema_update(&teacher.params, &student.params, ema_decay_at(rc.hyper.ema_decay, step))?;
        if !student.params.all_finite() {
            return Err(Error::NumericalFault {
                step,
                term: "student parameters".into(),
            });
        }
        if let Some(m) = metrics.as_mut() {
            if step % phase.log_every == 0 || step + 1 == phase.steps {
                m.write(&report)?;
            }
        }
        reports.push(report);
    }
    if let Some(m) = metrics {
        m.finish()?;
    }
    if let Some(dir) = out {
        save_params(&dir.join("student.ckpt"), &student.fingerprint(), &student.params)?;
        save_params(&dir.join("teacher.ckpt"), &teacher.fingerprint(), &teacher.params)?;
    }
    Ok(SegOutput {
        student,
        teacher,
        reports,
    })
}
