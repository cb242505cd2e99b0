//! Training phases: warm-up with consistency regularisation, adversarial
//! image-to-image translation, and final segmentation training on real and
//! translated source images.

mod batch;
mod i2i;
mod pseudo;
mod seg;
mod translate;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{LossReport, NetParams};
use crate::error::{Error, Result};

pub use batch::{Batcher, Split};
pub use i2i::{initial_generator, run_i2i, I2iOutput};
pub use pseudo::{generate_pseudo_labels, Coverage, PseudoLabelSet};
pub use seg::{run_segmentation, run_warmup, SegOutput};
pub use translate::{channel_mean_histogram, histogram_l1, identity_error, translate_dataset, TRANSLATED_MANIFEST};

/// Loss-weight fade window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub fade_start: usize,
    pub fade_end: usize,
    pub lambda_max: f64,
    pub con_warmup_steps: usize,
}

/// 0 before `fade_start`, `lambda_max` from `fade_end` on, linear between.
pub fn lambda_fade(step: usize, s: &Schedule) -> f64 {
    if step <= s.fade_start {
        0.0
    } else if step >= s.fade_end {
        s.lambda_max
    } else {
        s.lambda_max * (step - s.fade_start) as f64 / (s.fade_end - s.fade_start) as f64
    }
}

/// `decay·teacher + (1 − decay)·student`, elementwise.
pub fn ema_update(teacher: &NetParams, student: &NetParams, decay: f64) -> Result<NetParams> {
    if !(0.0..=1.0).contains(&decay) {
        return Err(Error::config("ema_decay", "must lie in [0, 1]"));
    }
    teacher.blend(student, decay as f32)
}

/// Effective EMA decay at optimiser step `t` (0-based): ramps up from 0.1
/// so early teachers are not dominated by the random initialisation.
pub fn ema_decay_at(decay: f64, t: usize) -> f64 {
    decay.min((1.0 + t as f64) / (10.0 + t as f64))
}

pub fn global_norm(grads: &NetParams) -> f64 {
    grads.sum_sq().sqrt()
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &NetParams, max_norm: f64, step: usize) -> Result<NetParams> {
    if !(max_norm > 0.0) {
        return Err(Error::config("clip_norm", "must be > 0"));
    }
    if let Some((name, _)) = grads.iter().find(|(_, t)| !t.all_finite()) {
        return Err(Error::NumericalFault {
            step,
            term: format!("gradient of {name}"),
        });
    }
    let norm = global_norm(grads);
    let mut out = grads.clone();
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        out.iter_mut().for_each(|(_, t)| t.scale_inplace(s));
    }
    Ok(out)
}

/// Adam with exponential learning-rate decay per 1000 steps.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub decay_per_1000: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: usize,
    m: NetParams,
    v: NetParams,
}

impl Adam {
    pub fn new(lr: f64, decay_per_1000: f64, beta1: f64) -> Self {
        Adam {
            lr,
            decay_per_1000,
            beta1,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: NetParams::new(),
            v: NetParams::new(),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.lr * self.decay_per_1000.powf(self.t as f64 / 1000.0)
    }

    /// Updates every tensor of `params` named in `grads`.
    pub fn step(&mut self, params: &mut NetParams, grads: &NetParams) -> Result<()> {
        let lr = self.current_lr();
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (name, g) in grads.iter() {
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Schema(format!("optimiser got gradient for unknown `{name}`")))?;
            if p.shape() != g.shape() {
                return Err(Error::Schema(format!("gradient shape mismatch for `{name}`")));
            }
            if self.m.get(name).is_none() {
                self.m.insert(name.clone(), uda_autograd::Tensor::zeros(g.shape()));
                self.v.insert(name.clone(), uda_autograd::Tensor::zeros(g.shape()));
            }
            let m = self.m.get_mut(name).expect("inserted").data_mut();
            let pd = p.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i] as f64;
                m[i] = (b1 * m[i] as f64 + (1.0 - b1) * gi) as f32;
            }
            let v = self.v.get_mut(name).expect("inserted").data_mut();
            let m = self.m.get(name).expect("inserted").data();
            for i in 0..pd.len() {
                let gi = g.data()[i] as f64;
                v[i] = (b2 * v[i] as f64 + (1.0 - b2) * gi * gi) as f32;
                let mh = m[i] as f64 / c1;
                let vh = v[i] as f64 / c2;
                pd[i] -= (lr * mh / (vh.sqrt() + self.eps)) as f32;
            }
        }
        Ok(())
    }
}

/// Append-only JSON-lines metric stream.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter { out: BufWriter::new(f) })
    }

    pub fn write(&mut self, r: &LossReport) -> Result<()> {
        let line = serde_json::to_string(r)?;
        writeln!(self.out, "{line}").map_err(|e| Error::io("<metrics>", e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io("<metrics>", e))
    }
}

/// Fails with a numerical fault naming the first non-finite loss term.
pub(crate) fn check_report(r: &LossReport) -> Result<()> {
    match r.non_finite() {
        Some(term) => Err(Error::NumericalFault {
            step: r.step,
            term: term.to_string(),
        }),
        None => Ok(()),
    }
}
