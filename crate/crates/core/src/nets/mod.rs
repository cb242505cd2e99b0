//! Generator, dual-head discriminator and segmentation network.
//!
//! Parameters live in [`NetParams`] under stable names. A forward pass binds
//! them to a [`Graph`] through a [`Binder`], either as trainable leaves or as
//! constants (frozen trunk, teacher networks, inference).

mod checkpoint;
mod discriminator;
mod generator;
mod segmenter;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use uda_autograd::{ConvCfg, Float, Gradients, Graph, Tensor, Var};

use crate::data::NetParams;

pub use checkpoint::{load_params, save_params, CHECKPOINT_VERSION};
pub use discriminator::{DiscOutputs, Discriminator, DiscriminatorCfg};
pub use generator::{Generator, GeneratorCfg, IdentityTranslator, Translate};
pub use segmenter::{Segmenter, SegmenterCfg, CLASSIFIER, SEG_STRIDE, TRUNK};

pub const LEAKY_SLOPE: f64 = 0.2;
pub(crate) const NORM_EPS: f64 = 1e-8;

/// Maps parameter names to graph leaves for one forward pass.
pub struct Binder {
    vars: BTreeMap<String, Var>,
    trainable: Vec<String>,
}

impl Binder {
    /// Binds every tensor of `params` under `prefix`; names for which
    /// `train` returns true become trainable leaves, the rest constants.
    pub fn bind<F: Float>(
        g: &mut Graph<F>,
        params: &NetParams<F>,
        prefix: &str,
        train: impl Fn(&str) -> bool,
    ) -> Self {
        let mut b = Binder {
            vars: BTreeMap::new(),
            trainable: Vec::new(),
        };
        b.add(g, params, prefix, train);
        b
    }

    pub fn frozen<F: Float>(g: &mut Graph<F>, params: &NetParams<F>, prefix: &str) -> Self {
        Self::bind(g, params, prefix, |_| false)
    }

    pub fn add<F: Float>(&mut self, g: &mut Graph<F>, params: &NetParams<F>, prefix: &str, train: impl Fn(&str) -> bool) {
        for (name, t) in params.iter() {
            let full = format!("{prefix}{name}");
            let v = if train(name) {
                self.trainable.push(full.clone());
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            };
            self.vars.insert(full, v);
        }
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` is not bound"))
    }

    pub fn has(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    /// Gradients of the trainable leaves under `prefix` (prefix stripped).
    /// Leaves that did not influence the loss get zero gradients.
    pub fn grads<F: Float>(&self, g: &Graph<F>, grads: &Gradients<F>, prefix: &str) -> NetParams<F> {
        let mut out = NetParams::new();
        for name in &self.trainable {
            if let Some(local) = name.strip_prefix(prefix) {
                let v = self.vars[name];
                let t = grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(g.value(v).shape()));
                out.insert(local, t);
            }
        }
        out
    }
}

/// Scoped access to one network's parameters on a bound graph.
pub(crate) struct Scope<'a> {
    pub b: &'a Binder,
    pub prefix: &'a str,
    pub equalized: bool,
}

impl Scope<'_> {
    pub fn var(&self, name: &str) -> Var {
        self.b.var(&format!("{}{}", self.prefix, name))
    }

    /// Weight of layer `name`, rescaled by He's constant when weights are
    /// stored at unit variance.
    pub fn weight<F: Float>(&self, g: &mut Graph<F>, name: &str, fan_in: usize) -> Var {
        let w = self.var(&format!("{name}.w"));
        if self.equalized {
            g.scale(w, (2.0 / fan_in as f64).sqrt())
        } else {
            w
        }
    }

    pub fn conv<F: Float>(&self, g: &mut Graph<F>, name: &str, x: Var, cfg: ConvCfg) -> Var {
        let ws = g.value(self.var(&format!("{name}.w"))).shape().to_vec();
        let w = self.weight(g, name, ws[1] * ws[2] * ws[3]);
        g.conv2d(x, w, cfg)
    }

    pub fn deconv<F: Float>(&self, g: &mut Graph<F>, name: &str, x: Var) -> Var {
        let ws = g.value(self.var(&format!("{name}.w"))).shape().to_vec();
        let w = self.weight(g, name, (ws[0] * ws[2] * ws[3] / 4).max(1));
        g.deconv2d(x, w, 2, 1)
    }

    /// Learned per-channel scale and bias (`name.s`, `name.b`).
    pub fn affine<F: Float>(&self, g: &mut Graph<F>, name: &str, x: Var) -> Var {
        let s = self.var(&format!("{name}.s"));
        let b = self.var(&format!("{name}.b"));
        g.channel_affine(x, Some(s), Some(b))
    }

    pub fn bias<F: Float>(&self, g: &mut Graph<F>, name: &str, x: Var) -> Var {
        let b = self.var(&format!("{name}.b"));
        g.channel_affine(x, None, Some(b))
    }
}

/// Parameter initialisation helpers.
pub(crate) struct Init<'a, R: Rng> {
    pub rng: &'a mut R,
    pub params: NetParams<f32>,
    pub equalized: bool,
}

impl<R: Rng> Init<'_, R> {
    fn normal(&mut self, shape: &[usize], std: f64) -> Tensor<f32> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(self.rng);
                (z * std) as f32
            })
            .collect();
        Tensor::from_vec(shape, data).expect("shape")
    }

    fn he(&mut self, shape: &[usize], fan_in: usize) -> Tensor<f32> {
        let std = if self.equalized { 1.0 } else { (2.0 / fan_in as f64).sqrt() };
        self.normal(shape, std)
    }

    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) {
        let t = self.he(&[cout, cin, k, k], cin * k * k);
        self.params.insert(format!("{name}.w"), t);
    }

    pub fn deconv(&mut self, name: &str, cin: usize, cout: usize, k: usize) {
        let t = self.he(&[cin, cout, k, k], (cin * k * k / 4).max(1));
        self.params.insert(format!("{name}.w"), t);
    }

    pub fn affine(&mut self, name: &str, c: usize, scale: f32) {
        self.params.insert(format!("{name}.s"), Tensor::full(&[c], scale));
        self.params.insert(format!("{name}.b"), Tensor::zeros(&[c]));
    }

    pub fn bias(&mut self, name: &str, c: usize) {
        self.params.insert(format!("{name}.b"), Tensor::zeros(&[c]));
    }

    pub fn tensor(&mut self, name: &str, t: Tensor<f32>) {
        self.params.insert(name, t);
    }

    pub fn gaussian(&mut self, name: &str, shape: &[usize], std: f64) {
        let t = self.normal(shape, std);
        self.params.insert(name, t);
    }
}

fn check_hw<F: Float>(x: &Tensor<F>, multiple: usize) -> crate::Result<(usize, usize, usize)> {
    if x.shape().len() != 4 || x.shape()[1] != 3 {
        return Err(crate::Error::Shape(format!("expected N×3×H×W input, got {:?}", x.shape())));
    }
    let (n, _, h, w) = x.dims4();
    if h == 0 || w == 0 || h % multiple != 0 || w % multiple != 0 {
        return Err(crate::Error::Shape(format!("input {h}×{w} must be divisible by {multiple}")));
    }
    Ok((n, h, w))
}
