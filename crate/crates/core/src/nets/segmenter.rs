use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uda_autograd::{ConvCfg, Float, Graph, Tensor, Var};

use super::{check_hw, Binder, Init, Scope, LEAKY_SLOPE};
use crate::data::{argmax_masks, Image, NetParams, SegMask};
use crate::error::Result;

/// Small dilated-convolution segmenter: a stride-4 trunk followed by a
/// pyramid of dilated 3×3 classifiers whose logits are summed and
/// bilinearly upsampled to the input size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmenterCfg {
    pub width1: usize,
    pub width2: usize,
    /// Residual dilated blocks after the two strided convolutions.
    pub depth: usize,
    pub trunk_dilation: usize,
    pub dilation_rates: Vec<usize>,
    pub num_classes: usize,
}

impl Default for SegmenterCfg {
    fn default() -> Self {
        SegmenterCfg {
            width1: 32,
            width2: 96,
            depth: 3,
            trunk_dilation: 2,
            dilation_rates: vec![1, 2, 3],
            num_classes: crate::data::NUM_CLASSES,
        }
    }
}

pub const SEG_STRIDE: usize = 4;

/// Prefix of the final classification layer (the only part a linear
/// probe retrains).
pub const CLASSIFIER: &str = "cls.";
/// Prefix of the feature trunk shared with the discriminator.
pub const TRUNK: &str = "trunk.";

#[derive(Clone, Debug, PartialEq)]
pub struct Segmenter {
    pub cfg: SegmenterCfg,
    pub params: NetParams,
}

impl Segmenter {
    pub fn new(cfg: SegmenterCfg, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            rng: &mut rng,
            params: NetParams::new(),
            equalized: false,
        };
        init_trunk(&mut init, &cfg);
        for &d in &cfg.dilation_rates {
            init.conv(&format!("cls.d{d}"), cfg.width2, cfg.num_classes, 3);
        }
        init.bias("cls", cfg.num_classes);
        Segmenter { cfg, params: init.params }
    }

    pub fn fingerprint(&self) -> String {
        let c = &self.cfg;
        format!(
            "segmenter/w{}-{}/d{}x{}/aspp{:?}/k{}",
            c.width1, c.width2, c.depth, c.trunk_dilation, c.dilation_rates, c.num_classes
        )
    }

    /// Feature map at stride 4.
    pub fn build_trunk<F: Float>(cfg: &SegmenterCfg, g: &mut Graph<F>, b: &Binder, prefix: &str, x: Var) -> Result<Var> {
        check_hw(g.value(x), SEG_STRIDE)?;
        let s = Scope {
            b,
            prefix,
            equalized: false,
        };
        let mut h = x;
        for i in 0..2 {
            let name = format!("trunk.c{i}");
            h = s.conv(g, &name, h, ConvCfg::strided(2, 1));
            h = s.bias(g, &name, h);
            h = g.leaky_relu(h, LEAKY_SLOPE);
        }
        for i in 0..cfg.depth {
            let name = format!("trunk.r{i}");
            let mut r = s.conv(g, &name, h, ConvCfg::dilated(3, cfg.trunk_dilation));
            r = s.bias(g, &name, r);
            r = g.leaky_relu(r, LEAKY_SLOPE);
            h = g.add(h, r);
        }
        Ok(h)
    }

    /// Classifier on trunk features, upsampled to `h × w`.
    pub fn build_head<F: Float>(cfg: &SegmenterCfg, g: &mut Graph<F>, b: &Binder, prefix: &str, feat: Var, h: usize, w: usize) -> Var {
        let s = Scope {
            b,
            prefix,
            equalized: false,
        };
        let mut acc: Option<Var> = None;
        for &d in &cfg.dilation_rates {
            let y = s.conv(g, &format!("cls.d{d}"), feat, ConvCfg::dilated(3, d));
            acc = Some(match acc {
                Some(a) => g.add(a, y),
                None => y,
            });
        }
        let logits = s.bias(g, "cls", acc.expect("at least one dilation rate"));
        g.resize(logits, h, w)
    }

    pub fn build<F: Float>(&self, g: &mut Graph<F>, b: &Binder, prefix: &str, x: Var) -> Result<Var> {
        let (_, h, w) = check_hw(g.value(x), SEG_STRIDE)?;
        let feat = Self::build_trunk(&self.cfg, g, b, prefix, x)?;
        Ok(Self::build_head(&self.cfg, g, b, prefix, feat, h, w))
    }

    /// Logits for an image batch, `N×K×H×W`.
    pub fn logits(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let b = Binder::frozen(&mut g, &self.params, "");
        let xv = g.constant(x.clone());
        let out = self.build(&mut g, &b, "", xv)?;
        Ok(g.value(out).clone())
    }

    pub fn features(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let b = Binder::frozen(&mut g, &self.params.filtered(|n| n.starts_with(TRUNK)), "");
        let xv = g.constant(x.clone());
        let out = Self::build_trunk(&self.cfg, &mut g, &b, "", xv)?;
        Ok(g.value(out).clone())
    }

    pub fn predict(&self, x: &Image) -> Result<SegMask> {
        let t = self.logits(&x.to_tensor())?;
        Ok(argmax_masks(&t).remove(0))
    }
}

pub(crate) fn init_trunk<R: rand::Rng>(init: &mut Init<'_, R>, cfg: &SegmenterCfg) {
    init.conv("trunk.c0", 3, cfg.width1, 3);
    init.bias("trunk.c0", cfg.width1);
    init.conv("trunk.c1", cfg.width1, cfg.width2, 3);
    init.bias("trunk.c1", cfg.width2);
    for i in 0..cfg.depth {
        let name = format!("trunk.r{i}");
        init.conv(&name, cfg.width2, cfg.width2, 3);
        // Residual branches start small so the trunk begins near its
        // strided-convolution path.
        if let Some(w) = init.params.get_mut(&format!("{name}.w")) {
            w.scale_inplace(0.5);
        }
        init.bias(&name, cfg.width2);
    }
}
