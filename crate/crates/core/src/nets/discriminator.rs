use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uda_autograd::{ConvCfg, Float, Graph, Tensor, Var};

use super::segmenter::{init_trunk, Segmenter, SegmenterCfg, TRUNK};
use super::{check_hw, Binder, Init, Scope, LEAKY_SLOPE};
use crate::data::NetParams;
use crate::error::{Error, Result};

/// Discriminator on top of a frozen segmentation trunk: a 1×1 adapter,
/// residual blocks, then two decoders. The GAN head emits one domain map
/// plus one map per class, the auxiliary classifier head emits class logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorCfg {
    pub width: usize,
    pub res_blocks: usize,
    pub trunk: SegmenterCfg,
}

impl Default for DiscriminatorCfg {
    fn default() -> Self {
        DiscriminatorCfg {
            width: 64,
            res_blocks: 3,
            trunk: SegmenterCfg::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub cfg: DiscriminatorCfg,
    /// Frozen feature extractor, never updated.
    pub trunk: NetParams,
    pub params: NetParams,
}

/// Graph nodes of one discriminator pass, all at input resolution.
#[derive(Clone, Copy, Debug)]
pub struct DiscOutputs {
    /// `N×1×H×W` real/fake map.
    pub domain: Var,
    /// `N×K×H×W` per-class real/fake maps.
    pub class_maps: Var,
    /// `N×K×H×W` auxiliary classifier logits.
    pub ac_logits: Var,
}

impl Discriminator {
    /// `trunk` supplies the frozen `trunk.*` weights (typically a warm-up
    /// segmenter); `None` keeps a fixed random trunk.
    pub fn new(cfg: DiscriminatorCfg, trunk: Option<&Segmenter>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            rng: &mut rng,
            params: NetParams::new(),
            equalized: false,
        };
        let trunk_params = match trunk {
            Some(s) => {
                if s.cfg.width1 != cfg.trunk.width1 || s.cfg.width2 != cfg.trunk.width2 || s.cfg.depth != cfg.trunk.depth
                {
                    return Err(Error::Schema(format!(
                        "trunk segmenter {} does not match discriminator trunk config",
                        s.fingerprint()
                    )));
                }
                s.params.filtered(|n| n.starts_with(TRUNK))
            }
            None => {
                init_trunk(&mut init, &cfg.trunk);
                std::mem::take(&mut init.params)
            }
        };
        let (c, k) = (cfg.width, cfg.trunk.num_classes);
        init.conv("adapt", cfg.trunk.width2, c, 1);
        init.bias("adapt", c);
        for i in 0..cfg.res_blocks {
            init.conv(&format!("res{i}"), c, c, 3);
            if let Some(w) = init.params.get_mut(&format!("res{i}.w")) {
                w.scale_inplace(0.5);
            }
            init.bias(&format!("res{i}"), c);
        }
        for head in ["gan", "ac"] {
            init.deconv(&format!("{head}.up"), c, c / 2, 4);
            init.bias(&format!("{head}.up"), c / 2);
        }
        init.conv("gan.dom", c / 2, 1, 3);
        init.bias("gan.dom", 1);
        init.conv("gan.cls", c / 2, k, 3);
        init.bias("gan.cls", k);
        init.conv("ac.out", c / 2, k, 3);
        init.bias("ac.out", k);
        Ok(Discriminator {
            cfg,
            trunk: trunk_params,
            params: init.params,
        })
    }

    pub fn fingerprint(&self) -> String {
        let t = &self.cfg.trunk;
        format!(
            "discriminator/w{}/r{}/trunk{}-{}-{}x{}/k{}",
            self.cfg.width, self.cfg.res_blocks, t.width1, t.width2, t.depth, t.trunk_dilation, t.num_classes
        )
    }

    /// Binds the trunk as constants and the heads under `prefix` with the
    /// given trainability.
    pub fn bind<F: Float>(&self, g: &mut Graph<F>, b: &mut Binder, prefix: &str, trainable: bool) {
        let trunk = self.trunk.cast::<F>();
        b.add(g, &trunk, prefix, |_| false);
        b.add(g, &self.params.cast::<F>(), prefix, |_| trainable);
    }

    pub fn build<F: Float>(&self, g: &mut Graph<F>, b: &Binder, prefix: &str, x: Var) -> Result<DiscOutputs> {
        let (_, h, w) = check_hw(g.value(x), 8)?;
        let feat = Segmenter::build_trunk(&self.cfg.trunk, g, b, prefix, x)?;
        let s = Scope {
            b,
            prefix,
            equalized: false,
        };
        let mut z = s.conv(g, "adapt", feat, ConvCfg::same(1));
        z = s.bias(g, "adapt", z);
        z = g.leaky_relu(z, LEAKY_SLOPE);
        for i in 0..self.cfg.res_blocks {
            let name = format!("res{i}");
            let mut r = s.conv(g, &name, z, ConvCfg::same(3));
            r = s.bias(g, &name, r);
            r = g.leaky_relu(r, LEAKY_SLOPE);
            z = g.add(z, r);
        }
        let decode = |g: &mut Graph<F>, head: &str| {
            let name = format!("{head}.up");
            let u = s.deconv(g, &name, z);
            let u = s.bias(g, &name, u);
            g.leaky_relu(u, LEAKY_SLOPE)
        };
        let gan = decode(g, "gan");
        let ac = decode(g, "ac");
        let head = |g: &mut Graph<F>, from: Var, name: &str| {
            let o = s.conv(g, name, from, ConvCfg::same(3));
            let o = s.bias(g, name, o);
            g.resize(o, h, w)
        };
        Ok(DiscOutputs {
            domain: head(g, gan, "gan.dom"),
            class_maps: head(g, gan, "gan.cls"),
            ac_logits: head(g, ac, "ac.out"),
        })
    }

    /// Inference pass. Returns `(gan_maps N×(1+K)×H×W, ac_logits N×K×H×W)`
    /// with channel 0 of `gan_maps` the domain map.
    pub fn forward(&self, x: &Tensor<f32>) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut g = Graph::new();
        let mut b = Binder::frozen(&mut g, &NetParams::<f32>::new(), "");
        self.bind(&mut g, &mut b, "", false);
        let xv = g.constant(x.clone());
        let o = self.build(&mut g, &b, "", xv)?;
        let dom = g.value(o.domain);
        let cls = g.value(o.class_maps);
        let (n, k, h, w) = cls.dims4();
        let hw = h * w;
        let mut maps = Tensor::zeros(&[n, 1 + k, h, w]);
        for s in 0..n {
            let dst = &mut maps.data_mut()[s * (1 + k) * hw..(s + 1) * (1 + k) * hw];
            dst[..hw].copy_from_slice(&dom.data()[s * hw..(s + 1) * hw]);
            dst[hw..].copy_from_slice(&cls.data()[s * k * hw..(s + 1) * k * hw]);
        }
        Ok((maps, g.value(o.ac_logits).clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Discriminator {
        Discriminator::new(
            DiscriminatorCfg {
                width: 8,
                res_blocks: 3,
                trunk: SegmenterCfg {
                    width1: 4,
                    width2: 6,
                    depth: 1,
                    ..SegmenterCfg::default()
                },
            },
            None,
            2,
        )
        .unwrap()
    }

    #[test]
    fn head_shapes_and_purity() {
        let d = small();
        let x = Tensor::from_vec(&[1, 3, 64, 64], (0..3 * 4096).map(|i| ((i % 13) as f32) / 13.0 - 0.5).collect()).unwrap();
        let (maps, ac) = d.forward(&x).unwrap();
        assert_eq!(maps.shape(), &[1, 6, 64, 64]);
        assert_eq!(ac.shape(), &[1, 5, 64, 64]);
        let (maps2, ac2) = d.forward(&x).unwrap();
        assert_eq!(maps, maps2);
        assert_eq!(ac, ac2);
    }

    #[test]
    fn trunk_receives_no_gradient() {
        let d = small();
        let mut g = Graph::<f32>::new();
        let mut b = Binder::frozen(&mut g, &NetParams::<f32>::new(), "");
        d.bind(&mut g, &mut b, "d.", true);
        let x = g.input(Tensor::full(&[1, 3, 16, 16], 0.1), true);
        let o = d.build(&mut g, &b, "d.", x).unwrap();
        let seed = Tensor::full(g.value(o.ac_logits).shape(), 1.0);
        let grads = g.backward(&[(o.ac_logits, seed)]);
        let gp = b.grads(&g, &grads, "d.");
        assert!(gp.names().all(|n| !n.starts_with(TRUNK)));
        assert!(gp.names().any(|n| n.starts_with("ac.")));
        for n in d.trunk.names() {
            assert!(grads.get(b.var(&format!("d.{n}"))).is_none(), "{n}");
        }
        assert!(grads.get(x).is_some());
    }

    #[test]
    fn trunk_config_must_match() {
        let seg = Segmenter::new(SegmenterCfg::default(), 0);
        assert!(matches!(
            Discriminator::new(small().cfg, Some(&seg), 0),
            Err(Error::Schema(_))
        ));
    }
}
