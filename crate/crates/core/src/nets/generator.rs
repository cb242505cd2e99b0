use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use uda_autograd::{ConvCfg, Float, Graph, Tensor, Var};

use super::{check_hw, Binder, Init, Scope, LEAKY_SLOPE, NORM_EPS};
use crate::data::{Image, NetParams};
use crate::error::Result;

/// Encoder-decoder translator. The encoder downsamples by 8 with strided
/// convolutions, a residual block sits at the bottleneck, and the decoder
/// upsamples with transposed convolutions. There are no encoder-decoder
/// skip connections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorCfg {
    pub base_width: usize,
    pub style_dim: usize,
    pub pixel_norm: bool,
    pub equalized_lr: bool,
    pub adain: bool,
    pub noise: bool,
}

impl Default for GeneratorCfg {
    fn default() -> Self {
        GeneratorCfg {
            base_width: 32,
            style_dim: 16,
            pixel_norm: true,
            equalized_lr: true,
            adain: true,
            noise: true,
        }
    }
}

pub const DOWNSAMPLE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub cfg: GeneratorCfg,
    pub params: NetParams,
}

/// Anything that maps a source image batch to a translated batch.
pub trait Translate {
    fn translate(&self, x: &Tensor<f32>) -> Result<Tensor<f32>>;
}

/// Passes images through unchanged.
pub struct IdentityTranslator;

impl Translate for IdentityTranslator {
    fn translate(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(x.clone())
    }
}

impl Translate for Generator {
    fn translate(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.forward_batch(x, None)
    }
}

impl Generator {
    pub fn new(cfg: GeneratorCfg, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            rng: &mut rng,
            params: NetParams::new(),
            equalized: cfg.equalized_lr,
        };
        let b = cfg.base_width;
        let widths = [3, b, 2 * b, 4 * b];
        for i in 0..3 {
            init.conv(&format!("enc{i}"), widths[i], widths[i + 1], 4);
            init.affine(&format!("enc{i}"), widths[i + 1], 1.0);
        }
        let c = 4 * b;
        for j in 0..2 {
            init.conv(&format!("res{j}"), c, c, 3);
            init.affine(&format!("res{j}"), c, 1.0);
        }
        if cfg.adain {
            init.gaussian("style.code", &[cfg.style_dim], 1.0);
            init.gaussian("style.ws", &[c, cfg.style_dim], 0.1 / (cfg.style_dim as f64).sqrt());
            init.tensor("style.bs", Tensor::full(&[c], 1.0));
            init.gaussian("style.wb", &[c, cfg.style_dim], 0.1 / (cfg.style_dim as f64).sqrt());
            init.tensor("style.bb", Tensor::zeros(&[c]));
        }
        let dec = [4 * b, 2 * b, b, (b / 2).max(1)];
        for i in 0..3 {
            init.deconv(&format!("dec{i}"), dec[i], dec[i + 1], 4);
            init.affine(&format!("dec{i}"), dec[i + 1], 1.0);
            if cfg.noise {
                init.tensor(&format!("dec{i}.noise"), Tensor::full(&[dec[i + 1]], 0.05));
            }
        }
        init.conv("out", dec[3], 3, 3);
        init.affine("out", 3, 1.0);
        Generator { cfg, params: init.params }
    }

    pub fn fingerprint(&self) -> String {
        let c = &self.cfg;
        format!(
            "generator/b{}/s{}/pn{}/eq{}/ada{}/nz{}",
            c.base_width, c.style_dim, c.pixel_norm as u8, c.equalized_lr as u8, c.adain as u8, c.noise as u8
        )
    }

    /// Builds the forward pass on `g`. Parameters must be bound under
    /// `prefix`. `noise_seed = None` zeroes the noise planes.
    pub fn build<F: Float>(&self, g: &mut Graph<F>, b: &Binder, prefix: &str, x: Var, noise_seed: Option<u64>) -> Result<Var> {
        let (n, h, w) = check_hw(g.value(x), DOWNSAMPLE)?;
        let cfg = &self.cfg;
        let s = Scope {
            b,
            prefix,
            equalized: cfg.equalized_lr,
        };
        let norm = |g: &mut Graph<F>, v: Var| if cfg.pixel_norm { g.pixel_norm(v, NORM_EPS) } else { v };

        let mut hcur = x;
        for i in 0..3 {
            let name = format!("enc{i}");
            hcur = s.conv(g, &name, hcur, ConvCfg::strided(2, 1));
            hcur = norm(g, hcur);
            hcur = s.affine(g, &name, hcur);
            hcur = g.leaky_relu(hcur, LEAKY_SLOPE);
        }
        let mut r = s.conv(g, "res0", hcur, ConvCfg::same(3));
        r = norm(g, r);
        r = s.affine(g, "res0", r);
        r = g.leaky_relu(r, LEAKY_SLOPE);
        r = s.conv(g, "res1", r, ConvCfg::same(3));
        r = norm(g, r);
        r = s.affine(g, "res1", r);
        hcur = g.add(hcur, r);
        if cfg.adain {
            hcur = g.instance_norm(hcur, 1e-5);
            let code = s.var("style.code");
            let scale = g.linear(s.var("style.ws"), code, s.var("style.bs"));
            let bias = g.linear(s.var("style.wb"), code, s.var("style.bb"));
            hcur = g.channel_affine(hcur, Some(scale), Some(bias));
        }
        let mut rng = noise_seed.map(ChaCha8Rng::seed_from_u64);
        for i in 0..3 {
            let name = format!("dec{i}");
            hcur = s.deconv(g, &name, hcur);
            if cfg.noise {
                let (_, _, hh, ww) = g.value(hcur).dims4();
                let plane = match rng.as_mut() {
                    Some(r) => Tensor::from_vec(
                        &[n, 1, hh, ww],
                        (0..n * hh * ww)
                            .map(|_| F::c(StandardNormal.sample(r)))
                            .collect::<Vec<F>>(),
                    )?,
                    None => Tensor::zeros(&[n, 1, hh, ww]),
                };
                hcur = g.add_noise(hcur, s.var(&format!("{name}.noise")), plane);
            }
            hcur = norm(g, hcur);
            hcur = s.affine(g, &name, hcur);
            hcur = g.leaky_relu(hcur, LEAKY_SLOPE);
        }
        hcur = s.conv(g, "out", hcur, ConvCfg::same(3));
        hcur = s.affine(g, "out", hcur);
        let out = g.tanh(hcur);
        debug_assert_eq!(g.value(out).dims4(), (n, 3, h, w));
        Ok(out)
    }

    pub fn forward_batch(&self, x: &Tensor<f32>, noise_seed: Option<u64>) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let b = Binder::frozen(&mut g, &self.params, "");
        let xv = g.constant(x.clone());
        let out = self.build(&mut g, &b, "", xv, noise_seed)?;
        Ok(g.value(out).clone())
    }

    /// Translates one image.
    pub fn forward(&self, x: &Image, noise_seed: Option<u64>) -> Result<Image> {
        let t = self.forward_batch(&x.to_tensor(), noise_seed)?;
        Image::from_tensor(&t, 0)
    }
}
