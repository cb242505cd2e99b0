//! Helpers shared by the integration tests and the acceptance target.
#![allow(dead_code)]

pub mod gradcheck;
pub mod invariants;
pub mod oracles;
pub mod tables;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uda_autograd::Tensor;
use uda_i2i::config::RunConfig;
use uda_i2i::toyworld::{sample_scene, Domain, DomainSpec};
use uda_i2i::trainer::Split;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug)]
pub struct Dims {
    pub n: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn random(r: &mut ChaCha8Rng, max_n: usize, max_k: usize, max_hw: usize) -> Self {
        Dims {
            n: r.gen_range(1..=max_n),
            k: r.gen_range(2..=max_k),
            h: r.gen_range(1..=max_hw),
            w: r.gen_range(1..=max_hw),
        }
    }

    pub fn with_k(self, k: usize) -> Self {
        Dims { k, ..self }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.k, self.h, self.w]
    }

    pub fn len(&self) -> usize {
        self.n * self.k * self.h * self.w
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.k + c) * self.h + y) * self.w + x
    }

    /// Every `(n, y, x)` pixel position.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n).flat_map(move |n| (0..self.h).flat_map(move |y| (0..self.w).map(move |x| (n, y, x))))
    }
}

pub fn uniform(r: &mut ChaCha8Rng, d: Dims, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_vec(&d.shape(), (0..d.len()).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

/// One-hot labels; each pixel is left all-zero with probability
/// `unlabelled`.
pub fn onehot(r: &mut ChaCha8Rng, d: Dims, unlabelled: f64) -> Tensor<f64> {
    let mut v = vec![0.0; d.len()];
    for (n, y, x) in d.pixels() {
        if r.gen::<f64>() >= unlabelled {
            v[d.at(n, r.gen_range(0..d.k), y, x)] = 1.0;
        }
    }
    Tensor::from_vec(&d.shape(), v).unwrap()
}

/// Label distributions with some exact zeros.
pub fn soft_labels(r: &mut ChaCha8Rng, d: Dims) -> Tensor<f64> {
    let mut v = vec![0.0; d.len()];
    for (n, y, x) in d.pixels() {
        let mut raw: Vec<f64> = (0..d.k).map(|_| if r.gen_bool(0.3) { 0.0 } else { r.gen_range(0.05..1.0) }).collect();
        if raw.iter().all(|&p| p == 0.0) {
            raw[r.gen_range(0..d.k)] = 1.0;
        }
        let z: f64 = raw.iter().sum();
        for c in 0..d.k {
            v[d.at(n, c, y, x)] = raw[c] / z;
        }
    }
    Tensor::from_vec(&d.shape(), v).unwrap()
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Worst error of one operation over its random instances.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub instances: usize,
    pub worst: f64,
}

impl Check {
    pub fn new(name: &str) -> Self {
        Check {
            name: name.into(),
            instances: 0,
            worst: 0.0,
        }
    }

    pub fn record(&mut self, err: f64) {
        self.worst = if err.is_nan() { f64::INFINITY } else { self.worst.max(err) };
    }

    pub fn done(&mut self) {
        self.instances += 1;
    }
}

pub fn scenes(spec: &DomainSpec, domain: Domain, seeds: std::ops::Range<u64>, size: usize) -> Split {
    let samples: Vec<_> = seeds.map(|s| sample_scene(s, spec, size, domain).unwrap()).collect();
    Split::from_samples(&samples, domain == Domain::Source)
}

/// Smoke configuration with tiny step budgets.
pub fn tiny_config(steps: usize) -> RunConfig {
    let mut rc = RunConfig::smoke();
    rc.warmup.steps = steps;
    rc.seg.steps = steps;
    rc.i2i.steps = steps;
    rc
}

/// Proptest settings for integration targets, which have no `lib.rs` to
/// anchor a regression file next to.
pub fn prop_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}
