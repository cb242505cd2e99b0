use crate::kernels::{col2im, conv_out_len, deconv_out_len, im2col, resize_backward, resize_forward, Patch};
use crate::{Float, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvCfg {
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvCfg {
    pub const fn same(k: usize) -> Self {
        ConvCfg {
            stride: 1,
            pad: k / 2,
            dilation: 1,
        }
    }

    pub const fn dilated(k: usize, dilation: usize) -> Self {
        ConvCfg {
            stride: 1,
            pad: dilation * (k / 2),
            dilation,
        }
    }

    pub const fn strided(stride: usize, pad: usize) -> Self {
        ConvCfg {
            stride,
            pad,
            dilation: 1,
        }
    }
}

enum Op<F> {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        patch: Patch,
        cols: Vec<F>,
    },
    Deconv {
        x: Var,
        w: Var,
        patch: Patch,
    },
    ChannelAffine {
        x: Var,
        scale: Option<Var>,
        bias: Option<Var>,
    },
    AddNoise {
        x: Var,
        weight: Var,
        noise: Tensor<F>,
    },
    LeakyRelu {
        x: Var,
        slope: F,
    },
    Tanh {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        s: F,
    },
    AddScalar {
        x: Var,
    },
    PixelNorm {
        x: Var,
        inv: Vec<F>,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<F>,
    },
    Linear {
        w: Var,
        v: Var,
        b: Var,
    },
    Resize {
        x: Var,
        h: usize,
        w: usize,
    },
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    grad: bool,
}

/// A single-use tape. Build the forward pass with the op methods, then call
/// [`Graph::backward`] once with seed gradients for the outputs.
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Float> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Float> Gradients<F> {
    /// Gradient of a leaf, or `None` when nothing flowed into it.
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<F>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn accumulate<F: Float>(slot: &mut Option<Tensor<F>>, g: Tensor<F>) {
    match slot {
        Some(acc) => acc.add_assign(&g).expect("gradient shape"),
        None => *slot = Some(g),
    }
}

impl<F: Float> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, grad: bool) -> Var {
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<F>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that receives a gradient but is not a parameter (e.g. an input
    /// image whose sensitivity is wanted).
    pub fn input(&mut self, t: Tensor<F>, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.clone();
        self.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    /// 2-D convolution; `w` is `Cout × Cin × kh × kw`.
    pub fn conv2d(&mut self, x: Var, w: Var, cfg: ConvCfg) -> Var {
        let (n, c, h, wd) = self.value(x).dims4();
        let (cout, cin, kh, kw) = self.value(w).dims4();
        assert_eq!(c, cin, "conv2d: input has {c} channels, kernel expects {cin}");
        let patch = Patch {
            c,
            h,
            w: wd,
            kh,
            kw,
            stride: cfg.stride,
            pad: cfg.pad,
            dilation: cfg.dilation,
            oh: conv_out_len(h, kh, cfg.stride, cfg.pad, cfg.dilation),
            ow: conv_out_len(wd, kw, cfg.stride, cfg.pad, cfg.dilation),
        };
        let (rows, ncol) = (patch.rows(), patch.cols());
        let mut cols = vec![F::zero(); n * rows * ncol];
        let mut out = Tensor::zeros(&[n, cout, patch.oh, patch.ow]);
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let od = out.data_mut();
            for s in 0..n {
                let cs = &mut cols[s * rows * ncol..(s + 1) * rows * ncol];
                im2col(&xv[s * c * h * wd..(s + 1) * c * h * wd], &patch, cs);
                F::gemm(
                    cout,
                    rows,
                    ncol,
                    wv,
                    false,
                    cs,
                    false,
                    &mut od[s * cout * ncol..(s + 1) * cout * ncol],
                    false,
                );
            }
        }
        let grad = self.needs(x) || self.needs(w);
        self.push(out, Op::Conv { x, w, patch, cols }, grad)
    }

    /// Transposed convolution; `w` is `Cin × Cout × kh × kw`.
    pub fn deconv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Var {
        let (n, c, h, wd) = self.value(x).dims4();
        let (cin, cout, kh, kw) = self.value(w).dims4();
        assert_eq!(c, cin, "deconv2d: input has {c} channels, kernel expects {cin}");
        let oh = deconv_out_len(h, kh, stride, pad);
        let ow = deconv_out_len(wd, kw, stride, pad);
        let patch = Patch {
            c: cout,
            h: oh,
            w: ow,
            kh,
            kw,
            stride,
            pad,
            dilation: 1,
            oh: h,
            ow: wd,
        };
        let (rows, ncol) = (patch.rows(), patch.cols());
        let mut out = Tensor::zeros(&[n, cout, oh, ow]);
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let od = out.data_mut();
            let mut cols = vec![F::zero(); rows * ncol];
            for s in 0..n {
                F::gemm(
                    rows,
                    cin,
                    ncol,
                    wv,
                    true,
                    &xv[s * cin * ncol..(s + 1) * cin * ncol],
                    false,
                    &mut cols,
                    false,
                );
                col2im(&cols, &patch, &mut od[s * cout * oh * ow..(s + 1) * cout * oh * ow]);
            }
        }
        let grad = self.needs(x) || self.needs(w);
        self.push(out, Op::Deconv { x, w, patch }, grad)
    }

    /// `y[n,c,..] = x[n,c,..] * scale[c] + bias[c]`
    pub fn channel_affine(&mut self, x: Var, scale: Option<Var>, bias: Option<Var>) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let mut out = self.value(x).clone();
        if let Some(s) = scale {
            assert_eq!(self.value(s).len(), c, "channel_affine: scale length");
            let sv = self.value(s).data().to_vec();
            for (i, chunk) in out.data_mut().chunks_mut(hw).enumerate() {
                let k = sv[i % c];
                chunk.iter_mut().for_each(|v| *v *= k);
            }
        }
        if let Some(b) = bias {
            assert_eq!(self.value(b).len(), c, "channel_affine: bias length");
            let bv = self.value(b).data().to_vec();
            for (i, chunk) in out.data_mut().chunks_mut(hw).enumerate() {
                let k = bv[i % c];
                chunk.iter_mut().for_each(|v| *v += k);
            }
        }
        debug_assert_eq!(out.len(), n * c * hw);
        let grad = self.needs(x)
            || scale.is_some_and(|s| self.needs(s))
            || bias.is_some_and(|b| self.needs(b));
        self.push(out, Op::ChannelAffine { x, scale, bias }, grad)
    }

    /// `y = x + weight[c] * noise[n, 0, ..]` with a fixed noise plane.
    pub fn add_noise(&mut self, x: Var, weight: Var, noise: Tensor<F>) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(noise.shape(), &[n, 1, h, w], "add_noise: noise shape");
        assert_eq!(self.value(weight).len(), c, "add_noise: weight length");
        let hw = h * w;
        let wv = self.value(weight).data().to_vec();
        let mut out = self.value(x).clone();
        for (i, chunk) in out.data_mut().chunks_mut(hw).enumerate() {
            let k = wv[i % c];
            let plane = &noise.data()[(i / c) * hw..(i / c + 1) * hw];
            for (v, &z) in chunk.iter_mut().zip(plane) {
                *v += k * z;
            }
        }
        let grad = self.needs(x) || self.needs(weight);
        self.push(out, Op::AddNoise { x, weight, noise }, grad)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = F::c(slope);
        let out = self.value(x).map(|v| if v > F::zero() { v } else { v * s });
        let grad = self.needs(x);
        self.push(out, Op::LeakyRelu { x, slope: s }, grad)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        let grad = self.needs(x);
        self.push(out, Op::Tanh { x }, grad)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| F::one() / (F::one() + (-v).exp()));
        let grad = self.needs(x);
        self.push(out, Op::Sigmoid { x }, grad)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self
            .value(a)
            .zip_map(self.value(b), |p, q| p + q)
            .expect("add: shape mismatch");
        let grad = self.needs(a) || self.needs(b);
        self.push(out, Op::Add { a, b }, grad)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let s = F::c(s);
        let out = self.value(x).map(|v| v * s);
        let grad = self.needs(x);
        self.push(out, Op::Scale { x, s }, grad)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let s = F::c(s);
        let out = self.value(x).map(|v| v + s);
        let grad = self.needs(x);
        self.push(out, Op::AddScalar { x }, grad)
    }

    /// Normalises each pixel's feature vector to unit root-mean-square.
    pub fn pixel_norm(&mut self, x: Var, eps: f64) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let eps = F::c(eps);
        let cf = F::c(c as f64);
        let mut inv = vec![F::zero(); n * hw];
        let mut out = self.value(x).clone();
        {
            let xv = self.value(x).data();
            for s in 0..n {
                for p in 0..hw {
                    let mut acc = F::zero();
                    for ch in 0..c {
                        let v = xv[(s * c + ch) * hw + p];
                        acc += v * v;
                    }
                    inv[s * hw + p] = F::one() / (acc / cf + eps).sqrt();
                }
            }
            let od = out.data_mut();
            for s in 0..n {
                for ch in 0..c {
                    for p in 0..hw {
                        od[(s * c + ch) * hw + p] *= inv[s * hw + p];
                    }
                }
            }
        }
        let grad = self.needs(x);
        self.push(out, Op::PixelNorm { x, inv }, grad)
    }

    /// Per-sample, per-channel standardisation over the spatial axes.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let hwf = F::c(hw as f64);
        let eps = F::c(eps);
        let mut inv_std = vec![F::zero(); n * c];
        let mut out = self.value(x).clone();
        for (i, chunk) in out.data_mut().chunks_mut(hw).enumerate() {
            let mean = chunk.iter().copied().sum::<F>() / hwf;
            let var = chunk.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / hwf;
            let is = F::one() / (var + eps).sqrt();
            inv_std[i] = is;
            chunk.iter_mut().for_each(|v| *v = (*v - mean) * is);
        }
        let grad = self.needs(x);
        self.push(out, Op::InstanceNorm { x, inv_std }, grad)
    }

    /// `W v + b` for a matrix `W: out × in` and vectors `v: in`, `b: out`.
    pub fn linear(&mut self, w: Var, v: Var, b: Var) -> Var {
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws.len(), 2, "linear: weight must be 2-D");
        let (o, i) = (ws[0], ws[1]);
        assert_eq!(self.value(v).len(), i, "linear: input length");
        assert_eq!(self.value(b).len(), o, "linear: bias length");
        let mut out = self.value(b).clone().reshape(&[o]).expect("bias");
        F::gemm(
            o,
            i,
            1,
            self.value(w).data(),
            false,
            self.value(v).data(),
            false,
            out.data_mut(),
            true,
        );
        let grad = self.needs(w) || self.needs(v) || self.needs(b);
        self.push(out, Op::Linear { w, v, b }, grad)
    }

    /// Bilinear resize to `oh × ow`.
    pub fn resize(&mut self, x: Var, oh: usize, ow: usize) -> Var {
        let (_, _, h, w) = self.value(x).dims4();
        let out = resize_forward(self.value(x), oh, ow);
        let grad = self.needs(x);
        self.push(out, Op::Resize { x, h, w }, grad)
    }

    /// Reverse sweep. Each seed pairs an output node with `∂L/∂output`.
    pub fn backward(&self, seeds: &[(Var, Tensor<F>)]) -> Gradients<F> {
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (v, g) in seeds {
            assert_eq!(
                self.value(*v).shape(),
                g.shape(),
                "backward: seed shape does not match node"
            );
            last = last.max(v.0);
            if self.needs(*v) {
                accumulate(&mut grads[v.0], g.clone());
            }
        }
        for i in (0..=last).rev() {
            let node = &self.nodes[i];
            if !node.grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, g, &mut grads);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Gradients { grads }
    }

    fn backprop(&self, node: &Node<F>, g: Tensor<F>, grads: &mut [Option<Tensor<F>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, patch, cols } => {
                let (n, c, h, wd) = self.value(*x).dims4();
                let cout = self.value(*w).shape()[0];
                let (rows, ncol) = (patch.rows(), patch.cols());
                let gd = g.data();
                if self.needs(*w) {
                    let mut dw = Tensor::zeros(self.value(*w).shape());
                    for s in 0..n {
                        F::gemm(
                            cout,
                            ncol,
                            rows,
                            &gd[s * cout * ncol..(s + 1) * cout * ncol],
                            false,
                            &cols[s * rows * ncol..(s + 1) * rows * ncol],
                            true,
                            dw.data_mut(),
                            true,
                        );
                    }
                    accumulate(&mut grads[w.0], dw);
                }
                if self.needs(*x) {
                    let mut dx = Tensor::zeros(&[n, c, h, wd]);
                    let mut dcols = vec![F::zero(); rows * ncol];
                    let wv = self.value(*w).data();
                    for s in 0..n {
                        F::gemm(
                            rows,
                            cout,
                            ncol,
                            wv,
                            true,
                            &gd[s * cout * ncol..(s + 1) * cout * ncol],
                            false,
                            &mut dcols,
                            false,
                        );
                        col2im(
                            &dcols,
                            patch,
                            &mut dx.data_mut()[s * c * h * wd..(s + 1) * c * h * wd],
                        );
                    }
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::Deconv { x, w, patch } => {
                let (n, cin, h, wd) = self.value(*x).dims4();
                let (rows, ncol) = (patch.rows(), patch.cols());
                let out_sz = patch.c * patch.h * patch.w;
                let gd = g.data();
                let mut dcols = vec![F::zero(); rows * ncol];
                let mut dw = self.needs(*w).then(|| Tensor::zeros(self.value(*w).shape()));
                let mut dx = self.needs(*x).then(|| Tensor::zeros(&[n, cin, h, wd]));
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                for s in 0..n {
                    im2col(&gd[s * out_sz..(s + 1) * out_sz], patch, &mut dcols);
                    if let Some(dx) = dx.as_mut() {
                        F::gemm(
                            cin,
                            rows,
                            ncol,
                            wv,
                            false,
                            &dcols,
                            false,
                            &mut dx.data_mut()[s * cin * ncol..(s + 1) * cin * ncol],
                            false,
                        );
                    }
                    if let Some(dw) = dw.as_mut() {
                        F::gemm(
                            cin,
                            ncol,
                            rows,
                            &xv[s * cin * ncol..(s + 1) * cin * ncol],
                            false,
                            &dcols,
                            true,
                            dw.data_mut(),
                            true,
                        );
                    }
                }
                if let Some(dw) = dw {
                    accumulate(&mut grads[w.0], dw);
                }
                if let Some(dx) = dx {
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::ChannelAffine { x, scale, bias } => {
                let (_, c, h, w) = g.dims4();
                let hw = h * w;
                if let Some(s) = scale {
                    if self.needs(*s) {
                        let xv = self.value(*x).data();
                        let mut ds = Tensor::zeros(&[c]);
                        for (i, (gc, xc)) in g.data().chunks(hw).zip(xv.chunks(hw)).enumerate() {
                            ds.data_mut()[i % c] += gc.iter().zip(xc).map(|(&a, &b)| a * b).sum::<F>();
                        }
                        accumulate(&mut grads[s.0], ds);
                    }
                }
                if let Some(b) = bias {
                    if self.needs(*b) {
                        let mut db = Tensor::zeros(&[c]);
                        for (i, gc) in g.data().chunks(hw).enumerate() {
                            db.data_mut()[i % c] += gc.iter().copied().sum::<F>();
                        }
                        accumulate(&mut grads[b.0], db);
                    }
                }
                if self.needs(*x) {
                    let mut dx = g;
                    if let Some(s) = scale {
                        let sv = self.value(*s).data();
                        for (i, chunk) in dx.data_mut().chunks_mut(hw).enumerate() {
                            let k = sv[i % c];
                            chunk.iter_mut().for_each(|v| *v *= k);
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::AddNoise { x, weight, noise } => {
                let (_, c, h, w) = g.dims4();
                let hw = h * w;
                if self.needs(*weight) {
                    let mut dw = Tensor::zeros(&[c]);
                    for (i, gc) in g.data().chunks(hw).enumerate() {
                        let plane = &noise.data()[(i / c) * hw..(i / c + 1) * hw];
                        dw.data_mut()[i % c] += gc.iter().zip(plane).map(|(&a, &b)| a * b).sum::<F>();
                    }
                    accumulate(&mut grads[weight.0], dw);
                }
                if self.needs(*x) {
                    accumulate(&mut grads[x.0], g);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let s = *slope;
                let dx = g
                    .zip_map(self.value(*x), |gv, xv| if xv > F::zero() { gv } else { gv * s })
                    .expect("shape");
                accumulate(&mut grads[x.0], dx);
            }
            Op::Tanh { x } => {
                let dx = g
                    .zip_map(&node.value, |gv, y| gv * (F::one() - y * y))
                    .expect("shape");
                accumulate(&mut grads[x.0], dx);
            }
            Op::Sigmoid { x } => {
                let dx = g
                    .zip_map(&node.value, |gv, y| gv * y * (F::one() - y))
                    .expect("shape");
                accumulate(&mut grads[x.0], dx);
            }
            Op::Add { a, b } => {
                if self.needs(*a) && self.needs(*b) {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g);
                } else if self.needs(*a) {
                    accumulate(&mut grads[a.0], g);
                } else if self.needs(*b) {
                    accumulate(&mut grads[b.0], g);
                }
            }
            Op::Scale { x, s } => {
                let s = *s;
                accumulate(&mut grads[x.0], g.map(|v| v * s));
            }
            Op::AddScalar { x } => accumulate(&mut grads[x.0], g),
            Op::PixelNorm { x, inv } => {
                let (n, c, h, w) = g.dims4();
                let hw = h * w;
                let cf = F::c(c as f64);
                let y = node.value.data();
                let gd = g.data();
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                let dd = dx.data_mut();
                for s in 0..n {
                    for p in 0..hw {
                        let mut dot = F::zero();
                        for ch in 0..c {
                            let i = (s * c + ch) * hw + p;
                            dot += gd[i] * y[i];
                        }
                        let m = dot / cf;
                        let r = inv[s * hw + p];
                        for ch in 0..c {
                            let i = (s * c + ch) * hw + p;
                            dd[i] = (gd[i] - y[i] * m) * r;
                        }
                    }
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::InstanceNorm { x, inv_std } => {
                let (_, _, h, w) = g.dims4();
                let hw = h * w;
                let hwf = F::c(hw as f64);
                let mut dx = Tensor::zeros(g.shape());
                for (i, ((dc, gc), yc)) in dx
                    .data_mut()
                    .chunks_mut(hw)
                    .zip(g.data().chunks(hw))
                    .zip(node.value.data().chunks(hw))
                    .enumerate()
                {
                    let sg = gc.iter().copied().sum::<F>();
                    let sgy = gc.iter().zip(yc).map(|(&a, &b)| a * b).sum::<F>();
                    let is = inv_std[i];
                    for ((d, &gv), &yv) in dc.iter_mut().zip(gc).zip(yc) {
                        *d = is / hwf * (hwf * gv - sg - yv * sgy);
                    }
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::Linear { w, v, b } => {
                let ws = self.value(*w).shape();
                let (o, i) = (ws[0], ws[1]);
                if self.needs(*w) {
                    let mut dw = Tensor::zeros(&[o, i]);
                    F::gemm(o, 1, i, g.data(), false, self.value(*v).data(), false, dw.data_mut(), false);
                    accumulate(&mut grads[w.0], dw);
                }
                if self.needs(*v) {
                    let mut dv = Tensor::zeros(self.value(*v).shape());
                    F::gemm(i, o, 1, self.value(*w).data(), true, g.data(), false, dv.data_mut(), false);
                    accumulate(&mut grads[v.0], dv);
                }
                if self.needs(*b) {
                    let db = g.reshape(self.value(*b).shape()).expect("bias");
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Resize { x, h, w } => {
                accumulate(&mut grads[x.0], resize_backward(&g, *h, *w));
            }
        }
    }
}
