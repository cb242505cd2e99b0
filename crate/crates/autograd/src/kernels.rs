use crate::{Float, Tensor};

/// Output length of a convolution along one axis.
pub fn conv_out_len(input: usize, k: usize, stride: usize, pad: usize, dilation: usize) -> usize {
    let span = dilation * (k - 1) + 1;
    (input + 2 * pad).saturating_sub(span) / stride + 1
}

/// Output length of a transposed convolution along one axis.
pub fn deconv_out_len(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input - 1) * stride + k - 2 * pad
}

/// Geometry of one im2col pass: an image of `c × h × w` sampled by a
/// `kh × kw` kernel into `oh × ow` positions.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Patch {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Patch {
    pub fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// `cols[(ci, ki, kj), (oy, ox)] = img[ci, oy*s - p + ki*d, ox*s - p + kj*d]`
pub(crate) fn im2col<F: Float>(img: &[F], p: &Patch, cols: &mut [F]) {
    let ncol = p.cols();
    for ci in 0..p.c {
        let plane = &img[ci * p.h * p.w..(ci + 1) * p.h * p.w];
        for ki in 0..p.kh {
            for kj in 0..p.kw {
                let row = (ci * p.kh + ki) * p.kw + kj;
                let dst = &mut cols[row * ncol..(row + 1) * ncol];
                for oy in 0..p.oh {
                    let iy = (oy * p.stride + ki * p.dilation) as isize - p.pad as isize;
                    let line = &mut dst[oy * p.ow..(oy + 1) * p.ow];
                    if iy < 0 || iy >= p.h as isize {
                        line.iter_mut().for_each(|v| *v = F::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * p.w..(iy as usize + 1) * p.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * p.stride + kj * p.dilation) as isize - p.pad as isize;
                        *v = if ix < 0 || ix >= p.w as isize {
                            F::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into the image.
pub(crate) fn col2im<F: Float>(cols: &[F], p: &Patch, img: &mut [F]) {
    let ncol = p.cols();
    for ci in 0..p.c {
        let plane = &mut img[ci * p.h * p.w..(ci + 1) * p.h * p.w];
        for ki in 0..p.kh {
            for kj in 0..p.kw {
                let row = (ci * p.kh + ki) * p.kw + kj;
                let src = &cols[row * ncol..(row + 1) * ncol];
                for oy in 0..p.oh {
                    let iy = (oy * p.stride + ki * p.dilation) as isize - p.pad as isize;
                    if iy < 0 || iy >= p.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * p.w..(iy as usize + 1) * p.w];
                    let line = &src[oy * p.ow..(oy + 1) * p.ow];
                    for (ox, &v) in line.iter().enumerate() {
                        let ix = (ox * p.stride + kj * p.dilation) as isize - p.pad as isize;
                        if ix >= 0 && ix < p.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Half-pixel bilinear interpolation taps along one axis.
pub(crate) fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub(crate) fn resize_forward<F: Float>(x: &Tensor<F>, oh: usize, ow: usize) -> Tensor<F> {
    let (n, c, h, w) = x.dims4();
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let src = x.data();
    let dst = out.data_mut();
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut dst[plane * oh * ow..(plane + 1) * oh * ow];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let ly = F::c(ly);
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let lx = F::c(lx);
                let top = s[y0 * w + x0] * (F::one() - lx) + s[y0 * w + x1] * lx;
                let bot = s[y1 * w + x0] * (F::one() - lx) + s[y1 * w + x1] * lx;
                d[oy * ow + ox] = top * (F::one() - ly) + bot * ly;
            }
        }
    }
    out
}

pub(crate) fn resize_backward<F: Float>(dy: &Tensor<F>, h: usize, w: usize) -> Tensor<F> {
    let (n, c, oh, ow) = dy.dims4();
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut dx = Tensor::zeros(&[n, c, h, w]);
    let src = dy.data();
    let dst = dx.data_mut();
    for plane in 0..n * c {
        let g = &src[plane * oh * ow..(plane + 1) * oh * ow];
        let d = &mut dst[plane * h * w..(plane + 1) * h * w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let ly = F::c(ly);
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let lx = F::c(lx);
                let v = g[oy * ow + ox];
                d[y0 * w + x0] += v * (F::one() - ly) * (F::one() - lx);
                d[y0 * w + x1] += v * (F::one() - ly) * lx;
                d[y1 * w + x0] += v * ly * (F::one() - lx);
                d[y1 * w + x1] += v * ly * lx;
            }
        }
    }
    dx
}

/// Bilinear resize of an NCHW tensor (half-pixel centres, edge clamped).
pub fn bilinear_resize<F: Float>(x: &Tensor<F>, oh: usize, ow: usize) -> Tensor<F> {
    resize_forward(x, oh, ow)
}
