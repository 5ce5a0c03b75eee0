//! Spatial kernels on `[N, C, H, W]` tensors: convolution (im2col + GEMM),
//! pooling and nearest-neighbour upsampling.

use super::{gemm, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy)]
struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// True when the column matrix is the input image itself.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Input offset for output position `o` along one axis and kernel tap `k`.
#[inline]
fn src_index(o: usize, k: usize, g: &ConvGeom, extent: usize) -> Option<usize> {
    let i = (o * g.stride + k) as isize - g.pad as isize;
    (i >= 0 && (i as usize) < extent).then_some(i as usize)
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let p = g.cols();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oh in 0..g.ho {
                    let line = &mut dst[oh * g.wo..(oh + 1) * g.wo];
                    match src_index(oh, ki, g, g.h) {
                        None => line.fill(0.0),
                        Some(ih) => {
                            for (ow, v) in line.iter_mut().enumerate() {
                                *v = match src_index(ow, kj, g, g.w) {
                                    Some(iw) => plane[ih * g.w + iw],
                                    None => 0.0,
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let p = g.cols();
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oh in 0..g.ho {
                    let Some(ih) = src_index(oh, ki, g, g.h) else {
                        continue;
                    };
                    for ow in 0..g.wo {
                        if let Some(iw) = src_index(ow, kj, g, g.w) {
                            plane[ih * g.w + iw] += src[oh * g.wo + ow];
                        }
                    }
                }
            }
        }
    }
}

impl Tensor {
    /// 2-D cross-correlation of `[N, Cin, H, W]` with `[Cout, Cin, kh, kw]`.
    pub fn conv2d(
        &self,
        kernel: &Tensor,
        bias: Option<&Tensor>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor> {
        self.check_nchw("conv2d")?;
        if kernel.rank() != 4 {
            return Err(Error::Shape(format!(
                "conv2d kernel must be [Cout, Cin, kh, kw], got {:?}",
                kernel.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::Param("conv2d stride must be ≥ 1".into()));
        }
        let &[n, cin, h, w] = self.shape() else {
            unreachable!()
        };
        let &[cout, kcin, kh, kw] = kernel.shape() else {
            unreachable!()
        };
        if kcin != cin {
            return Err(Error::Shape(format!(
                "conv2d input has {cin} channels but kernel expects {kcin}"
            )));
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(Error::Shape(format!(
                "kernel {kh}×{kw} larger than padded input {}×{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(Error::Shape(format!(
                    "conv2d bias must be [{cout}], got {:?}",
                    b.shape()
                )));
            }
        }
        let g = ConvGeom {
            cin,
            h,
            w,
            kh,
            kw,
            stride,
            pad: padding,
            ho: (h + 2 * padding - kh) / stride + 1,
            wo: (w + 2 * padding - kw) / stride + 1,
        };
        let (k, p) = (g.rows(), g.cols());
        let in_len = cin * h * w;
        let mut out = vec![0.0; n * cout * p];
        let mut cols = if g.is_pointwise() {
            Vec::new()
        } else {
            vec![0.0; k * p]
        };
        for b in 0..n {
            let x = &self.data()[b * in_len..(b + 1) * in_len];
            let colm: &[f64] = if g.is_pointwise() {
                x
            } else {
                im2col(x, &g, &mut cols);
                &cols
            };
            let dst = &mut out[b * cout * p..(b + 1) * cout * p];
            if let Some(bias) = bias {
                for (co, row) in dst.chunks_mut(p).enumerate() {
                    row.fill(bias.data()[co]);
                }
            }
            gemm(cout, k, p, 1.0, kernel.data(), false, colm, false, 1.0, dst);
        }

        let mut inputs = vec![self.clone(), kernel.clone()];
        if let Some(b) = bias {
            inputs.push(b.clone());
        }
        let (x, wt, has_bias) = (self.clone(), kernel.clone(), bias.is_some());
        let bias_rg = bias.is_some_and(Tensor::requires_grad);
        Ok(Tensor::from_op(
            out,
            vec![n, cout, g.ho, g.wo],
            "conv2d",
            inputs,
            move |gout| {
                let mut dx = x.requires_grad().then(|| vec![0.0; n * in_len]);
                let mut dw = wt.requires_grad().then(|| vec![0.0; cout * k]);
                let mut db = bias_rg.then(|| vec![0.0; cout]);
                let mut cols = vec![0.0; k * p];
                for b in 0..n {
                    let gb = &gout[b * cout * p..(b + 1) * cout * p];
                    if let Some(dw) = dw.as_mut() {
                        let xb = &x.data()[b * in_len..(b + 1) * in_len];
                        let colm: &[f64] = if g.is_pointwise() {
                            xb
                        } else {
                            im2col(xb, &g, &mut cols);
                            &cols
                        };
                        gemm(cout, p, k, 1.0, gb, false, colm, true, 1.0, dw);
                    }
                    if let Some(db) = db.as_mut() {
                        for (co, row) in gb.chunks(p).enumerate() {
                            db[co] += row.iter().sum::<f64>();
                        }
                    }
                    if let Some(dx) = dx.as_mut() {
                        let dxb = &mut dx[b * in_len..(b + 1) * in_len];
                        if g.is_pointwise() {
                            gemm(k, cout, p, 1.0, wt.data(), true, gb, false, 1.0, dxb);
                        } else {
                            gemm(k, cout, p, 1.0, wt.data(), true, gb, false, 0.0, &mut cols);
                            col2im(&cols, &g, dxb);
                        }
                    }
                }
                let mut grads = vec![dx, dw];
                if has_bias {
                    grads.push(db);
                }
                grads
            },
        ))
    }

    fn pool_geom(&self, k: usize, op: &str) -> Result<[usize; 4]> {
        self.check_nchw(op)?;
        let &[n, c, h, w] = self.shape() else {
            unreachable!()
        };
        if k == 0 {
            return Err(Error::Param(format!("{op}: factor must be ≥ 1")));
        }
        if h % k != 0 || w % k != 0 {
            return Err(Error::Param(format!(
                "{op}: extent {h}×{w} is not divisible by {k}"
            )));
        }
        Ok([n, c, h, w])
    }

    /// Mean over non-overlapping `k × k` windows.
    pub fn avg_pool2d(&self, k: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.pool_geom(k, "avg_pool2d")?;
        let (ho, wo) = (h / k, w / k);
        let planes = n * c;
        let x = self.data();
        let inv = 1.0 / (k * k) as f64;
        let mut out = vec![0.0; planes * ho * wo];
        let mut window = vec![0.0; k * k];
        for pl in 0..planes {
            let src = &x[pl * h * w..(pl + 1) * h * w];
            for oi in 0..ho {
                for oj in 0..wo {
                    for di in 0..k {
                        let row = (oi * k + di) * w + oj * k;
                        window[di * k..(di + 1) * k].copy_from_slice(&src[row..row + k]);
                    }
                    out[pl * ho * wo + oi * wo + oj] = pairwise_sum(&mut window) * inv;
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            vec![n, c, ho, wo],
            "avg_pool2d",
            vec![self.clone()],
            move |g| {
                let mut gi = vec![0.0; planes * h * w];
                for pl in 0..planes {
                    for i in 0..h {
                        for j in 0..w {
                            gi[pl * h * w + i * w + j] =
                                g[pl * ho * wo + (i / k) * wo + j / k] * inv;
                        }
                    }
                }
                vec![Some(gi)]
            },
        ))
    }

    /// Maximum over non-overlapping `k × k` windows. The gradient goes to
    /// the first maximal element in row-major order.
    pub fn max_pool2d(&self, k: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.pool_geom(k, "max_pool2d")?;
        let (ho, wo) = (h / k, w / k);
        let planes = n * c;
        let x = self.data();
        let mut out = vec![0.0; planes * ho * wo];
        let mut arg = vec![0usize; planes * ho * wo];
        for pl in 0..planes {
            for oi in 0..ho {
                for oj in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = 0;
                    for di in 0..k {
                        for dj in 0..k {
                            let at = pl * h * w + (oi * k + di) * w + oj * k + dj;
                            if x[at] > best || (di == 0 && dj == 0) {
                                best = x[at];
                                best_at = at;
                            }
                        }
                    }
                    let o = pl * ho * wo + oi * wo + oj;
                    out[o] = best;
                    arg[o] = best_at;
                }
            }
        }
        let len = self.numel();
        Ok(Tensor::from_op(
            out,
            vec![n, c, ho, wo],
            "max_pool2d",
            vec![self.clone()],
            move |g| {
                let mut gi = vec![0.0; len];
                for (o, &at) in arg.iter().enumerate() {
                    gi[at] += g[o];
                }
                vec![Some(gi)]
            },
        ))
    }

    /// Replicates every pixel into a `k × k` block.
    pub fn upsample_nearest(&self, k: usize) -> Result<Tensor> {
        self.check_nchw("upsample_nearest")?;
        if k == 0 {
            return Err(Error::Param("upsample_nearest: factor must be ≥ 1".into()));
        }
        let &[n, c, h, w] = self.shape() else {
            unreachable!()
        };
        let (ho, wo) = (h * k, w * k);
        let planes = n * c;
        let x = self.data();
        let mut out = vec![0.0; planes * ho * wo];
        for pl in 0..planes {
            for i in 0..ho {
                for j in 0..wo {
                    out[pl * ho * wo + i * wo + j] = x[pl * h * w + (i / k) * w + j / k];
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            vec![n, c, ho, wo],
            "upsample_nearest",
            vec![self.clone()],
            move |g| {
                let mut gi = vec![0.0; planes * h * w];
                for pl in 0..planes {
                    for i in 0..ho {
                        for j in 0..wo {
                            gi[pl * h * w + (i / k) * w + j / k] += g[pl * ho * wo + i * wo + j];
                        }
                    }
                }
                vec![Some(gi)]
            },
        ))
    }
}

/// Sum by repeated halving; clobbers `buf`. A window of `2^m` equal values
/// sums exactly, so pooling a nearest upsample returns the input bit for bit.
fn pairwise_sum(buf: &mut [f64]) -> f64 {
    let mut n = buf.len();
    while n > 1 {
        let half = n / 2;
        for i in 0..half {
            buf[i] = buf[2 * i] + buf[2 * i + 1];
        }
        if n % 2 == 1 {
            buf[half] = buf[n - 1];
            n = half + 1;
        } else {
            n = half;
        }
    }
    buf.first().copied().unwrap_or(0.0)
}
