//! Elementwise, broadcasting, reduction and shape operations.

use std::sync::Arc;

use super::{check_shape, gemm, Tensor};
use crate::{Error, Result};

fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank {
            a[i + a.len() - rank]
        } else {
            1
        };
        let db = if i + b.len() >= rank {
            b[i + b.len() - rank]
        } else {
            1
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(Error::Shape(format!("cannot broadcast {a:?} with {b:?}"))),
        };
    }
    Ok(out)
}

/// Strides of `src` expressed over the (right-aligned) output index space,
/// zero along broadcast axes. Padded to rank 4.
fn broadcast_strides(src: &[usize], out: &[usize]) -> [usize; 4] {
    let mut strides = [0usize; 4];
    let pad = 4 - out.len();
    let mut s = 1;
    for i in (0..src.len()).rev() {
        let oi = out.len() - src.len() + i;
        if src[i] != 1 {
            strides[pad + oi] = s;
        }
        s *= src[i];
    }
    strides
}

fn padded(shape: &[usize]) -> [usize; 4] {
    let mut d = [1usize; 4];
    d[4 - shape.len()..].copy_from_slice(shape);
    d
}

/// Calls `f(out_index, a_index, b_index)` for every output element.
fn for_each_broadcast(
    out: &[usize],
    sa: [usize; 4],
    sb: [usize; 4],
    mut f: impl FnMut(usize, usize, usize),
) {
    let d = padded(out);
    let mut o = 0;
    for i0 in 0..d[0] {
        for i1 in 0..d[1] {
            for i2 in 0..d[2] {
                let ba = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
                let bb = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
                for i3 in 0..d[3] {
                    f(o, ba + i3 * sa[3], bb + i3 * sb[3]);
                    o += 1;
                }
            }
        }
    }
}

/// Splits `shape` around `axis` into (outer, extent, inner).
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tensor {
    fn binary(
        &self,
        other: &Tensor,
        op: &'static str,
        f: fn(f64, f64) -> f64,
        dfa: fn(f64, f64) -> f64,
        dfb: fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let a = self.clone();
        let b = other.clone();
        if a.shape() == b.shape() {
            let data: Vec<f64> = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            let shape = a.shape().to_vec();
            let (sa, sb) = (a.clone(), b.clone());
            return Ok(Tensor::from_op(data, shape, op, vec![a, b], move |g| {
                let ga = sa.requires_grad().then(|| {
                    g.iter()
                        .zip(sa.data().iter().zip(sb.data()))
                        .map(|(g, (&x, &y))| g * dfa(x, y))
                        .collect()
                });
                let gb = sb.requires_grad().then(|| {
                    g.iter()
                        .zip(sa.data().iter().zip(sb.data()))
                        .map(|(g, (&x, &y))| g * dfb(x, y))
                        .collect()
                });
                vec![ga, gb]
            }));
        }
        let out = broadcast_shape(a.shape(), b.shape())?;
        let str_a = broadcast_strides(a.shape(), &out);
        let str_b = broadcast_strides(b.shape(), &out);
        let n = out.iter().product();
        let mut data = vec![0.0; n];
        {
            let (xa, xb) = (a.data(), b.data());
            for_each_broadcast(&out, str_a, str_b, |o, ia, ib| data[o] = f(xa[ia], xb[ib]));
        }
        let (sa, sb) = (a.clone(), b.clone());
        let oshape = out.clone();
        Ok(Tensor::from_op(data, out, op, vec![a, b], move |g| {
            let (xa, xb) = (sa.data(), sb.data());
            let mut ga = sa.requires_grad().then(|| vec![0.0; sa.numel()]);
            let mut gb = sb.requires_grad().then(|| vec![0.0; sb.numel()]);
            for_each_broadcast(&oshape, str_a, str_b, |o, ia, ib| {
                if let Some(ga) = ga.as_mut() {
                    ga[ia] += g[o] * dfa(xa[ia], xb[ib]);
                }
                if let Some(gb) = gb.as_mut() {
                    gb[ib] += g[o] * dfb(xa[ia], xb[ib]);
                }
            });
            vec![ga, gb]
        }))
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "add", |x, y| x + y, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "sub", |x, y| x - y, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "mul", |x, y| x * y, |_, y| y, |x, _| x)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(
            other,
            "div",
            |x, y| x / y,
            |_, y| 1.0 / y,
            |x, y| -x / (y * y),
        )
    }

    /// Elementwise map with derivative `df(x, y)` where `y = f(x)`.
    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| f(x)).collect();
        let out = Arc::new(data);
        let saved_in = self.clone();
        let saved_out = out.clone();
        Tensor::from_op(
            out,
            self.shape().to_vec(),
            op,
            vec![self.clone()],
            move |g| {
                vec![Some(
                    g.iter()
                        .zip(saved_in.data().iter().zip(saved_out.iter()))
                        .map(|(g, (&x, &y))| g * df(x, y))
                        .collect(),
                )]
            },
        )
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.unary("scale", |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary("add_scalar", |x| x + c, |_, _| 1.0)
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn relu(&self) -> Tensor {
        self.unary(
            "relu",
            |x| x.max(0.0),
            |x, _| if x > 0.0 { 1.0 } else { 0.0 },
        )
    }

    pub fn exp(&self) -> Tensor {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Tensor {
        self.unary("ln", f64::ln, |x, _| 1.0 / x)
    }

    /// `|x|`, with subgradient 0 at 0.
    pub fn abs(&self) -> Tensor {
        self.unary("abs", f64::abs, |x, _| x.signum() * (x != 0.0) as u8 as f64)
    }

    /// `|x|^p` for `p > 0`.
    pub fn abs_pow(&self, p: f64) -> Tensor {
        self.unary(
            "abs_pow",
            move |x| x.abs().powf(p),
            move |x, _| {
                if x == 0.0 {
                    if p < 1.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else {
                    p * x.abs().powf(p - 1.0) * x.signum()
                }
            },
        )
    }

    pub fn sqrt(&self) -> Tensor {
        self.unary("sqrt", f64::sqrt, |_, y| 0.5 / y)
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(vec![s], vec![], "sum", vec![self.clone()], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums over `axis`; with `keepdim` the axis stays with extent 1.
    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::Param(format!(
                "axis {axis} out of range for shape {:?}",
                self.shape()
            )));
        }
        let (outer, n, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = &x[(o * n + k) * inner..(o * n + k + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            }
        }
        let mut shape = self.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        Ok(Tensor::from_op(
            out,
            shape,
            "sum_axis",
            vec![self.clone()],
            move |g| {
                let mut gi = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for k in 0..n {
                        gi[(o * n + k) * inner..(o * n + k + 1) * inner]
                            .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(gi)]
            },
        ))
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n = check_shape(shape)?;
        if n != self.numel() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape()
            )));
        }
        Ok(Tensor::from_op(
            self.0.data.clone(),
            shape.to_vec(),
            "reshape",
            vec![self.clone()],
            |g| vec![Some(g.to_vec())],
        ))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Param("concat of zero tensors".into()))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::Param(format!("concat axis {axis} out of range")));
        }
        for p in parts {
            let ok = p.rank() == rank
                && (0..rank).all(|i| i == axis || p.shape()[i] == first.shape()[i]);
            if !ok {
                return Err(Error::Shape(format!(
                    "concat along {axis}: {:?} vs {:?}",
                    first.shape(),
                    p.shape()
                )));
            }
        }
        let (outer, _, inner) = axis_split(first.shape(), axis);
        let extents: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = extents.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &e) in parts.iter().zip(&extents) {
                data.extend_from_slice(&p.data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let inputs: Vec<Tensor> = parts.iter().map(|&p| p.clone()).collect();
        let flags: Vec<bool> = inputs.iter().map(Tensor::requires_grad).collect();
        Ok(Tensor::from_op(data, shape, "concat", inputs, move |g| {
            let mut out: Vec<Option<Vec<f64>>> = flags
                .iter()
                .zip(&extents)
                .map(|(&f, &e)| f.then(|| Vec::with_capacity(outer * e * inner)))
                .collect();
            let mut off = 0;
            for _ in 0..outer {
                for (slot, &e) in out.iter_mut().zip(&extents) {
                    if let Some(v) = slot {
                        v.extend_from_slice(&g[off..off + e * inner]);
                    }
                    off += e * inner;
                }
            }
            out
        }))
    }

    /// The sub-range `start..start+len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || len == 0 || start + len > self.shape()[axis] {
            return Err(Error::Param(format!(
                "narrow({axis}, {start}, {len}) on {:?}",
                self.shape()
            )));
        }
        let (outer, n, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&x[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(
            data,
            shape,
            "narrow",
            vec![self.clone()],
            move |g| {
                let mut gi = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    gi[(o * n + start) * inner..(o * n + start + len) * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gi)]
            },
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&self) -> Result<Tensor> {
        let r = self.rank();
        if r < 2 {
            return Err(Error::Shape("transpose needs rank ≥ 2".into()));
        }
        let (rows, cols) = (self.shape()[r - 2], self.shape()[r - 1]);
        let batch = self.numel() / (rows * cols);
        let swap = move |src: &[f64], rows: usize, cols: usize| {
            let mut dst = vec![0.0; src.len()];
            for b in 0..batch {
                let base = b * rows * cols;
                for i in 0..rows {
                    for j in 0..cols {
                        dst[base + j * rows + i] = src[base + i * cols + j];
                    }
                }
            }
            dst
        };
        let data = swap(self.data(), rows, cols);
        let mut shape = self.shape().to_vec();
        shape.swap(r - 2, r - 1);
        Ok(Tensor::from_op(
            data,
            shape,
            "transpose",
            vec![self.clone()],
            move |g| vec![Some(swap(g, cols, rows))],
        ))
    }

    /// Batched matrix product `[B, m, k] × [B, k, n] → [B, m, n]`.
    pub fn bmm(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::Shape(format!("bmm of {sa:?} and {sb:?}")));
        }
        let (bsz, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut data = vec![0.0; bsz * m * n];
        for b in 0..bsz {
            gemm(
                m,
                k,
                n,
                1.0,
                &self.data()[b * m * k..],
                false,
                &other.data()[b * k * n..],
                false,
                0.0,
                &mut data[b * m * n..],
            );
        }
        let (a, bt) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            data,
            vec![bsz, m, n],
            "bmm",
            vec![self.clone(), other.clone()],
            move |g| {
                let ga = a.requires_grad().then(|| {
                    let mut ga = vec![0.0; bsz * m * k];
                    for b in 0..bsz {
                        // dA = dC · Bᵀ
                        gemm(
                            m,
                            n,
                            k,
                            1.0,
                            &g[b * m * n..],
                            false,
                            &bt.data()[b * k * n..],
                            true,
                            0.0,
                            &mut ga[b * m * k..],
                        );
                    }
                    ga
                });
                let gb = bt.requires_grad().then(|| {
                    let mut gb = vec![0.0; bsz * k * n];
                    for b in 0..bsz {
                        // dB = Aᵀ · dC
                        gemm(
                            k,
                            m,
                            n,
                            1.0,
                            &a.data()[b * m * k..],
                            true,
                            &g[b * m * n..],
                            false,
                            0.0,
                            &mut gb[b * k * n..],
                        );
                    }
                    gb
                });
                vec![ga, gb]
            },
        ))
    }

    /// Euclidean norm over the last axis, keeping it with extent 1.
    /// The subgradient at a zero vector is zero.
    pub fn norm_last(&self) -> Result<Tensor> {
        let r = self.rank();
        if r == 0 {
            return Err(Error::Shape("norm_last on a scalar".into()));
        }
        let len = self.shape()[r - 1];
        let rows = self.numel() / len;
        let norms: Vec<f64> = self
            .data()
            .chunks(len)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut shape = self.shape().to_vec();
        shape[r - 1] = 1;
        let x = self.clone();
        let saved = norms.clone();
        Ok(Tensor::from_op(
            norms,
            shape,
            "norm_last",
            vec![self.clone()],
            move |g| {
                let mut gi = vec![0.0; rows * len];
                for (row, (dst, src)) in gi.chunks_mut(len).zip(x.data().chunks(len)).enumerate() {
                    let nrm = saved[row];
                    if nrm > 0.0 {
                        let s = g[row] / nrm;
                        dst.iter_mut().zip(src).for_each(|(d, v)| *d = s * v);
                    }
                }
                vec![Some(gi)]
            },
        ))
    }

    fn softmax_impl(&self, axis: usize, log: bool) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::Param(format!(
                "softmax axis {axis} out of range for {:?}",
                self.shape()
            )));
        }
        let (outer, n, inner) = axis_split(self.shape(), axis);
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * n + k) * inner + i;
                let mx = (0..n).map(|k| x[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for k in 0..n {
                    z += (x[idx(k)] - mx).exp();
                }
                let lz = z.ln();
                for k in 0..n {
                    let s = x[idx(k)] - mx;
                    out[idx(k)] = if log { s - lz } else { s.exp() / z };
                }
            }
        }
        let y = Arc::new(out);
        let saved = y.clone();
        let op = if log { "log_softmax" } else { "softmax" };
        Ok(Tensor::from_op(
            y,
            self.shape().to_vec(),
            op,
            vec![self.clone()],
            move |g| {
                let mut gi = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |k: usize| (o * n + k) * inner + i;
                        if log {
                            // dx = g - softmax · Σ g
                            let gs: f64 = (0..n).map(|k| g[idx(k)]).sum();
                            for k in 0..n {
                                gi[idx(k)] = g[idx(k)] - saved[idx(k)].exp() * gs;
                            }
                        } else {
                            // dx = p ⊙ (g - Σ g p)
                            let dot: f64 = (0..n).map(|k| g[idx(k)] * saved[idx(k)]).sum();
                            for k in 0..n {
                                gi[idx(k)] = saved[idx(k)] * (g[idx(k)] - dot);
                            }
                        }
                    }
                }
                vec![Some(gi)]
            },
        ))
    }

    /// Numerically stable softmax along `axis` (max subtraction).
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        self.softmax_impl(axis, false)
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Tensor> {
        self.softmax_impl(axis, true)
    }

    /// Softmax over the channel axis of an `[N, C, H, W]` tensor.
    pub fn channel_softmax(&self) -> Result<Tensor> {
        self.check_nchw("channel_softmax")?;
        if self.shape()[1] < 2 {
            return Err(Error::Shape(
                "channel_softmax needs at least 2 channels".into(),
            ));
        }
        self.softmax(1)
    }

    pub(crate) fn check_nchw(&self, op: &str) -> Result<()> {
        if self.rank() != 4 {
            return Err(Error::Shape(format!(
                "{op} expects [N, C, H, W], got {:?}",
                self.shape()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    fn t(data: &[f64], shape: &[usize]) -> Tensor {
        Tensor::new(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn broadcasting_shapes() {
        assert_eq!(broadcast_shape(&[2, 1, 3], &[4, 1]).unwrap(), vec![2, 4, 3]);
        assert!(broadcast_shape(&[2, 3], &[4]).is_err());
        let a = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let b = t(&[10.0, 20.0], &[2, 1]);
        assert_eq!(
            a.add(&b).unwrap().data(),
            &[11.0, 12.0, 13.0, 24.0, 25.0, 26.0]
        );
    }

    #[test]
    fn broadcast_gradients_reduce() {
        let a = Tensor::param(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]).unwrap();
        let b = Tensor::param(vec![2.0, 3.0], &[2, 1]).unwrap();
        a.mul(&b).unwrap().sum().backward().unwrap();
        assert_eq!(b.grad().unwrap(), vec![6.0, 15.0]);
        assert_eq!(a.grad().unwrap(), vec![2.0, 2.0, 2.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn softmax_examples() {
        let p = t(&[0.0, 0.0], &[1, 2, 1, 1]).channel_softmax().unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        let p = t(&[1.0, 0.0], &[1, 2, 1, 1]).channel_softmax().unwrap();
        let z = 1f64.exp() + 1.0;
        assert!((p.data()[0] - 1f64.exp() / z).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / z).abs() < 1e-15);
        assert!(t(&[1.0], &[1, 1, 1, 1]).channel_softmax().is_err());
    }

    #[test]
    fn sum_axis_and_concat() {
        let a = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[1, 2, 3]);
        assert_eq!(a.sum_axis(1, false).unwrap().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(a.sum_axis(2, true).unwrap().shape(), &[1, 2, 1]);
        let b = t(&[7.0, 8.0, 9.0], &[1, 1, 3]);
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[1, 3, 3]);
        assert_eq!(&c.data()[6..], &[7.0, 8.0, 9.0]);
    }

    #[test]
    fn op_gradients_match_finite_differences() {
        let x0 = t(&[0.3, -1.2, 0.7, 2.1, -0.4, 1.1, 0.9, -0.8], &[2, 4]);
        let checks: Vec<(&str, Box<dyn Fn(&Tensor) -> Result<Tensor>>)> = vec![
            ("exp", Box::new(|x| Ok(x.exp().sum()))),
            ("abs_pow3", Box::new(|x| Ok(x.abs_pow(3.0).sum()))),
            ("softmax", Box::new(|x| Ok(x.softmax(1)?.mul(x)?.sum()))),
            (
                "log_softmax",
                Box::new(|x| Ok(x.log_softmax(0)?.mul(x)?.sum())),
            ),
            (
                "norm_last",
                Box::new(|x| Ok(x.norm_last()?.abs_pow(1.5).sum())),
            ),
            (
                "transpose_bmm",
                Box::new(|x| {
                    let a = x.reshape(&[1, 2, 4])?;
                    Ok(a.bmm(&a.transpose_last2()?)?.abs_pow(2.0).sum())
                }),
            ),
            (
                "div",
                Box::new(|x| Ok(x.div(&x.abs().add_scalar(1.0))?.sum())),
            ),
            (
                "concat_narrow",
                Box::new(|x| {
                    let c = Tensor::concat(&[x, &x.scale(2.0)], 0)?;
                    Ok(c.narrow(1, 1, 2)?.exp().sum())
                }),
            ),
        ];
        for (name, f) in checks {
            let err = grad_check(|x| f(x), &x0, 1e-5).unwrap();
            assert!(err < 1e-6, "{name}: {err}");
        }
    }
}
