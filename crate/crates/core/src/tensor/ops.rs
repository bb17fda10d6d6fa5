//! Elementwise operations, broadcasting, and shape manipulation.
//!
//! Broadcasting follows right-aligned alignment where only size-1
//! dimensions (or a missing leading dimension) may expand. This covers
//! scalars and trailing-singleton masks; anything else is rejected.

use super::{Element, Tensor, TensorError};

/// Broadcast result shape, or an error when the shapes are incompatible.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>, TensorError> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(TensorError::BroadcastIncompatible { a: a.to_vec(), b: b.to_vec() });
        };
    }
    Ok(out)
}

/// Per-output-dimension strides into `src`, right-aligned against `out`.
/// Broadcast dimensions get stride 0.
fn bcast_strides(src: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let offset = rank - src.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1usize;
    for i in (0..src.len()).rev() {
        strides[offset + i] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    strides
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Maps each linear index of `out` to a linear index of `src`.
/// Identity (None) when the shapes already agree.
fn index_map(src: &[usize], out: &[usize]) -> Option<Vec<usize>> {
    if src == out {
        return None;
    }
    let n: usize = out.iter().product();
    let strides = bcast_strides(src, out);
    let out_strides = row_major_strides(out);
    let mut map = Vec::with_capacity(n);
    for lin in 0..n {
        let mut src_lin = 0usize;
        for d in 0..out.len() {
            let idx = (lin / out_strides[d]) % out[d];
            src_lin += idx * strides[d];
        }
        map.push(src_lin);
    }
    Some(map)
}

impl<E: Element> Tensor<E> {
    fn binary(
        &self,
        other: &Tensor<E>,
        f: impl Fn(E, E) -> E + 'static,
        dfa: impl Fn(E, E) -> E + 'static,
        dfb: impl Fn(E, E) -> E + 'static,
    ) -> Result<Tensor<E>, TensorError> {
        let sa = self.shape();
        let sb = other.shape();
        let out_shape = broadcast_shape(&sa, &sb)?;
        let map_a = index_map(&sa, &out_shape);
        let map_b = index_map(&sb, &out_shape);
        let da = self.data();
        let db = other.data();
        let n: usize = out_shape.iter().product();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let av = da[map_a.as_ref().map_or(i, |m| m[i])];
            let bv = db[map_b.as_ref().map_or(i, |m| m[i])];
            out.push(f(av, bv));
        }
        let (a_t, b_t) = (self.clone(), other.clone());
        Ok(Tensor::from_op(out_shape, out, vec![self.clone(), other.clone()], move |gout| {
            let da = a_t.data();
            let db = b_t.data();
            if a_t.requires_grad() {
                let mut ga = vec![E::zero(); da.len()];
                for (i, g) in gout.iter().enumerate() {
                    let ai = map_a.as_ref().map_or(i, |m| m[i]);
                    let bi = map_b.as_ref().map_or(i, |m| m[i]);
                    ga[ai] = ga[ai] + *g * dfa(da[ai], db[bi]);
                }
                a_t.accumulate_grad(&ga);
            }
            if b_t.requires_grad() {
                let mut gb = vec![E::zero(); db.len()];
                for (i, g) in gout.iter().enumerate() {
                    let ai = map_a.as_ref().map_or(i, |m| m[i]);
                    let bi = map_b.as_ref().map_or(i, |m| m[i]);
                    gb[bi] = gb[bi] + *g * dfb(da[ai], db[bi]);
                }
                b_t.accumulate_grad(&gb);
            }
        }))
    }

    /// Unary op; `df(x, y)` is dy/dx given input x and output y.
    fn unary(&self, f: impl Fn(E) -> E, df: impl Fn(E, E) -> E + 'static) -> Tensor<E> {
        let x = self.data();
        let y: Vec<E> = x.iter().map(|&v| f(v)).collect();
        let y_saved = y.clone();
        let x_t = self.clone();
        Tensor::from_op(self.shape(), y, vec![self.clone()], move |gout| {
            let x = x_t.data();
            let g: Vec<E> = gout
                .iter()
                .zip(x.iter().zip(y_saved.iter()))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            x_t.accumulate_grad(&g);
        })
    }

    pub fn add(&self, o: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        self.binary(o, |a, b| a + b, |_, _| E::one(), |_, _| E::one())
    }

    pub fn sub(&self, o: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        self.binary(o, |a, b| a - b, |_, _| E::one(), |_, _| -E::one())
    }

    pub fn mul(&self, o: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        self.binary(o, |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(&self, o: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        self.binary(o, |a, b| a / b, |_, b| E::one() / b, |a, b| -a / (b * b))
    }

    pub fn add_scalar(&self, c: E) -> Tensor<E> {
        self.unary(move |x| x + c, |_, _| E::one())
    }

    pub fn mul_scalar(&self, c: E) -> Tensor<E> {
        self.unary(move |x| x * c, move |_, _| c)
    }

    pub fn neg(&self) -> Tensor<E> {
        self.mul_scalar(-E::one())
    }

    pub fn relu(&self) -> Tensor<E> {
        self.unary(
            |x| if x > E::zero() { x } else { E::zero() },
            |x, _| if x > E::zero() { E::one() } else { E::zero() },
        )
    }

    pub fn sigmoid(&self) -> Tensor<E> {
        self.unary(sigmoid_scalar, |_, y| y * (E::one() - y))
    }

    pub fn tanh(&self) -> Tensor<E> {
        self.unary(|x| x.tanh(), |_, y| E::one() - y * y)
    }

    pub fn exp(&self) -> Tensor<E> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn log(&self) -> Tensor<E> {
        self.unary(|x| x.ln(), |x, _| E::one() / x)
    }

    pub fn recip(&self) -> Tensor<E> {
        self.unary(|x| E::one() / x, |x, _| -E::one() / (x * x))
    }

    pub fn square(&self) -> Tensor<E> {
        self.unary(|x| x * x, |x, _| E::of(2.0) * x)
    }

    /// min(x, c). Sub-gradient: passes gradient where x < c, zero elsewhere.
    pub fn clampmax(&self, c: E) -> Tensor<E> {
        self.unary(
            move |x| if x < c { x } else { c },
            move |x, _| if x < c { E::one() } else { E::zero() },
        )
    }

    /// Smooth hinge `tau * ln(1 + exp(v / tau))`, stabilised for large v.
    /// Gradient is `sigmoid(v / tau)`.
    pub fn softplus_scaled(&self, tau: E) -> Tensor<E> {
        self.unary(
            move |x| {
                let s = x / tau;
                if s > E::of(30.0) {
                    x
                } else {
                    tau * (E::one() + s.exp()).ln()
                }
            },
            move |x, _| sigmoid_scalar(x / tau),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<E>, TensorError> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(TensorError::InvalidShape { shape: shape.to_vec(), len: self.len() });
        }
        let x_t = self.clone();
        Ok(Tensor::from_op(shape.to_vec(), self.data(), vec![self.clone()], move |gout| {
            x_t.accumulate_grad(gout);
        }))
    }

    /// Reorder axes; `perm[i]` names the source axis placed at position `i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<E>, TensorError> {
        let shape = self.shape();
        let rank = shape.len();
        if perm.len() != rank || {
            let mut s: Vec<usize> = perm.to_vec();
            s.sort_unstable();
            s != (0..rank).collect::<Vec<_>>()
        } {
            return Err(TensorError::AxisOutOfRange {
                axis: *perm.iter().max().unwrap_or(&0),
                rank,
            });
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let src_strides = row_major_strides(&shape);
        let out_strides = row_major_strides(&out_shape);
        let n = self.len();
        let data = self.data();
        let mut fwd_map = vec![0usize; n]; // out lin -> src lin
        for lin in 0..n {
            let mut src = 0usize;
            for d in 0..rank {
                let idx = (lin / out_strides[d]) % out_shape[d];
                src += idx * src_strides[perm[d]];
            }
            fwd_map[lin] = src;
        }
        let out: Vec<E> = fwd_map.iter().map(|&s| data[s]).collect();
        let x_t = self.clone();
        Ok(Tensor::from_op(out_shape, out, vec![self.clone()], move |gout| {
            let mut g = vec![E::zero(); n];
            for (lin, &src) in fwd_map.iter().enumerate() {
                g[src] = g[src] + gout[lin];
            }
            x_t.accumulate_grad(&g);
        }))
    }

    /// Index one position along an axis, dropping that axis.
    pub fn select(&self, axis: usize, index: usize) -> Result<Tensor<E>, TensorError> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange { axis, rank: shape.len() });
        }
        if index >= shape[axis] {
            return Err(TensorError::IndexOutOfRange { index, axis, size: shape[axis] });
        }
        let outer: usize = shape[..axis].iter().product();
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let data = self.data();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * axis_len + index) * inner;
            out.extend_from_slice(&data[base..base + inner]);
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let x_t = self.clone();
        let total = self.len();
        Ok(Tensor::from_op(out_shape, out, vec![self.clone()], move |gout| {
            let mut g = vec![E::zero(); total];
            for o in 0..outer {
                let base = (o * axis_len + index) * inner;
                for i in 0..inner {
                    g[base + i] = gout[o * inner + i];
                }
            }
            x_t.accumulate_grad(&g);
        }))
    }

    /// Contiguous slice `[start, start+len)` along an axis.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<E>, TensorError> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange { axis, rank: shape.len() });
        }
        if start + len > shape[axis] {
            return Err(TensorError::IndexOutOfRange { index: start + len, axis, size: shape[axis] });
        }
        let outer: usize = shape[..axis].iter().product();
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let data = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * axis_len + start) * inner;
            out.extend_from_slice(&data[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let x_t = self.clone();
        let total = self.len();
        Ok(Tensor::from_op(out_shape, out, vec![self.clone()], move |gout| {
            let mut g = vec![E::zero(); total];
            for o in 0..outer {
                let base = (o * axis_len + start) * inner;
                let gbase = o * len * inner;
                for i in 0..len * inner {
                    g[base + i] = gout[gbase + i];
                }
            }
            x_t.accumulate_grad(&g);
        }))
    }

    /// Concatenate along an axis. All other dimensions must agree.
    pub fn concat(parts: &[Tensor<E>], axis: usize) -> Result<Tensor<E>, TensorError> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let first = parts[0].shape();
        if axis >= first.len() {
            return Err(TensorError::AxisOutOfRange { axis, rank: first.len() });
        }
        let mut axis_total = 0usize;
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s.iter().zip(first.iter()).enumerate().any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(TensorError::ShapeMismatch { expected: first.clone(), got: s });
            }
            axis_total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let datas: Vec<Vec<E>> = parts.iter().map(|p| p.data()).collect();
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let mut out = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for (pi, d) in datas.iter().enumerate() {
                let base = o * lens[pi] * inner;
                out.extend_from_slice(&d[base..base + lens[pi] * inner]);
            }
        }
        let owned: Vec<Tensor<E>> = parts.to_vec();
        let lens_bw = lens.clone();
        Ok(Tensor::from_op(out_shape, out, owned.clone(), move |gout| {
            let mut offsets = Vec::with_capacity(lens_bw.len());
            let mut acc = 0usize;
            for &l in &lens_bw {
                offsets.push(acc);
                acc = acc + l;
            }
            for (pi, p) in owned.iter().enumerate() {
                if !p.requires_grad() {
                    continue;
                }
                let l = lens_bw[pi];
                let mut g = vec![E::zero(); outer * l * inner];
                for o in 0..outer {
                    let gbase = (o * axis_total + offsets[pi]) * inner;
                    let pbase = o * l * inner;
                    for i in 0..l * inner {
                        g[pbase + i] = gout[gbase + i];
                    }
                }
                p.accumulate_grad(&g);
            }
        }))
    }
}

pub(crate) fn sigmoid_scalar<E: Element>(x: E) -> E {
    if x >= E::zero() {
        E::one() / (E::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_zero_is_half() {
        let t = Tensor::<f64>::scalar(0.0).sigmoid();
        assert_eq!(t.value(), 0.5);
    }

    #[test]
    fn clampmax_caps() {
        let t = Tensor::<f64>::from_vec(&[2], vec![1.5, 0.2]).unwrap().clampmax(0.99);
        assert_eq!(t.data(), vec![0.99, 0.2]);
    }

    #[test]
    fn broadcast_trailing_singleton() {
        let a = Tensor::<f64>::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let m = Tensor::<f64>::from_vec(&[2, 1], vec![10., 100.]).unwrap();
        let out = a.mul(&m).unwrap();
        assert_eq!(out.data(), vec![10., 20., 30., 400., 500., 600.]);
    }

    #[test]
    fn broadcast_incompatible_rejected() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 2]);
        assert!(matches!(a.add(&b), Err(TensorError::BroadcastIncompatible { .. })));
    }

    #[test]
    fn broadcast_backward_sums() {
        let a = Tensor::<f64>::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::<f64>::from_vec(&[1], vec![5.0]).unwrap().requires_grad_();
        let loss = a.mul(&b).unwrap().sum_all();
        loss.backward().unwrap();
        assert_eq!(b.grad().unwrap(), vec![10.0]); // sum of a
    }

    #[test]
    fn permute_roundtrip() {
        let a = Tensor::<f64>::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let t = a.permute(&[1, 0]).unwrap();
        assert_eq!(t.shape(), vec![3, 2]);
        assert_eq!(t.data(), vec![1., 4., 2., 5., 3., 6.]);
        let back = t.permute(&[1, 0]).unwrap();
        assert_eq!(back.data(), a.data());
    }

    #[test]
    fn select_and_concat() {
        let a = Tensor::<f64>::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let col = a.select(1, 2).unwrap();
        assert_eq!(col.shape(), vec![2]);
        assert_eq!(col.data(), vec![3., 6.]);
        let b = Tensor::<f64>::from_vec(&[2, 1], vec![7., 8.]).unwrap();
        let cat = Tensor::concat(&[a, b], 1).unwrap();
        assert_eq!(cat.shape(), vec![2, 4]);
        assert_eq!(cat.data(), vec![1., 2., 3., 7., 4., 5., 6., 8.]);
    }

    #[test]
    fn softplus_limits() {
        let v = Tensor::<f64>::scalar(0.0).softplus_scaled(1.0);
        assert!((v.value() - std::f64::consts::LN_2).abs() < 1e-12);
        let big = Tensor::<f64>::scalar(10.0).softplus_scaled(0.01);
        assert!((big.value() - 10.0).abs() < 1e-9);
    }
}
