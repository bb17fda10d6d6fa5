//! Matrix product and 1-D convolution with their backward rules.

use super::{Element, Tensor, TensorError};

/// C(m x n) = A(m x k) * B(k x n), plain row-major loops.
fn mm<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let mut c = vec![E::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == E::zero() {
                continue;
            }
            let row = &b[p * n..(p + 1) * n];
            let out = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                out[j] = out[j] + av * row[j];
            }
        }
    }
    c
}

fn transpose<E: Element>(a: &[E], rows: usize, cols: usize) -> Vec<E> {
    let mut t = vec![E::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

impl<E: Element> Tensor<E> {
    /// 2-D matrix product. Backward: dA = dC * B^T, dB = A^T * dC.
    pub fn matmul(&self, other: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        let sa = self.shape();
        let sb = other.shape();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::InnerDimMismatch { a: sa, b: sb });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = mm(&self.data(), &other.data(), m, k, n);
        let (a_t, b_t) = (self.clone(), other.clone());
        Ok(Tensor::from_op(vec![m, n], out, vec![self.clone(), other.clone()], move |gout| {
            if a_t.requires_grad() {
                let bt = transpose(&b_t.data(), k, n);
                a_t.accumulate_grad(&mm(gout, &bt, m, n, k));
            }
            if b_t.requires_grad() {
                let at = transpose(&a_t.data(), m, k);
                b_t.accumulate_grad(&mm(&at, gout, k, m, n));
            }
        }))
    }

    /// Cross-correlation over the last axis plus per-channel bias.
    /// x: B x C_in x S, w: C_out x C_in x k, b: C_out. With `padding`
    /// zeros on both ends the output length is S + 2*padding - k + 1.
    pub fn conv1d(
        &self,
        w: &Tensor<E>,
        b: &Tensor<E>,
        padding: usize,
    ) -> Result<Tensor<E>, TensorError> {
        let sx = self.shape();
        let sw = w.shape();
        if sx.len() != 3 || sw.len() != 3 {
            return Err(TensorError::ShapeMismatch { expected: vec![0, 0, 0], got: sx });
        }
        let (batch, c_in, s) = (sx[0], sx[1], sx[2]);
        let (c_out, wc_in, k) = (sw[0], sw[1], sw[2]);
        if wc_in != c_in {
            return Err(TensorError::ChannelMismatch { input: c_in, kernel: wc_in });
        }
        if b.shape() != vec![c_out] {
            return Err(TensorError::ShapeMismatch { expected: vec![c_out], got: b.shape() });
        }
        let s_out = s + 2 * padding + 1 - k;
        let xd = self.data();
        let wd = w.data();
        let bd = b.data();
        let mut out = vec![E::zero(); batch * c_out * s_out];
        for n in 0..batch {
            for co in 0..c_out {
                for t in 0..s_out {
                    let mut acc = bd[co];
                    for ci in 0..c_in {
                        for dk in 0..k {
                            let src = t + dk;
                            if src < padding || src >= padding + s {
                                continue;
                            }
                            acc = acc
                                + xd[(n * c_in + ci) * s + (src - padding)]
                                    * wd[(co * c_in + ci) * k + dk];
                        }
                    }
                    out[(n * c_out + co) * s_out + t] = acc;
                }
            }
        }
        let (x_t, w_t, b_t) = (self.clone(), w.clone(), b.clone());
        Ok(Tensor::from_op(
            vec![batch, c_out, s_out],
            out,
            vec![self.clone(), w.clone(), b.clone()],
            move |gout| {
                let xd = x_t.data();
                let wd = w_t.data();
                if x_t.requires_grad() {
                    let mut gx = vec![E::zero(); batch * c_in * s];
                    for n in 0..batch {
                        for co in 0..c_out {
                            for t in 0..s_out {
                                let g = gout[(n * c_out + co) * s_out + t];
                                for ci in 0..c_in {
                                    for dk in 0..k {
                                        let src = t + dk;
                                        if src < padding || src >= padding + s {
                                            continue;
                                        }
                                        let xi = (n * c_in + ci) * s + (src - padding);
                                        gx[xi] = gx[xi] + g * wd[(co * c_in + ci) * k + dk];
                                    }
                                }
                            }
                        }
                    }
                    x_t.accumulate_grad(&gx);
                }
                if w_t.requires_grad() {
                    let mut gw = vec![E::zero(); c_out * c_in * k];
                    for n in 0..batch {
                        for co in 0..c_out {
                            for t in 0..s_out {
                                let g = gout[(n * c_out + co) * s_out + t];
                                for ci in 0..c_in {
                                    for dk in 0..k {
                                        let src = t + dk;
                                        if src < padding || src >= padding + s {
                                            continue;
                                        }
                                        let wi = (co * c_in + ci) * k + dk;
                                        gw[wi] = gw[wi]
                                            + g * xd[(n * c_in + ci) * s + (src - padding)];
                                    }
                                }
                            }
                        }
                    }
                    w_t.accumulate_grad(&gw);
                }
                if b_t.requires_grad() {
                    let mut gb = vec![E::zero(); c_out];
                    for n in 0..batch {
                        for co in 0..c_out {
                            for t in 0..s_out {
                                gb[co] = gb[co] + gout[(n * c_out + co) * s_out + t];
                            }
                        }
                    }
                    b_t.accumulate_grad(&gb);
                }
            },
        ))
    }
}
