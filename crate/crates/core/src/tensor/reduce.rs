//! Axis reductions. Max/min route the gradient to the first occurrence
//! of the extreme element.

use super::{Element, Tensor, TensorError};

enum Kind {
    Sum,
    Mean,
    Max,
    Min,
}

impl<E: Element> Tensor<E> {
    fn reduce(&self, axis: usize, keepdim: bool, kind: Kind) -> Result<Tensor<E>, TensorError> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange { axis, rank: shape.len() });
        }
        let outer: usize = shape[..axis].iter().product();
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let data = self.data();
        let n_out = outer * inner;
        let mut out = vec![E::zero(); n_out];
        let mut args = vec![0usize; n_out]; // arg-extreme, used by max/min
        for o in 0..outer {
            for i in 0..inner {
                let oi = o * inner + i;
                match kind {
                    Kind::Sum | Kind::Mean => {
                        let mut acc = E::zero();
                        for a in 0..axis_len {
                            acc = acc + data[(o * axis_len + a) * inner + i];
                        }
                        out[oi] = match kind {
                            Kind::Mean => acc / E::of(axis_len as f64),
                            _ => acc,
                        };
                    }
                    Kind::Max | Kind::Min => {
                        let mut best = data[(o * axis_len) * inner + i];
                        let mut arg = 0usize;
                        for a in 1..axis_len {
                            let v = data[(o * axis_len + a) * inner + i];
                            let better = match kind {
                                Kind::Max => v > best,
                                _ => v < best,
                            };
                            if better {
                                best = v;
                                arg = a;
                            }
                        }
                        out[oi] = best;
                        args[oi] = arg;
                    }
                }
            }
        }
        let mut out_shape = shape.clone();
        if keepdim {
            out_shape[axis] = 1;
        } else {
            out_shape.remove(axis);
            if out_shape.is_empty() {
                out_shape.push(1);
            }
        }
        let x_t = self.clone();
        let total = self.len();
        let scale = match kind {
            Kind::Mean => E::one() / E::of(axis_len as f64),
            _ => E::one(),
        };
        let routed = matches!(kind, Kind::Max | Kind::Min);
        Ok(Tensor::from_op(out_shape, out, vec![self.clone()], move |gout| {
            let mut g = vec![E::zero(); total];
            for o in 0..outer {
                for i in 0..inner {
                    let oi = o * inner + i;
                    if routed {
                        let a = args[oi];
                        let xi = (o * axis_len + a) * inner + i;
                        g[xi] = g[xi] + gout[oi];
                    } else {
                        for a in 0..axis_len {
                            let xi = (o * axis_len + a) * inner + i;
                            g[xi] = g[xi] + gout[oi] * scale;
                        }
                    }
                }
            }
            x_t.accumulate_grad(&g);
        }))
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<E>, TensorError> {
        self.reduce(axis, keepdim, Kind::Sum)
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<E>, TensorError> {
        self.reduce(axis, keepdim, Kind::Mean)
    }

    pub fn max_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<E>, TensorError> {
        self.reduce(axis, keepdim, Kind::Max)
    }

    pub fn min_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<E>, TensorError> {
        self.reduce(axis, keepdim, Kind::Min)
    }

    /// Mean over the sequence (last) axis, dropping it.
    pub fn global_avg_pool(&self) -> Result<Tensor<E>, TensorError> {
        let rank = self.rank();
        self.mean_axis(rank - 1, false)
    }

    pub fn sum_all(&self) -> Tensor<E> {
        let mut t = self.reshape(&[self.len()]).expect("flatten");
        t = t.sum_axis(0, false).expect("axis 0");
        t
    }

    pub fn mean_all(&self) -> Tensor<E> {
        let n = self.len();
        self.sum_all().mul_scalar(E::one() / E::of(n as f64))
    }
}
