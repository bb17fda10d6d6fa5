//! Softmax cross-entropy, stabilised by max-subtraction.

use super::{Element, Tensor, TensorError};

impl<E: Element> Tensor<E> {
    /// Mean over the batch of `-log softmax(logits)[label]`.
    /// Logits are B x K; labels index into the K classes.
    pub fn softmax_cross_entropy(&self, labels: &[usize]) -> Result<Tensor<E>, TensorError> {
        let shape = self.shape();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(TensorError::ShapeMismatch {
                expected: vec![labels.len(), shape.get(1).copied().unwrap_or(0)],
                got: shape,
            });
        }
        let (b, k) = (shape[0], shape[1]);
        for &l in labels {
            if l >= k {
                return Err(TensorError::LabelOutOfRange { label: l, classes: k });
            }
        }
        let data = self.data();
        let mut probs = vec![E::zero(); b * k];
        let mut loss = E::zero();
        for i in 0..b {
            let row = &data[i * k..(i + 1) * k];
            let mx = row.iter().cloned().fold(row[0], |a, v| if v > a { v } else { a });
            let mut denom = E::zero();
            for j in 0..k {
                let e = (row[j] - mx).exp();
                probs[i * k + j] = e;
                denom = denom + e;
            }
            for j in 0..k {
                probs[i * k + j] = probs[i * k + j] / denom;
            }
            loss = loss - probs[i * k + labels[i]].ln();
        }
        loss = loss / E::of(b as f64);
        let x_t = self.clone();
        let labels: Vec<usize> = labels.to_vec();
        Ok(Tensor::from_op(vec![1], vec![loss], vec![self.clone()], move |gout| {
            let g0 = gout[0] / E::of(b as f64);
            let mut g = vec![E::zero(); b * k];
            for i in 0..b {
                for j in 0..k {
                    let ind = if j == labels[i] { E::one() } else { E::zero() };
                    g[i * k + j] = g0 * (probs[i * k + j] - ind);
                }
            }
            x_t.accumulate_grad(&g);
        }))
    }
}
