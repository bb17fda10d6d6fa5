//! Adam with a classic L2 term folded into the gradient before the
//! moment update (not decoupled weight decay).

use super::{Element, Tensor, TensorError};

pub struct Adam<E: Element> {
    lr: E,
    weight_decay: E,
    beta1: E,
    beta2: E,
    eps: E,
    step: u64,
    moments: Vec<(Vec<E>, Vec<E>)>,
}

impl<E: Element> Adam<E> {
    pub fn new(lr: E, weight_decay: E) -> Self {
        Adam {
            lr,
            weight_decay,
            beta1: E::of(0.9),
            beta2: E::of(0.999),
            eps: E::of(1e-8),
            step: 0,
            moments: Vec::new(),
        }
    }

    /// One update over all parameters. Missing grads count as zero.
    pub fn step(&mut self, params: &[Tensor<E>]) -> Result<(), TensorError> {
        if self.moments.is_empty() {
            self.moments =
                params.iter().map(|p| (vec![E::zero(); p.len()], vec![E::zero(); p.len()])).collect();
        }
        if self.moments.len() != params.len() {
            return Err(TensorError::StateMismatch {
                index: self.moments.len().min(params.len()),
                state: self.moments.len(),
                param: params.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = E::one() - self.beta1.powi(t);
        let bc2 = E::one() - self.beta2.powi(t);
        for (i, p) in params.iter().enumerate() {
            let mut theta = p.data();
            if self.moments[i].0.len() != theta.len() {
                return Err(TensorError::StateMismatch {
                    index: i,
                    state: self.moments[i].0.len(),
                    param: theta.len(),
                });
            }
            let grad = p.grad().unwrap_or_else(|| vec![E::zero(); theta.len()]);
            let (m, v) = &mut self.moments[i];
            for j in 0..theta.len() {
                let g = grad[j] + self.weight_decay * theta[j];
                m[j] = self.beta1 * m[j] + (E::one() - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (E::one() - self.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                theta[j] = theta[j] - self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            p.set_data(theta)?;
        }
        Ok(())
    }
}
