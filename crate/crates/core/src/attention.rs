//! Attention operators over B x C x S feature maps: CBAM's sequential
//! channel/spatial gates, parameter-free SimAM, and the queue-aware
//! QT-SimAM whose energy is biased by chain-average workload proxies.

use crate::tensor::{Element, Tensor, TensorError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionConfig {
    /// CBAM channel-MLP bottleneck ratio.
    pub cbam_reduction: usize,
    pub cbam_spatial_kernel: usize,
    /// SimAM energy regulariser.
    pub simam_lambda: f64,
    /// Constant shift in the queue-aware energy.
    pub qt_eps: f64,
    /// Coefficient on the chain-average queue length.
    pub qt_lq_weight: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            cbam_reduction: 8,
            cbam_spatial_kernel: 3,
            simam_lambda: 1e-4,
            qt_eps: 1e-4,
            qt_lq_weight: 0.5,
        }
    }
}

/// Learnable CBAM parameters: a shared two-layer channel MLP and the
/// spatial conv over the [channel-mean; channel-max] pair.
pub struct CbamParams<E: Element> {
    pub mlp_w1: Tensor<E>, // C x H
    pub mlp_b1: Tensor<E>, // H
    pub mlp_w2: Tensor<E>, // H x C
    pub mlp_b2: Tensor<E>, // C
    pub spatial_w: Tensor<E>, // 1 x 2 x k
    pub spatial_b: Tensor<E>, // 1
}

impl<E: Element> CbamParams<E> {
    pub fn hidden_width(channels: usize, reduction: usize) -> usize {
        (channels / reduction.max(1)).max(1)
    }

    pub fn tensors(&self) -> Vec<(&'static str, Tensor<E>)> {
        vec![
            ("mlp_w1", self.mlp_w1.clone()),
            ("mlp_b1", self.mlp_b1.clone()),
            ("mlp_w2", self.mlp_w2.clone()),
            ("mlp_b2", self.mlp_b2.clone()),
            ("spatial_w", self.spatial_w.clone()),
            ("spatial_b", self.spatial_b.clone()),
        ]
    }
}

/// Sequential channel-then-spatial gating (both sigmoid masks).
pub fn cbam<E: Element>(
    z: &Tensor<E>,
    params: &CbamParams<E>,
    cfg: &AttentionConfig,
) -> Result<Tensor<E>, TensorError> {
    let shape = z.shape();
    let (b, c) = (shape[0], shape[1]);
    let avg = z.mean_axis(2, false)?; // B x C
    let max = z.max_axis(2, false)?;
    let mlp = |v: &Tensor<E>| -> Result<Tensor<E>, TensorError> {
        let h = v.matmul(&params.mlp_w1)?.add(&params.mlp_b1)?.relu();
        h.matmul(&params.mlp_w2)?.add(&params.mlp_b2)
    };
    let m_c = mlp(&avg)?.add(&mlp(&max)?)?.sigmoid().reshape(&[b, c, 1])?;
    let gated = m_c.mul(z)?;
    let ch_mean = gated.mean_axis(1, true)?; // B x 1 x S
    let ch_max = gated.max_axis(1, true)?;
    let stacked = Tensor::concat(&[ch_mean, ch_max], 1)?; // B x 2 x S
    let pad = (cfg.cbam_spatial_kernel - 1) / 2;
    let m_s = stacked.conv1d(&params.spatial_w, &params.spatial_b, pad)?.sigmoid();
    m_s.mul(&gated)
}

/// Per-neuron energy `(x - mu)^2 / (4 (var + lambda)) + 0.5` with
/// channel statistics taken over the sequence axis of each sample.
fn simam_energy<E: Element>(z: &Tensor<E>, lambda: E) -> Result<Tensor<E>, TensorError> {
    let mu = z.mean_axis(2, true)?;
    let dev = z.sub(&mu)?;
    let var = dev.square().mean_axis(2, true)?; // population variance, divisor S
    let denom = var.add_scalar(lambda).mul_scalar(E::of(4.0));
    Ok(dev.square().mul(&denom.recip())?.add_scalar(E::of(0.5)))
}

/// Parameter-free attention: `sigmoid(energy) * z`.
pub fn simam<E: Element>(z: &Tensor<E>, lambda: E) -> Result<Tensor<E>, TensorError> {
    Ok(simam_energy(z, lambda)?.sigmoid().mul(z)?)
}

/// Queue-aware SimAM: the per-sample scalar `W_bar + w_l * L_bar + eps`
/// shifts every neuron's energy before the sigmoid mask.
pub fn qt_simam<E: Element>(
    z: &Tensor<E>,
    w_bar: &Tensor<E>,
    l_bar: &Tensor<E>,
    cfg: &AttentionConfig,
) -> Result<Tensor<E>, TensorError> {
    let shape = z.shape();
    let b = shape[0];
    if w_bar.len() != b || l_bar.len() != b {
        return Err(TensorError::ShapeMismatch { expected: vec![b], got: w_bar.shape() });
    }
    let bias = w_bar
        .add(&l_bar.mul_scalar(E::of(cfg.qt_lq_weight)))?
        .add_scalar(E::of(cfg.qt_eps))
        .reshape(&[b, 1, 1])?;
    let energy = simam_energy(z, E::of(cfg.simam_lambda))?;
    energy.add(&bias)?.sigmoid().mul(z)
}
