//! M/M/1 residual-delay surrogates.
//!
//! Each leg's great-circle distance stands in for service time and its
//! planned airborne time for the inter-arrival rate. Utilisation is
//! capped below 1, the expected wait and queue length follow the M/M/1
//! formulas, and both channels are min-max normalised across the legs
//! of each chain. Every step is built from differentiable tape ops, so
//! gradients flow through the layer (the cap uses a sub-gradient).

use crate::data::DataError;
use crate::tensor::{Element, Tensor, TensorError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueueConfig {
    /// Service-time scale per km.
    pub k_s: f64,
    /// Arrival-rate scale.
    pub k_a: f64,
    pub eps: f64,
    pub rho_cap: f64,
}

impl Default for QueueConfig {
    fn default() -> Self {
        QueueConfig { k_s: 0.01, k_a: 1.0, eps: 1e-6, rho_cap: 0.99 }
    }
}

impl QueueConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.k_s <= 0.0 || self.k_a <= 0.0 || self.eps <= 0.0 {
            return Err(DataError::Config("queue scales and eps must be positive".into()));
        }
        if !(0.0 < self.rho_cap && self.rho_cap < 1.0) {
            return Err(DataError::Config("rho_cap must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Normalised waiting-time and queue-length channels, each B x S.
pub struct QueueProxies<E: Element> {
    pub w_n: Tensor<E>,
    pub l_n: Tensor<E>,
}

impl<E: Element> QueueProxies<E> {
    /// Chain averages (B) used to bias the attention energy.
    pub fn chain_means(&self) -> Result<(Tensor<E>, Tensor<E>), TensorError> {
        Ok((self.w_n.mean_axis(1, false)?, self.l_n.mean_axis(1, false)?))
    }
}

/// Locate the distance and airborne-time feature columns by name.
pub fn resolve_columns(feature_names: &[String]) -> Result<(usize, usize), DataError> {
    let find = |name: &str| {
        feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DataError::Config(format!("feature registry lacks column {name:?}")))
    };
    Ok((find("distance")?, find("scheduled_estimated_time")?))
}

/// The residual-delay layer over a B x S x p batch.
pub fn residual_delay<E: Element>(
    x: &Tensor<E>,
    distance_col: usize,
    airborne_col: usize,
    cfg: &QueueConfig,
) -> Result<QueueProxies<E>, TensorError> {
    let eps = E::of(cfg.eps);
    let d = x.select(2, distance_col)?; // B x S
    let a = x.select(2, airborne_col)?;
    let e_s = d.mul_scalar(E::of(cfg.k_s)).add_scalar(eps);
    let lambda = a.add_scalar(eps).recip().mul_scalar(E::of(cfg.k_a));
    let rho = lambda.mul(&e_s)?.clampmax(E::of(cfg.rho_cap));
    // W_q = rho * E_S / (1 - rho + eps); L_q = lambda * W_q
    let denom = rho.neg().add_scalar(E::one() + eps);
    let w_q = rho.mul(&e_s)?.mul(&denom.recip())?;
    let l_q = lambda.mul(&w_q)?;
    Ok(QueueProxies { w_n: minmax_normalise(&w_q, eps)?, l_n: minmax_normalise(&l_q, eps)? })
}

/// Per-sample min-max over the S axis with an eps-guarded denominator;
/// a constant chain maps to all zeros.
fn minmax_normalise<E: Element>(v: &Tensor<E>, eps: E) -> Result<Tensor<E>, TensorError> {
    let lo = v.min_axis(1, true)?;
    let hi = v.max_axis(1, true)?;
    let range = hi.sub(&lo)?.add_scalar(eps);
    v.sub(&lo)?.mul(&range.recip())
}
