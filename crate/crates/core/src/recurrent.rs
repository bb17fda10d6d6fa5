//! Stacked (optionally bidirectional) LSTM with QMogrifier input gating.
//!
//! The mogrifier modulates each timestep's input by a sigmoid mask
//! computed from the previous hidden state concatenated with the leg's
//! normalised waiting-time and queue-length proxies, so congested legs
//! reshape what the recurrence gets to see.

use crate::queue::QueueProxies;
use crate::tensor::{Element, Tensor, TensorError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden: usize,
    pub layers: usize,
    pub bidirectional: bool,
    /// Applied between stacked layers during training only.
    pub dropout: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig { hidden: 256, layers: 2, bidirectional: false, dropout: 0.2 }
    }
}

/// One direction of one stacked layer. Gate order along the 4H axis is
/// input, forget, cell, output.
pub struct LstmLayerParams<E: Element> {
    pub w_ih: Tensor<E>, // in x 4H
    pub w_hh: Tensor<E>, // H x 4H
    pub b: Tensor<E>,    // 4H
    pub mog_w: Tensor<E>, // (H + 2) x in
    pub mog_b: Tensor<E>, // in
}

pub struct LstmParams<E: Element> {
    pub forward: Vec<LstmLayerParams<E>>,
    /// Empty unless bidirectional.
    pub backward: Vec<LstmLayerParams<E>>,
}

fn init_layer<E: Element>(
    in_features: usize,
    hidden: usize,
    rng: &mut ChaCha8Rng,
) -> LstmLayerParams<E> {
    let bound = 1.0 / (hidden as f64).sqrt();
    let mut draw = |shape: &[usize]| {
        let n: usize = shape.iter().product();
        let data: Vec<E> = (0..n).map(|_| E::of(rng.gen_range(-bound..bound))).collect();
        Tensor::from_vec(shape, data).expect("shape/data agree")
    };
    let w_ih = draw(&[in_features, 4 * hidden]);
    let w_hh = draw(&[hidden, 4 * hidden]);
    let mut b_data = vec![E::zero(); 4 * hidden];
    // Forget-gate bias starts at 1 so early training retains cell state.
    for v in &mut b_data[hidden..2 * hidden] {
        *v = E::one();
    }
    let b = Tensor::from_vec(&[4 * hidden], b_data).expect("bias shape");
    let mog_w = draw(&[hidden + 2, in_features]);
    let mog_b = Tensor::zeros(&[in_features]);
    LstmLayerParams { w_ih, w_hh, b, mog_w, mog_b }
}

impl<E: Element> LstmParams<E> {
    pub fn init(in_features: usize, cfg: &LstmConfig, rng: &mut ChaCha8Rng) -> Self {
        let dir_width = if cfg.bidirectional { 2 * cfg.hidden } else { cfg.hidden };
        let widths = |l: usize| if l == 0 { in_features } else { dir_width };
        let forward: Vec<_> =
            (0..cfg.layers).map(|l| init_layer(widths(l), cfg.hidden, rng)).collect();
        let backward = if cfg.bidirectional {
            (0..cfg.layers).map(|l| init_layer(widths(l), cfg.hidden, rng)).collect()
        } else {
            Vec::new()
        };
        LstmParams { forward, backward }
    }

    /// Stable names for the checkpoint registry.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        for (dir, layers) in [("fw", &self.forward), ("bw", &self.backward)] {
            for (l, p) in layers.iter().enumerate() {
                for (name, t) in [
                    ("w_ih", &p.w_ih),
                    ("w_hh", &p.w_hh),
                    ("b", &p.b),
                    ("mog_w", &p.mog_w),
                    ("mog_b", &p.mog_b),
                ] {
                    out.push((format!("{prefix}.{dir}{l}.{name}"), t.clone()));
                }
            }
        }
        out
    }
}

/// One LSTM step. `x` is B x in, `h`/`c` are B x H.
pub fn lstm_cell<E: Element>(
    x: &Tensor<E>,
    h: &Tensor<E>,
    c: &Tensor<E>,
    p: &LstmLayerParams<E>,
) -> Result<(Tensor<E>, Tensor<E>), TensorError> {
    let hidden = p.w_hh.shape()[0];
    let gates = x.matmul(&p.w_ih)?.add(&h.matmul(&p.w_hh)?)?.add(&p.b)?;
    let i = gates.narrow(1, 0, hidden)?.sigmoid();
    let f = gates.narrow(1, hidden, hidden)?.sigmoid();
    let g = gates.narrow(1, 2 * hidden, hidden)?.tanh();
    let o = gates.narrow(1, 3 * hidden, hidden)?.sigmoid();
    let c_next = f.mul(c)?.add(&i.mul(&g)?)?;
    let h_next = o.mul(&c_next.tanh())?;
    Ok((h_next, c_next))
}

/// QMogrifier mask: `x * sigmoid([h; W_n; L_n] W_m + b_m)` with the
/// proxies taken at the current timestep (B each).
pub fn qmogrifier_step<E: Element>(
    x: &Tensor<E>,
    h: &Tensor<E>,
    w_t: &Tensor<E>,
    l_t: &Tensor<E>,
    p: &LstmLayerParams<E>,
) -> Result<Tensor<E>, TensorError> {
    let b = x.shape()[0];
    let joined = Tensor::concat(
        &[h.clone(), w_t.reshape(&[b, 1])?, l_t.reshape(&[b, 1])?],
        1,
    )?;
    let mask = joined.matmul(&p.mog_w)?.add(&p.mog_b)?.sigmoid();
    mask.mul(x)
}

/// Inverted dropout; identity outside training.
pub fn dropout<E: Element>(
    x: &Tensor<E>,
    p: f64,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<E>, TensorError> {
    if !training || p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let scale = E::of(1.0 / keep);
    let mask: Vec<E> = (0..x.len())
        .map(|_| if rng.gen_range(0.0..1.0) < keep { scale } else { E::zero() })
        .collect();
    let mask = Tensor::from_vec(&x.shape(), mask)?;
    x.mul(&mask)
}

fn run_direction<E: Element>(
    seq: &Tensor<E>,
    proxies: Option<&QueueProxies<E>>,
    p: &LstmLayerParams<E>,
    hidden: usize,
    reverse: bool,
) -> Result<(Vec<Tensor<E>>, Tensor<E>), TensorError> {
    let shape = seq.shape();
    let (b, s) = (shape[0], shape[1]);
    let mut h = Tensor::zeros(&[b, hidden]);
    let mut c = Tensor::zeros(&[b, hidden]);
    let mut outputs = vec![None; s];
    let order: Vec<usize> = if reverse { (0..s).rev().collect() } else { (0..s).collect() };
    for t in order {
        let x_t = seq.select(1, t)?;
        let x_t = match proxies {
            Some(q) => {
                let w_t = q.w_n.select(1, t)?;
                let l_t = q.l_n.select(1, t)?;
                qmogrifier_step(&x_t, &h, &w_t, &l_t, p)?
            }
            None => x_t,
        };
        let (h_next, c_next) = lstm_cell(&x_t, &h, &c, p)?;
        h = h_next;
        c = c_next;
        outputs[t] = Some(h.clone());
    }
    let outputs = outputs.into_iter().map(|o| o.expect("every step visited")).collect();
    Ok((outputs, h))
}

/// Run the full stack over a B x S x C sequence. Returns the last
/// layer's final hidden state: B x H, or B x 2H when bidirectional
/// (forward final next to backward final).
///
/// `proxies` enables the mogrifier; pass `None` for plain LSTM layers.
pub fn run_stack<E: Element>(
    seq: &Tensor<E>,
    proxies: Option<&QueueProxies<E>>,
    params: &LstmParams<E>,
    cfg: &LstmConfig,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<E>, TensorError> {
    let shape = seq.shape();
    if shape.len() != 3 {
        return Err(TensorError::InvalidShape { shape: shape.clone(), len: seq.len() });
    }
    let (b, s) = (shape[0], shape[1]);
    let mut layer_in = seq.clone();
    let mut final_hidden = Tensor::zeros(&[b, cfg.hidden]);
    for l in 0..cfg.layers {
        let (fw_seq, fw_h) =
            run_direction(&layer_in, proxies, &params.forward[l], cfg.hidden, false)?;
        let (mut step_outs, finals) = if cfg.bidirectional {
            let (bw_seq, bw_h) =
                run_direction(&layer_in, proxies, &params.backward[l], cfg.hidden, true)?;
            let joined: Result<Vec<_>, _> = fw_seq
                .iter()
                .zip(&bw_seq)
                .map(|(f, bk)| Tensor::concat(&[f.clone(), bk.clone()], 1))
                .collect();
            (joined?, Tensor::concat(&[fw_h, bw_h], 1)?)
        } else {
            (fw_seq, fw_h)
        };
        final_hidden = finals;
        if l + 1 < cfg.layers {
            // Rebuild B x S x width for the next layer, with dropout.
            let width = step_outs[0].shape()[1];
            for t in step_outs.iter_mut() {
                *t = t.reshape(&[b, 1, width])?;
            }
            let stacked = Tensor::concat(&step_outs, 1)?;
            debug_assert_eq!(stacked.shape(), vec![b, s, width]);
            layer_in = dropout(&stacked, cfg.dropout, training, rng)?;
        }
    }
    Ok(final_hidden)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::random_tensor;
    use rand::SeedableRng;

    fn small_cfg(bidirectional: bool) -> LstmConfig {
        LstmConfig { hidden: 4, layers: 2, bidirectional, dropout: 0.0 }
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let cfg = small_cfg(false);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = LstmParams::<f64>::init(3, &cfg, &mut rng);
        for p in &mut params.forward {
            p.w_ih = Tensor::zeros(&p.w_ih.shape());
            p.w_hh = Tensor::zeros(&p.w_hh.shape());
            p.b = Tensor::zeros(&p.b.shape());
        }
        let seq = random_tensor::<f64>(&[2, 3, 3], &mut rng);
        let h = run_stack(&seq, None, &params, &cfg, false, &mut rng).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_depends_on_sequence_order() {
        let cfg = small_cfg(false);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = LstmParams::<f64>::init(3, &cfg, &mut rng);
        let seq = random_tensor::<f64>(&[1, 3, 3], &mut rng);
        let mut flipped = seq.data();
        flipped.rotate_left(3); // move leg 0 to the end
        let flipped = Tensor::from_vec(&[1, 3, 3], flipped).unwrap();
        let a = run_stack(&seq, None, &params, &cfg, false, &mut rng).unwrap();
        let b = run_stack(&flipped, None, &params, &cfg, false, &mut rng).unwrap();
        assert_ne!(a.data(), b.data());
    }

    #[test]
    fn bidirectional_doubles_width() {
        let cfg = small_cfg(true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = LstmParams::<f64>::init(3, &cfg, &mut rng);
        let seq = random_tensor::<f64>(&[2, 3, 3], &mut rng);
        let h = run_stack(&seq, None, &params, &cfg, false, &mut rng).unwrap();
        assert_eq!(h.shape(), vec![2, 2 * cfg.hidden]);
    }

    #[test]
    fn mogrifier_reacts_to_proxies() {
        let cfg = small_cfg(false);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = LstmParams::<f64>::init(3, &cfg, &mut rng);
        let seq = random_tensor::<f64>(&[2, 3, 3], &mut rng);
        let calm = QueueProxies { w_n: Tensor::zeros(&[2, 3]), l_n: Tensor::zeros(&[2, 3]) };
        let busy = QueueProxies {
            w_n: Tensor::full(&[2, 3], 1.0),
            l_n: Tensor::full(&[2, 3], 1.0),
        };
        let a = run_stack(&seq, Some(&calm), &params, &cfg, false, &mut rng).unwrap();
        let b = run_stack(&seq, Some(&busy), &params, &cfg, false, &mut rng).unwrap();
        assert_ne!(a.data(), b.data());
    }

    #[test]
    fn mogrifier_zero_weights_halve_input() {
        // sigma(0) = 0.5, so a zeroed mogrifier equals scaling x by 0.5.
        let cfg = LstmConfig { hidden: 4, layers: 1, bidirectional: false, dropout: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = LstmParams::<f64>::init(3, &cfg, &mut rng);
        params.forward[0].mog_w = Tensor::zeros(&[cfg.hidden + 2, 3]);
        let seq = random_tensor::<f64>(&[1, 3, 3], &mut rng);
        let q = QueueProxies { w_n: Tensor::zeros(&[1, 3]), l_n: Tensor::zeros(&[1, 3]) };
        let gated = run_stack(&seq, Some(&q), &params, &cfg, false, &mut rng).unwrap();
        let halved = Tensor::from_vec(&[1, 3, 3], seq.data().iter().map(|v| v * 0.5).collect())
            .unwrap();
        let plain = run_stack(&halved, None, &params, &cfg, false, &mut rng).unwrap();
        for (a, b) in gated.data().iter().zip(plain.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_eval_is_identity_and_training_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_tensor::<f64>(&[4, 5], &mut rng);
        let eval = dropout(&x, 0.5, false, &mut rng).unwrap();
        assert_eq!(eval.data(), x.data());
        let a = dropout(&x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = dropout(&x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().any(|&v| v == 0.0));
        assert!(a.data().iter().any(|&v| v != 0.0));
    }
}
