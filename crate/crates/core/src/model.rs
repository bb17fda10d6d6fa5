//! The three assembled architectures. Every model is a conv stem over
//! B x p x S chains followed by an attention operator per stage:
//!
//! - `cbam_cnn`: conv/CBAM stages, global average pool, linear head
//! - `simam_cnn_lstm`: conv/SimAM stages, LSTM stack, linear head
//! - `qtsim` / `qtsim_bidir`: conv/QT-SimAM stages biased by chain-mean
//!   queue proxies, QMogrifier LSTM stack gated by per-leg proxies
//!
//! Feature standardisation (mean/std fitted on the training split) lives
//! inside the model so checkpoints are self-contained; the queue layer
//! always reads the raw, unstandardised columns.

use crate::attention::{cbam, qt_simam, simam, AttentionConfig, CbamParams};
use crate::chains::ChainDataset;
use crate::data::DataError;
use crate::queue::{residual_delay, resolve_columns, QueueConfig, QueueProxies};
use crate::recurrent::{dropout, run_stack, LstmConfig, LstmParams};
use crate::tensor::{load_tensors, save_tensors, Element, Tensor, TensorError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

pub const N_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    CbamCnn,
    SimamCnnLstm,
    Qtsim,
    QtsimBidir,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::CbamCnn => "cbam_cnn",
            ModelKind::SimamCnnLstm => "simam_cnn_lstm",
            ModelKind::Qtsim => "qtsim",
            ModelKind::QtsimBidir => "qtsim_bidir",
        }
    }

    pub fn uses_queue(&self) -> bool {
        matches!(self, ModelKind::Qtsim | ModelKind::QtsimBidir)
    }

    pub fn uses_lstm(&self) -> bool {
        !matches!(self, ModelKind::CbamCnn)
    }
}

impl FromStr for ModelKind {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cbam_cnn" => Ok(ModelKind::CbamCnn),
            "simam_cnn_lstm" => Ok(ModelKind::SimamCnnLstm),
            "qtsim" => Ok(ModelKind::Qtsim),
            "qtsim_bidir" => Ok(ModelKind::QtsimBidir),
            other => Err(DataError::Config(format!(
                "unknown model kind {other:?}; expected cbam_cnn, simam_cnn_lstm, qtsim, or qtsim_bidir"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub lstm: LstmConfig,
    pub attention: AttentionConfig,
    pub queue: QueueConfig,
    /// Append a smoothed-hinge congestion channel to the input features.
    pub use_softmp: bool,
    pub softmp_tau: f64,
    /// Emit a residual-delay regression head alongside the logits.
    pub aux_delay_head: bool,
    /// QMogrifier gating in the recurrent stack (queue-aware kinds only).
    pub mogrify: bool,
    pub n_features: usize,
    pub feature_names: Vec<String>,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, n_features: usize, feature_names: Vec<String>) -> Self {
        let mut lstm = LstmConfig::default();
        lstm.bidirectional = kind == ModelKind::QtsimBidir;
        ModelConfig {
            kind,
            conv_channels: vec![64, 128, 256],
            conv_kernel: 3,
            lstm,
            attention: AttentionConfig::default(),
            queue: QueueConfig::default(),
            use_softmp: false,
            softmp_tau: 1.0,
            aux_delay_head: false,
            mogrify: true,
            n_features,
            feature_names,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.conv_channels.is_empty() {
            return Err(DataError::Config("conv_channels must be non-empty".into()));
        }
        if self.conv_kernel == 0 || self.conv_kernel % 2 == 0 {
            return Err(DataError::Config("conv_kernel must be odd and positive".into()));
        }
        if self.use_softmp && self.softmp_tau <= 0.0 {
            return Err(DataError::Config("softmp_tau must be positive".into()));
        }
        if self.n_features != self.feature_names.len() {
            return Err(DataError::Config(format!(
                "n_features {} disagrees with {} feature names",
                self.n_features,
                self.feature_names.len()
            )));
        }
        if !(0.0..1.0).contains(&self.lstm.dropout) {
            return Err(DataError::Config("dropout must lie in [0, 1)".into()));
        }
        if self.lstm.hidden == 0 || self.lstm.layers == 0 {
            return Err(DataError::Config("lstm hidden and layers must be positive".into()));
        }
        self.queue.validate()?;
        if self.kind.uses_queue() || self.use_softmp {
            resolve_columns(&self.feature_names)?;
        }
        Ok(())
    }

    /// Width seen by the first conv stage.
    fn conv_in(&self) -> usize {
        self.n_features + usize::from(self.use_softmp)
    }

    fn classifier_in(&self) -> usize {
        if self.kind.uses_lstm() {
            if self.lstm.bidirectional { 2 * self.lstm.hidden } else { self.lstm.hidden }
        } else {
            *self.conv_channels.last().expect("validated non-empty")
        }
    }
}

/// Smoothed hinge `tau * ln(1 + exp(v / tau))`; approaches `max(v, 0)`
/// as `tau` shrinks.
pub fn soft_max_plus<E: Element>(v: &Tensor<E>, tau: f64) -> Result<Tensor<E>, DataError> {
    if tau <= 0.0 {
        return Err(DataError::Config("soft_max_plus temperature must be positive".into()));
    }
    Ok(v.softplus_scaled(E::of(tau)))
}

struct ConvStage<E: Element> {
    w: Tensor<E>, // C_out x C_in x k
    b: Tensor<E>, // C_out
}

pub struct Model<E: Element> {
    pub config: ModelConfig,
    conv: Vec<ConvStage<E>>,
    cbam: Vec<CbamParams<E>>,
    lstm: Option<LstmParams<E>>,
    cls_w: Tensor<E>,
    cls_b: Tensor<E>,
    aux_w: Option<Tensor<E>>,
    aux_b: Option<Tensor<E>>,
    /// Non-trainable standardisation stats over the raw features.
    feat_mean: Tensor<E>,
    feat_std: Tensor<E>,
}

pub struct ModelOutput<E: Element> {
    pub logits: Tensor<E>,
    /// Residual-delay regression, present when `aux_delay_head` is set.
    pub aux_delay: Option<Tensor<E>>,
}

fn uniform<E: Element>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<E> {
    let n: usize = shape.iter().product();
    let data: Vec<E> = (0..n).map(|_| E::of(rng.gen_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data).expect("shape/data agree")
}

impl<E: Element> Model<E> {
    pub fn init(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self, DataError> {
        config.validate()?;
        let k = config.conv_kernel;
        let mut conv = Vec::new();
        let mut cbam = Vec::new();
        let mut in_ch = config.conv_in();
        for &out_ch in &config.conv_channels {
            let bound = 1.0 / ((in_ch * k) as f64).sqrt();
            conv.push(ConvStage {
                w: uniform(&[out_ch, in_ch, k], bound, rng),
                b: Tensor::zeros(&[out_ch]),
            });
            if config.kind == ModelKind::CbamCnn {
                let h = CbamParams::<E>::hidden_width(out_ch, config.attention.cbam_reduction);
                let mb = 1.0 / (out_ch as f64).sqrt();
                cbam.push(CbamParams {
                    mlp_w1: uniform(&[out_ch, h], mb, rng),
                    mlp_b1: Tensor::zeros(&[h]),
                    mlp_w2: uniform(&[h, out_ch], mb, rng),
                    mlp_b2: Tensor::zeros(&[out_ch]),
                    spatial_w: uniform(
                        &[1, 2, config.attention.cbam_spatial_kernel],
                        1.0 / (2.0 * config.attention.cbam_spatial_kernel as f64).sqrt(),
                        rng,
                    ),
                    spatial_b: Tensor::zeros(&[1]),
                });
            }
            in_ch = out_ch;
        }
        let lstm = if config.kind.uses_lstm() {
            Some(LstmParams::init(in_ch, &config.lstm, rng))
        } else {
            None
        };
        let cls_in = config.classifier_in();
        let cb = 1.0 / (cls_in as f64).sqrt();
        let cls_w = uniform(&[cls_in, N_CLASSES], cb, rng);
        let cls_b = Tensor::zeros(&[N_CLASSES]);
        let (aux_w, aux_b) = if config.aux_delay_head {
            (Some(uniform(&[cls_in, 1], cb, rng)), Some(Tensor::zeros(&[1])))
        } else {
            (None, None)
        };
        let p = config.n_features;
        Ok(Model {
            config,
            conv,
            cbam,
            lstm,
            cls_w,
            cls_b,
            aux_w,
            aux_b,
            feat_mean: Tensor::zeros(&[p]),
            feat_std: Tensor::full(&[p], E::one()),
        })
    }

    /// Fit per-feature mean/std over every leg of the training split.
    /// Stds are floored at 1e-6 so constant columns stay finite.
    pub fn fit_feature_stats(&mut self, train: &ChainDataset) -> Result<(), DataError> {
        let p = self.config.n_features;
        if train.n_features != p {
            return Err(DataError::Schema(format!(
                "dataset has {} features but model expects {p}",
                train.n_features
            )));
        }
        let rows = train.x.len() / p.max(1);
        if rows == 0 {
            return Err(DataError::Data("cannot fit feature stats on an empty set".into()));
        }
        let mut mean = vec![0.0f64; p];
        for row in train.x.chunks(p) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += *v as f64;
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        let mut var = vec![0.0f64; p];
        for row in train.x.chunks(p) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = *v as f64 - m;
                *s += d * d;
            }
        }
        let std: Vec<E> =
            var.iter().map(|s| E::of((s / rows as f64).sqrt().max(1e-6))).collect();
        self.feat_mean.set_data(mean.into_iter().map(E::of).collect()).map_err(io_wrap)?;
        self.feat_std.set_data(std).map_err(io_wrap)?;
        Ok(())
    }

    /// Trainable tensors in a stable order, flagged `requires_grad`.
    pub fn parameters(&self) -> Vec<Tensor<E>> {
        self.named_tensors()
            .into_iter()
            .filter(|(n, _)| !n.starts_with("feature_"))
            .map(|(_, t)| t.requires_grad_())
            .collect()
    }

    /// Every tensor in the model, standardisation stats included.
    pub fn named_tensors(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        for (l, s) in self.conv.iter().enumerate() {
            out.push((format!("conv{l}.w"), s.w.clone()));
            out.push((format!("conv{l}.b"), s.b.clone()));
        }
        for (l, c) in self.cbam.iter().enumerate() {
            for (name, t) in c.tensors() {
                out.push((format!("cbam{l}.{name}"), t));
            }
        }
        if let Some(lstm) = &self.lstm {
            out.extend(lstm.named_tensors("lstm"));
        }
        out.push(("cls.w".into(), self.cls_w.clone()));
        out.push(("cls.b".into(), self.cls_b.clone()));
        if let (Some(w), Some(b)) = (&self.aux_w, &self.aux_b) {
            out.push(("aux.w".into(), w.clone()));
            out.push(("aux.b".into(), b.clone()));
        }
        out.push(("feature_mean".into(), self.feat_mean.clone()));
        out.push(("feature_std".into(), self.feat_std.clone()));
        out
    }

    fn queue_proxies(&self, x: &Tensor<E>) -> Result<QueueProxies<E>, DataError> {
        let (d_col, a_col) = resolve_columns(&self.config.feature_names)?;
        residual_delay(x, d_col, a_col, &self.config.queue).map_err(tensor_wrap)
    }

    /// Forward pass over a raw (unstandardised) B x S x p batch.
    pub fn forward(
        &self,
        x: &Tensor<E>,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<ModelOutput<E>, DataError> {
        let shape = x.shape();
        if shape.len() != 3 || shape[2] != self.config.n_features {
            return Err(DataError::Schema(format!(
                "input shape {shape:?} does not match {} features",
                self.config.n_features
            )));
        }
        let needs_queue = self.config.kind.uses_queue() || self.config.use_softmp;
        let proxies = if needs_queue { Some(self.queue_proxies(x)?) } else { None };

        let p = self.config.n_features;
        let mean = self.feat_mean.reshape(&[1, 1, p]).map_err(tensor_wrap)?;
        let inv_std = self.feat_std.reshape(&[1, 1, p]).map_err(tensor_wrap)?.recip();
        let mut feats =
            x.sub(&mean).map_err(tensor_wrap)?.mul(&inv_std).map_err(tensor_wrap)?;

        if self.config.use_softmp {
            let q = proxies.as_ref().expect("proxies computed when use_softmp");
            let load = q.w_n.mul(&q.l_n).map_err(tensor_wrap)?;
            let delta = soft_max_plus(&load, self.config.softmp_tau)?
                .reshape(&[shape[0], shape[1], 1])
                .map_err(tensor_wrap)?;
            feats = Tensor::concat(&[feats, delta], 2).map_err(tensor_wrap)?;
        }

        // Stage stack works in B x C x S layout.
        let mut z = feats.permute(&[0, 2, 1]).map_err(tensor_wrap)?;
        let pad = (self.config.conv_kernel - 1) / 2;
        let chain_means = match (&proxies, self.config.kind.uses_queue()) {
            (Some(q), true) => Some(q.chain_means().map_err(tensor_wrap)?),
            _ => None,
        };
        for (l, stage) in self.conv.iter().enumerate() {
            z = z.conv1d(&stage.w, &stage.b, pad).map_err(tensor_wrap)?;
            z = match self.config.kind {
                ModelKind::CbamCnn => {
                    cbam(&z, &self.cbam[l], &self.config.attention).map_err(tensor_wrap)?
                }
                ModelKind::SimamCnnLstm => {
                    simam(&z, E::of(self.config.attention.simam_lambda)).map_err(tensor_wrap)?
                }
                ModelKind::Qtsim | ModelKind::QtsimBidir => {
                    let (w_bar, l_bar) = chain_means.as_ref().expect("queue kinds have means");
                    qt_simam(&z, w_bar, l_bar, &self.config.attention).map_err(tensor_wrap)?
                }
            };
        }

        let hidden = if let Some(lstm) = &self.lstm {
            let seq = z.permute(&[0, 2, 1]).map_err(tensor_wrap)?; // B x S x C
            let gate = if self.config.kind.uses_queue() && self.config.mogrify {
                proxies.as_ref()
            } else {
                None
            };
            let h = run_stack(&seq, gate, lstm, &self.config.lstm, training, rng)
                .map_err(tensor_wrap)?;
            dropout(&h, self.config.lstm.dropout, training, rng).map_err(tensor_wrap)?
        } else {
            z.global_avg_pool().map_err(tensor_wrap)?
        };

        let logits = hidden
            .matmul(&self.cls_w)
            .map_err(tensor_wrap)?
            .add(&self.cls_b)
            .map_err(tensor_wrap)?;
        let aux_delay = match (&self.aux_w, &self.aux_b) {
            (Some(w), Some(b)) => Some(
                hidden.matmul(w).map_err(tensor_wrap)?.add(b).map_err(tensor_wrap)?,
            ),
            _ => None,
        };
        Ok(ModelOutput { logits, aux_delay })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let config = serde_json::to_value(&self.config)
            .map_err(|e| DataError::Data(format!("config serialisation: {e}")))?;
        let tensors: Vec<(String, Vec<usize>, Vec<f32>)> = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| {
                (n, t.shape(), t.data().iter().map(|v| v.as_f64() as f32).collect())
            })
            .collect();
        save_tensors(path, &tensors, Some(config)).map_err(tensor_wrap)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let ckpt = load_tensors(path).map_err(tensor_wrap)?;
        let config_value = ckpt
            .config
            .clone()
            .ok_or_else(|| DataError::Data("checkpoint lacks a model config".into()))?;
        let config: ModelConfig = serde_json::from_value(config_value)
            .map_err(|e| DataError::Data(format!("checkpoint config: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Model::init(config, &mut rng)?;
        for (name, tensor) in model.named_tensors() {
            let (shape, data) = ckpt.tensor(&name).ok_or_else(|| {
                DataError::Data(format!("checkpoint is missing tensor {name:?}"))
            })?;
            if shape != tensor.shape().as_slice() {
                return Err(DataError::Schema(format!(
                    "tensor {name:?} has shape {shape:?} in checkpoint but model expects {:?}",
                    tensor.shape()
                )));
            }
            tensor
                .set_data(data.iter().map(|&v| E::of(v as f64)).collect())
                .map_err(tensor_wrap)?;
        }
        Ok(model)
    }
}

use rand::SeedableRng;

fn tensor_wrap(e: TensorError) -> DataError {
    DataError::Data(format!("numeric: {e}"))
}

fn io_wrap(e: TensorError) -> DataError {
    DataError::Data(format!("{e}"))
}
