//! Finite-difference verification of every differentiable operation
//! and of each full architecture at tiny widths. All checks run in
//! 64-bit with a central h = 1e-5 stencil against a 1e-4 relative
//! tolerance; the oracle only ever calls the forward pass.

use qtflight_core::attention::{cbam, qt_simam, simam, AttentionConfig, CbamParams};
use qtflight_core::chains::ChainDataset;
use qtflight_core::gradcheck::{max_rel_err, max_rel_err_sampled, random_tensor};
use qtflight_core::model::{soft_max_plus, Model, ModelConfig, ModelKind};
use qtflight_core::queue::{residual_delay, QueueConfig};
use qtflight_core::recurrent::{lstm_cell, qmogrifier_step, run_stack, LstmConfig, LstmParams};
use qtflight_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const H: f64 = 1e-5;

fn assert_grad(name: &str, inputs: &[Tensor<f64>], f: impl Fn() -> Tensor<f64>) {
    for t in inputs {
        let _ = t.clone().requires_grad_();
    }
    let err = max_rel_err(inputs, f, H);
    assert!(err <= TOL, "{name}: max rel err {err:.3e} > {TOL:.0e}");
}

/// Random tensor kept away from zero so kinked ops (relu, abs-like)
/// never sit within h of their corner.
fn offset_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let t = random_tensor::<f64>(shape, rng);
    let data = t
        .data()
        .into_iter()
        .map(|v| if v >= 0.0 { v + 0.2 } else { v - 0.2 })
        .collect();
    Tensor::from_vec(shape, data).unwrap().requires_grad_()
}

#[test]
fn elementwise_binary_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = offset_tensor(&[3, 4], &mut rng);
    let b = offset_tensor(&[3, 4], &mut rng);
    assert_grad("add", &[a.clone(), b.clone()], || a.add(&b).unwrap().sum_all());
    assert_grad("sub", &[a.clone(), b.clone()], || a.sub(&b).unwrap().sum_all());
    assert_grad("mul", &[a.clone(), b.clone()], || a.mul(&b).unwrap().sum_all());
    assert_grad("div", &[a.clone(), b.clone()], || a.div(&b).unwrap().sum_all());
}

#[test]
fn broadcast_binary_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = offset_tensor(&[2, 3, 4], &mut rng);
    let b = offset_tensor(&[4], &mut rng);
    let c = offset_tensor(&[2, 1, 4], &mut rng);
    assert_grad("add broadcast", &[a.clone(), b.clone()], || a.add(&b).unwrap().sum_all());
    assert_grad("mul keepdim broadcast", &[a.clone(), c.clone()], || {
        a.mul(&c).unwrap().sum_all()
    });
}

#[test]
fn elementwise_unary_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = offset_tensor(&[3, 5], &mut rng);
    assert_grad("relu", &[x.clone()], || x.relu().sum_all());
    assert_grad("sigmoid", &[x.clone()], || x.sigmoid().sum_all());
    assert_grad("tanh", &[x.clone()], || x.tanh().sum_all());
    assert_grad("exp", &[x.clone()], || x.exp().sum_all());
    assert_grad("square", &[x.clone()], || x.square().sum_all());
    assert_grad("recip", &[x.clone()], || x.recip().sum_all());
    assert_grad("neg", &[x.clone()], || x.neg().sum_all());
    assert_grad("softplus", &[x.clone()], || x.softplus_scaled(0.7).sum_all());
    let pos = x.square().add_scalar(0.1);
    let leaf = Tensor::from_vec(&[3, 5], pos.data()).unwrap().requires_grad_();
    assert_grad("log", &[leaf.clone()], || leaf.log().sum_all());
    // Clamp checked away from its boundary.
    assert_grad("clampmax", &[x.clone()], || x.clampmax(0.05).sum_all());
}

#[test]
fn soft_max_plus_gradient_is_sigmoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = offset_tensor(&[6], &mut rng);
    assert_grad("soft_max_plus", &[x.clone()], || {
        soft_max_plus(&x, 0.5).unwrap().sum_all()
    });
    // Analytic slope sigma(v/tau).
    let y = soft_max_plus(&x, 0.5).unwrap().sum_all();
    y.backward().unwrap();
    for (g, v) in x.grad().unwrap().iter().zip(x.data()) {
        let expect = 1.0 / (1.0 + (-v / 0.5).exp());
        assert!((g - expect).abs() < 1e-9);
    }
}

#[test]
fn reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = offset_tensor(&[2, 3, 4], &mut rng);
    assert_grad("sum_axis", &[x.clone()], || x.sum_axis(1, false).unwrap().sum_all());
    assert_grad("mean_axis keepdim", &[x.clone()], || {
        x.mean_axis(2, true).unwrap().sum_all()
    });
    assert_grad("max_axis", &[x.clone()], || x.max_axis(2, false).unwrap().sum_all());
    assert_grad("min_axis", &[x.clone()], || x.min_axis(1, true).unwrap().sum_all());
    assert_grad("global_avg_pool", &[x.clone()], || x.global_avg_pool().unwrap().sum_all());
    assert_grad("mean_all", &[x.clone()], || x.mean_all());
}

#[test]
fn shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = offset_tensor(&[2, 3, 4], &mut rng);
    let y = offset_tensor(&[2, 3, 4], &mut rng);
    assert_grad("reshape", &[x.clone()], || {
        x.reshape(&[6, 4]).unwrap().square().sum_all()
    });
    assert_grad("permute", &[x.clone()], || {
        x.permute(&[2, 0, 1]).unwrap().square().sum_all()
    });
    assert_grad("select", &[x.clone()], || x.select(1, 2).unwrap().square().sum_all());
    assert_grad("narrow", &[x.clone()], || {
        x.narrow(2, 1, 2).unwrap().square().sum_all()
    });
    assert_grad("concat", &[x.clone(), y.clone()], || {
        Tensor::concat(&[x.clone(), y.clone()], 1).unwrap().square().sum_all()
    });
}

#[test]
fn matmul_and_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = offset_tensor(&[3, 4], &mut rng);
    let b = offset_tensor(&[4, 2], &mut rng);
    assert_grad("matmul", &[a.clone(), b.clone()], || {
        a.matmul(&b).unwrap().square().sum_all()
    });
    let x = offset_tensor(&[2, 3, 5], &mut rng);
    let w = offset_tensor(&[4, 3, 3], &mut rng);
    let bias = offset_tensor(&[4], &mut rng);
    assert_grad("conv1d", &[x.clone(), w.clone(), bias.clone()], || {
        x.conv1d(&w, &bias, 1).unwrap().square().sum_all()
    });
}

#[test]
fn softmax_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let logits = offset_tensor(&[4, 5], &mut rng);
    assert_grad("softmax_ce", &[logits.clone()], || {
        logits.softmax_cross_entropy(&[0, 2, 4, 1]).unwrap()
    });
}

#[test]
fn attention_operators() {
    let cfg = AttentionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let z = offset_tensor(&[2, 4, 3], &mut rng);
    assert_grad("simam", &[z.clone()], || simam(&z, 1e-4).unwrap().square().sum_all());

    let w_bar = Tensor::from_vec(&[2], vec![0.3, 0.7]).unwrap().requires_grad_();
    let l_bar = Tensor::from_vec(&[2], vec![0.2, 0.5]).unwrap().requires_grad_();
    assert_grad("qt_simam", &[z.clone(), w_bar.clone(), l_bar.clone()], || {
        qt_simam(&z, &w_bar, &l_bar, &cfg).unwrap().square().sum_all()
    });

    let p = CbamParams {
        mlp_w1: offset_tensor(&[4, 2], &mut rng),
        mlp_b1: offset_tensor(&[2], &mut rng),
        mlp_w2: offset_tensor(&[2, 4], &mut rng),
        mlp_b2: offset_tensor(&[4], &mut rng),
        spatial_w: offset_tensor(&[1, 2, 3], &mut rng),
        spatial_b: offset_tensor(&[1], &mut rng),
    };
    let mut inputs = vec![z.clone()];
    inputs.extend(p.tensors().into_iter().map(|(_, t)| t));
    assert_grad("cbam", &inputs, || cbam(&z, &p, &cfg).unwrap().square().sum_all());
}

#[test]
fn residual_delay_layer() {
    let cfg = QueueConfig::default();
    // Distinct positive queue columns keep argmin/argmax stable and the
    // utilisation clamp inactive under the stencil.
    let x = Tensor::from_vec(
        &[2, 3, 3],
        vec![
            310.0, 61.0, 0.4, 520.0, 95.0, -0.3, 780.0, 122.0, 0.9, //
            405.0, 71.0, 0.1, 660.0, 88.0, 0.6, 930.0, 140.0, -0.8,
        ],
    )
    .unwrap()
    .requires_grad_();
    assert_grad("residual_delay", &[x.clone()], || {
        let p = residual_delay(&x, 0, 1, &cfg).unwrap();
        p.w_n.square().sum_all().add(&p.l_n.square().sum_all()).unwrap()
    });
}

#[test]
fn lstm_three_step_unroll_and_mogrifier() {
    let cfg = LstmConfig { hidden: 4, layers: 2, bidirectional: false, dropout: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let params = LstmParams::<f64>::init(3, &cfg, &mut rng);
    let seq = offset_tensor(&[2, 3, 3], &mut rng);
    let mut inputs = vec![seq.clone()];
    inputs.extend(params.named_tensors("lstm").into_iter().map(|(_, t)| t.requires_grad_()));
    let erng = ChaCha8Rng::seed_from_u64(0);
    assert_grad("lstm 3-step stack", &inputs, || {
        run_stack(&seq, None, &params, &cfg, false, &mut erng.clone())
            .unwrap()
            .square()
            .sum_all()
    });

    // Single cell.
    let x = offset_tensor(&[2, 3], &mut rng);
    let h = offset_tensor(&[2, 4], &mut rng);
    let c = offset_tensor(&[2, 4], &mut rng);
    let layer = &params.forward[0];
    let cell_inputs = vec![
        x.clone(),
        h.clone(),
        c.clone(),
        layer.w_ih.clone(),
        layer.w_hh.clone(),
        layer.b.clone(),
    ];
    assert_grad("lstm_cell", &cell_inputs, || {
        let (hn, cn) = lstm_cell(&x, &h, &c, layer).unwrap();
        hn.square().sum_all().add(&cn.square().sum_all()).unwrap()
    });

    // Mogrifier mask, including the proxy inputs.
    let w_t = Tensor::from_vec(&[2], vec![0.4, 0.8]).unwrap().requires_grad_();
    let l_t = Tensor::from_vec(&[2], vec![0.1, 0.6]).unwrap().requires_grad_();
    let mog_inputs = vec![
        x.clone(),
        h.clone(),
        w_t.clone(),
        l_t.clone(),
        layer.mog_w.clone(),
        layer.mog_b.clone(),
    ];
    assert_grad("qmogrifier", &mog_inputs, || {
        qmogrifier_step(&x, &h, &w_t, &l_t, layer).unwrap().square().sum_all()
    });
}

fn tiny_model(kind: ModelKind, seed: u64) -> (Model<f64>, Tensor<f64>, Vec<usize>) {
    let p = 5;
    let mut names = vec!["distance".to_string(), "scheduled_estimated_time".to_string()];
    for i in 2..p {
        names.push(format!("f{i}"));
    }
    let mut cfg = ModelConfig::new(kind, p, names.clone());
    cfg.conv_channels = vec![3, 4];
    cfg.lstm.hidden = 3;
    cfg.lstm.layers = 2;
    cfg.lstm.dropout = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::init(cfg, &mut rng).unwrap();

    // Mildly varied raw batch with well-separated queue columns.
    let b = 2;
    let mut data = Vec::new();
    for i in 0..b * 3 {
        data.push(310.0 + 135.0 * i as f64);
        data.push(55.0 + 17.0 * i as f64);
        data.extend(random_tensor::<f64>(&[p - 2], &mut rng).data());
    }
    let x = Tensor::from_vec(&[b, 3, p], data).unwrap();

    // Standardisation stats fitted from the batch itself.
    let flat: Vec<f32> = x.data().iter().map(|&v| v as f32).collect();
    let ds = ChainDataset {
        seq_len: 3,
        n_features: p,
        feature_names: names,
        x: flat,
        y: vec![0; b],
    };
    model.fit_feature_stats(&ds).unwrap();
    (model, x, vec![1, 3])
}

#[test]
fn full_models_end_to_end() {
    for (kind, seed) in [
        (ModelKind::CbamCnn, 21),
        (ModelKind::SimamCnnLstm, 22),
        (ModelKind::Qtsim, 23),
        (ModelKind::QtsimBidir, 24),
    ] {
        let (model, x, labels) = tiny_model(kind, seed);
        let mut inputs = model.parameters();
        inputs.push(x.clone().requires_grad_());
        let f = || {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = model.forward(&x, false, &mut rng).unwrap();
            out.logits.softmax_cross_entropy(&labels).unwrap()
        };
        let err = max_rel_err_sampled(&inputs, f, H, 6, 99);
        assert!(err <= TOL, "{kind:?}: max rel err {err:.3e} > {TOL:.0e}");
    }
}

#[test]
fn qtsim_aux_head_gradients() {
    let (mut model, x, labels) = {
        let (m, x, l) = tiny_model(ModelKind::Qtsim, 31);
        (m, x, l)
    };
    // Rebuild with the auxiliary head enabled.
    let mut cfg = model.config.clone();
    cfg.aux_delay_head = true;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    model = Model::init(cfg, &mut rng).unwrap();
    let mut inputs = model.parameters();
    inputs.push(x.clone().requires_grad_());
    let f = || {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = model.forward(&x, false, &mut rng).unwrap();
        let ce = out.logits.softmax_cross_entropy(&labels).unwrap();
        ce.add(&out.aux_delay.unwrap().square().mean_all()).unwrap()
    };
    let err = max_rel_err_sampled(&inputs, f, H, 6, 100);
    assert!(err <= TOL, "aux head: max rel err {err:.3e}");
}
