//! Shared fixtures for the criterion benchmarks.

use qtflight_core::chains::{ChainConfig, FlightLeg};
use qtflight_core::model::{Model, ModelConfig, ModelKind};
use qtflight_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Feature registry with the queue columns resolvable by name.
pub fn feature_names(p: usize) -> Vec<String> {
    let mut names = vec!["distance".to_string(), "scheduled_estimated_time".to_string()];
    for i in 2..p {
        names.push(format!("f{i}"));
    }
    names
}

/// A reduced-width model of the given kind, ready for forward passes.
pub fn small_model(kind: ModelKind, p: usize, seed: u64) -> Model<f32> {
    let mut cfg = ModelConfig::new(kind, p, feature_names(p));
    cfg.conv_channels = vec![16, 32];
    cfg.lstm.hidden = 32;
    cfg.lstm.dropout = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Model::init(cfg, &mut rng).expect("valid config")
}

/// A raw B x 3 x p batch with positive, varied queue columns.
pub fn raw_batch(b: usize, p: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(b * 3 * p);
    for _ in 0..b * 3 {
        data.push(rng.gen_range(100.0..900.0));
        data.push(rng.gen_range(30.0..300.0));
        for _ in 2..p {
            data.push(rng.gen_range(-1.0..1.0));
        }
    }
    Tensor::from_vec(&[b, 3, p], data).expect("shape/data agree")
}

/// One synthetic aircraft-day of legs with mixed-feasibility gaps.
pub fn aircraft_day(n_legs: usize, seed: u64) -> Vec<FlightLeg> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut legs = Vec::with_capacity(n_legs);
    let mut t = 6 * 60;
    for order in 0..n_legs {
        let dur = rng.gen_range(40..=180);
        legs.push(FlightLeg {
            tail: "BENCH".to_string(),
            date: "2022-03-01".to_string(),
            sched_dep: t,
            actual_dep: t,
            sched_arr: t + dur,
            arr_delay: rng.gen_range(-20.0..300.0),
            features: vec![order as f32; 4],
            input_order: order,
        });
        t += dur + rng.gen_range(-30..900);
    }
    legs
}

pub fn default_chain_config() -> ChainConfig {
    ChainConfig::default()
}
