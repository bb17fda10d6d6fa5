//! Central finite-difference gradient verification.
//!
//! Uses only the forward pass, so it is independent of the backward
//! rules it checks. Intended for `f64` graphs where the h=1e-5 stencil
//! noise stays well below the 1e-4 tolerance.

use crate::tensor::{Element, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Maximum relative error between analytic gradients and central finite
/// differences over every coordinate of every input.
///
/// `f` must rebuild the scalar output from the same leaf tensors each
/// time it is called; the leaves' data is perturbed in place.
pub fn max_rel_err(inputs: &[Tensor<f64>], f: impl Fn() -> Tensor<f64>, h: f64) -> f64 {
    max_rel_err_sampled(inputs, f, h, usize::MAX, 0)
}

/// Like [`max_rel_err`] but checks at most `max_coords` randomly chosen
/// coordinates per input tensor. Used for whole-model checks.
pub fn max_rel_err_sampled(
    inputs: &[Tensor<f64>],
    f: impl Fn() -> Tensor<f64>,
    h: f64,
    max_coords: usize,
    seed: u64,
) -> f64 {
    let loss = f();
    loss.backward().expect("scalar loss");
    let analytic: Vec<Vec<f64>> =
        inputs.iter().map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.len()])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (ti, t) in inputs.iter().enumerate() {
        let base = t.data();
        let mut coords: Vec<usize> = (0..base.len()).collect();
        if coords.len() > max_coords {
            coords.shuffle(&mut rng);
            coords.truncate(max_coords);
        }
        for &ci in &coords {
            let mut plus = base.clone();
            plus[ci] += h;
            t.set_data(plus).unwrap();
            let fp = f().value();
            let mut minus = base.clone();
            minus[ci] -= h;
            t.set_data(minus).unwrap();
            let fm = f().value();
            t.set_data(base.clone()).unwrap();
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[ti][ci];
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-6 {
        // Both effectively zero: compare absolutely at the same tolerance.
        (a - n).abs()
    } else {
        (a - n).abs() / scale
    }
}

/// Deterministic random tensor in [-1, 1), for oracle inputs.
pub fn random_tensor<E: Element>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<E> {
    use rand::Rng;
    let n: usize = shape.iter().product();
    let data: Vec<E> = (0..n).map(|_| E::of(rng.gen_range(-1.0..1.0))).collect();
    Tensor::from_vec(shape, data).expect("shape/data agree")
}
