//! Helpers shared by the model test suites.
#![allow(dead_code)]

use subact_core::config::ModelConfig;
use subact_core::nn::{make_leaves, Leaves, NORM_EPS};
use subact_tensor::{ParamId, ParamStore, Tensor};

pub fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
    assert_eq!(actual.len(), expected.len(), "length mismatch");
    for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
        assert!(
            (a - e).abs() <= tol,
            "index {i}: got {a}, expected {e} (tolerance {tol})"
        );
    }
}

/// Small model configuration that keeps forward passes cheap.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        feature_dim: 8,
        d_k: 8,
        gcn_blocks: 2,
        stride_blocks: vec![2],
        frames: 6,
        l_max: 3,
        text_layers: 1,
        text_heads: 2,
        context_length: 16,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

/// Batch normalization registered with running stats (0, 1) divides by
/// sqrt(1 + eps) in eval mode; this gamma value cancels that factor.
pub fn bn_identity_gamma() -> f64 {
    (1.0 + NORM_EPS).sqrt()
}

pub fn set_param(store: &mut ParamStore, name: &str, values: &[f64]) {
    let id = store.lookup(name).unwrap_or_else(|| panic!("no parameter named {name}"));
    let slot = store.value_mut(id);
    assert_eq!(slot.len(), values.len(), "size mismatch for {name}");
    slot.copy_from_slice(values);
}

pub fn fill_param(store: &mut ParamStore, name: &str, value: f64) {
    let id = store.lookup(name).unwrap_or_else(|| panic!("no parameter named {name}"));
    for v in store.value_mut(id) {
        *v = value;
    }
}

/// Layer normalization of one row with unit gain and zero shift, matching
/// the library's population-variance convention.
pub fn manual_norm(row: &[f64]) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + NORM_EPS).sqrt();
    row.iter().map(|&x| (x - mean) * inv).collect()
}

/// Row-major identity matrix.
pub fn eye(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn loss_value(store: &ParamStore, loss: &mut dyn FnMut(&ParamStore, &Leaves) -> Tensor) -> f64 {
    let leaves = make_leaves(store, store.ids());
    loss(store, &leaves).item().expect("loss must be scalar")
}

/// Central-difference gradient check for `loss` over the listed parameters,
/// probing up to `coords` evenly spaced coordinates of each.
pub fn check_gradients(
    store: &mut ParamStore,
    ids: &[ParamId],
    coords: usize,
    loss: &mut dyn FnMut(&ParamStore, &Leaves) -> Tensor,
    eps: f64,
    tol: f64,
) {
    let leaves = make_leaves(store, store.ids());
    let l = loss(store, &leaves);
    l.backward().expect("backward pass");
    for &id in ids {
        let n = store.get(id).value.len();
        let analytic = leaves[&id].grad().unwrap_or_else(|| vec![0.0; n]);
        let stride = (n / coords).max(1);
        for idx in (0..n).step_by(stride).take(coords) {
            let orig = store.get(id).value[idx];
            store.value_mut(id)[idx] = orig + eps;
            let plus = loss_value(store, loss);
            store.value_mut(id)[idx] = orig - eps;
            let minus = loss_value(store, loss);
            store.value_mut(id)[idx] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let ad = analytic[idx];
            let denom = fd.abs().max(ad.abs()).max(1.0);
            assert!(
                ((fd - ad) / denom).abs() < tol,
                "{}[{idx}]: finite difference {fd} vs autodiff {ad}",
                store.get(id).name
            );
        }
    }
}
