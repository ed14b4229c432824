mod common;

use common::{
    assert_close, bn_identity_gamma, check_gradients, eye, fill_param, manual_norm, set_param,
    tiny_config,
};
use subact_core::config::{FusionVariant, ModelConfig};
use subact_core::fusion::{Classifier, FusionModule, Mlp1};
use subact_core::nn::{make_leaves, ForwardCtx};
use subact_tensor::{ParamStore, Tensor};

fn module(variant: FusionVariant, dim: usize, d_k: usize, seed: u64) -> (ParamStore, FusionModule) {
    let cfg = ModelConfig { feature_dim: dim, d_k, fusion: variant, ..ModelConfig::default() };
    let mut store = ParamStore::new();
    let fusion = FusionModule::register(&mut store, &cfg, seed).unwrap();
    (store, fusion)
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for l in 0..k {
                out[i * n + j] += a[i * k + l] * b[l * n + j];
            }
        }
    }
    out
}

fn norm_rows(rows: &[f64], dim: usize) -> Vec<f64> {
    rows.chunks_exact(dim).flat_map(|r| manual_norm(r)).collect()
}

fn ramp(n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * scale).sin()).collect()
}

#[test]
fn zero_query_projection_yields_uniform_attention_over_text() {
    let (t, d) = (3, 4);
    let (mut store, fusion) = module(FusionVariant::CrossAttention, d, d, 2);
    fill_param(&mut store, "fusion.w_q", 0.0);
    let x = ramp(t * d, 0.7);
    let tm = ramp(t * d, 0.3);
    let leaves = make_leaves(&store, store.ids());
    let (fused, attn) = fusion
        .forward(
            &leaves,
            &Tensor::constant(x.clone(), &[1, t, d]).unwrap(),
            Some(&Tensor::constant(tm.clone(), &[1, t, d]).unwrap()),
        )
        .unwrap();
    let attn = attn.expect("attention weights for the attention variant");
    assert_eq!(attn.shape(), &[1, t, t]);
    for &w in attn.data() {
        assert_eq!(w, 1.0 / t as f64);
    }

    let w_v = &store.get(store.lookup("fusion.w_v").unwrap()).value;
    let v = matmul(&tm, w_v, t, d, d);
    let mut pre = x;
    for i in 0..t {
        for c in 0..d {
            let mut mixed = 0.0;
            for j in 0..t {
                mixed += v[j * d + c] / t as f64;
            }
            pre[i * d + c] += mixed;
        }
    }
    assert_close(fused.data(), &norm_rows(&pre, d), 1e-12);
}

#[test]
fn zero_value_projection_reduces_to_normalized_kinematics() {
    let (t, d) = (2, 4);
    let (mut store, fusion) = module(FusionVariant::CrossAttention, d, d, 5);
    fill_param(&mut store, "fusion.w_v", 0.0);
    let x = ramp(t * d, 0.9);
    let tm = ramp(t * d, 0.2);
    let leaves = make_leaves(&store, store.ids());
    let (fused, _) = fusion
        .forward(
            &leaves,
            &Tensor::constant(x.clone(), &[1, t, d]).unwrap(),
            Some(&Tensor::constant(tm, &[1, t, d]).unwrap()),
        )
        .unwrap();

    let (bare_store, bare) = module(FusionVariant::KinematicsOnly, d, d, 5);
    let bare_leaves = make_leaves(&bare_store, bare_store.ids());
    let (plain, attn) = bare
        .forward(&bare_leaves, &Tensor::constant(x, &[1, t, d]).unwrap(), None)
        .unwrap();
    assert!(attn.is_none());
    assert_eq!(fused.data(), plain.data());
}

#[test]
fn two_by_two_attention_matches_hand_computation() {
    let (t, d) = (2, 2);
    let (mut store, fusion) = module(FusionVariant::CrossAttention, d, d, 0);
    let w_q = [0.3, -0.2, 0.1, 0.4];
    let w_k = [0.2, 0.1, -0.3, 0.5];
    let w_v = [1.0, 0.0, 0.0, -1.0];
    set_param(&mut store, "fusion.w_q", &w_q);
    set_param(&mut store, "fusion.w_k", &w_k);
    set_param(&mut store, "fusion.w_v", &w_v);
    let x = [1.0, 2.0, 3.0, -1.0];
    let tm = [0.5, -0.5, 1.0, 0.25];

    let q = matmul(&x, &w_q, t, d, d);
    let k = matmul(&tm, &w_k, t, d, d);
    let v = matmul(&tm, &w_v, t, d, d);
    let scale = 1.0 / (d as f64).sqrt();
    let mut expected_attn = vec![0.0; t * t];
    let mut pre = x.to_vec();
    for i in 0..t {
        let scores: Vec<f64> = (0..t)
            .map(|j| scale * (q[i * d] * k[j * d] + q[i * d + 1] * k[j * d + 1]))
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for j in 0..t {
            expected_attn[i * t + j] = exps[j] / sum;
            for c in 0..d {
                pre[i * d + c] += exps[j] / sum * v[j * d + c];
            }
        }
    }

    let leaves = make_leaves(&store, store.ids());
    let (fused, attn) = fusion
        .forward(
            &leaves,
            &Tensor::constant(x.to_vec(), &[1, t, d]).unwrap(),
            Some(&Tensor::constant(tm.to_vec(), &[1, t, d]).unwrap()),
        )
        .unwrap();
    assert_close(attn.unwrap().data(), &expected_attn, 1e-10);
    assert_close(fused.data(), &norm_rows(&pre, d), 1e-10);
}

#[test]
fn elementwise_variants_follow_their_formulas() {
    let (t, d) = (2, 4);
    let x = ramp(t * d, 0.5);
    let tm = ramp(t * d, 1.1);
    let xs = Tensor::constant(x.clone(), &[1, t, d]).unwrap();
    let tms = Tensor::constant(tm.clone(), &[1, t, d]).unwrap();

    for (variant, formula) in [
        (FusionVariant::Add, Box::new(|a: f64, b: f64| a + b) as Box<dyn Fn(f64, f64) -> f64>),
        (FusionVariant::Mul, Box::new(|a, b| a * b)),
        (FusionVariant::MulResidual, Box::new(|a, b| a + a * b)),
    ] {
        let (store, fusion) = module(variant, d, d, 8);
        assert!(store.lookup("fusion.w_q").is_none());
        let leaves = make_leaves(&store, store.ids());
        let (fused, attn) = fusion.forward(&leaves, &xs, Some(&tms)).unwrap();
        assert!(attn.is_none());
        let pre: Vec<f64> = x.iter().zip(&tm).map(|(&a, &b)| formula(a, b)).collect();
        assert_close(fused.data(), &norm_rows(&pre, d), 1e-12);
    }
}

#[test]
fn concat_variant_projects_the_joined_features() {
    let (t, d) = (2, 3);
    let cfg = ModelConfig {
        feature_dim: d,
        d_k: d,
        fusion: FusionVariant::Concat,
        ..ModelConfig::default()
    };
    let mut store = ParamStore::new();
    let fusion = FusionModule::register(&mut store, &cfg, 4).unwrap();
    let x = ramp(t * d, 0.4);
    let tm = ramp(t * d, 0.8);
    let weight = store.get(store.lookup("fusion.concat.weight").unwrap()).value.clone();
    let bias = store.get(store.lookup("fusion.concat.bias").unwrap()).value.clone();
    let mut pre = Vec::new();
    for row in 0..t {
        let joined: Vec<f64> = x[row * d..(row + 1) * d]
            .iter()
            .chain(&tm[row * d..(row + 1) * d])
            .copied()
            .collect();
        let mut out = matmul(&joined, &weight, 1, 2 * d, d);
        for (o, b) in out.iter_mut().zip(&bias) {
            *o += b;
        }
        pre.extend(out);
    }
    let leaves = make_leaves(&store, store.ids());
    let (fused, _) = fusion
        .forward(
            &leaves,
            &Tensor::constant(x, &[1, t, d]).unwrap(),
            Some(&Tensor::constant(tm, &[1, t, d]).unwrap()),
        )
        .unwrap();
    assert_close(fused.data(), &norm_rows(&pre, d), 1e-12);
}

#[test]
fn kinematics_only_ignores_text_features() {
    let (t, d) = (3, 4);
    let (store, fusion) = module(FusionVariant::KinematicsOnly, d, d, 6);
    let x = Tensor::constant(ramp(t * d, 0.6), &[1, t, d]).unwrap();
    let tm = Tensor::constant(ramp(t * d, 0.25), &[1, t, d]).unwrap();
    let leaves = make_leaves(&store, store.ids());
    let (with_text, _) = fusion.forward(&leaves, &x, Some(&tm)).unwrap();
    let (without, _) = fusion.forward(&leaves, &x, None).unwrap();
    assert_eq!(with_text.data(), without.data());
    assert_close(without.data(), &norm_rows(x.data(), d), 1e-12);
}

#[test]
fn text_consuming_variants_require_text_features() {
    let (t, d) = (2, 4);
    let x = Tensor::constant(ramp(t * d, 0.3), &[1, t, d]).unwrap();
    for variant in FusionVariant::ALL {
        let (store, fusion) = module(variant, d, d, 1);
        let leaves = make_leaves(&store, store.ids());
        let result = fusion.forward(&leaves, &x, None);
        if variant.uses_text_branch() {
            let err = result.unwrap_err().to_string();
            assert!(err.contains(variant.label()), "{err}");
        } else {
            assert!(result.is_ok());
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let (b, t, d) = (2, 5, 8);
    let (mut store, fusion) = module(FusionVariant::CrossAttention, d, d, 12);
    for name in ["fusion.w_q", "fusion.w_k", "fusion.w_v"] {
        let id = store.lookup(name).unwrap();
        for (i, v) in store.value_mut(id).iter_mut().enumerate() {
            *v = ((i * 7 % 13) as f64 - 6.0) * 0.25;
        }
    }
    let x = Tensor::constant(ramp(b * t * d, 0.21), &[b, t, d]).unwrap();
    let tm = Tensor::constant(ramp(b * t * d, 0.83), &[b, t, d]).unwrap();
    let leaves = make_leaves(&store, store.ids());
    let (_, attn) = fusion.forward(&leaves, &x, Some(&tm)).unwrap();
    let attn = attn.unwrap();
    for row in attn.data().chunks_exact(t) {
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "row sums to {sum}");
        assert!(row.iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn timeline_projection_expands_labels_to_frames() {
    let cfg = tiny_config();
    let (l, t, d) = (cfg.l_max, cfg.fused_frames(), cfg.feature_dim);
    let mut store = ParamStore::new();
    let mlp1 = Mlp1::register(&mut store, &cfg, 3).unwrap();
    set_param(&mut store, "mlp1.fc1.weight", &eye(d));
    set_param(&mut store, "mlp1.fc2.weight", &eye(d));
    fill_param(&mut store, "mlp1.bn.gamma", bn_identity_gamma());
    let mut len_weight = vec![0.0; t * l];
    for frame in 0..t {
        len_weight[frame * l + frame % l] = 2.0;
    }
    set_param(&mut store, "mlp1.len.weight", &len_weight);
    let len_bias: Vec<f64> = (0..t).map(|i| 0.1 * (i + 1) as f64).collect();
    set_param(&mut store, "mlp1.len.bias", &len_bias);

    let t_sub: Vec<f64> = (0..2 * l * d).map(|i| 0.5 + (i as f64 * 0.09).cos() * 0.3).collect();
    let leaves = make_leaves(&store, store.ids());
    let out = mlp1
        .forward(
            &store,
            &leaves,
            &Tensor::constant(t_sub.clone(), &[2, l, d]).unwrap(),
            &mut ForwardCtx::eval(),
        )
        .unwrap();
    assert_eq!(out.shape(), &[2, t, d]);
    let mut expected = vec![0.0; 2 * t * d];
    for b in 0..2 {
        for frame in 0..t {
            for c in 0..d {
                expected[(b * t + frame) * d + c] =
                    2.0 * t_sub[(b * l + frame % l) * d + c] + len_bias[frame];
            }
        }
    }
    assert_close(out.data(), &expected, 1e-12);
}

#[test]
fn classifier_with_zero_weights_reports_its_bias() {
    let cfg = tiny_config();
    let classes = 4;
    let mut store = ParamStore::new();
    let classifier = Classifier::register(&mut store, &cfg, classes, 9).unwrap();
    fill_param(&mut store, "classifier.weight", 0.0);
    let bias = [0.1, -0.2, 0.3, 0.4];
    set_param(&mut store, "classifier.bias", &bias);
    let fused = Tensor::constant(ramp(2 * 3 * cfg.feature_dim, 0.37), &[2, 3, cfg.feature_dim]).unwrap();
    let leaves = make_leaves(&store, store.ids());
    let logits = classifier.forward(&leaves, &fused).unwrap();
    assert_eq!(logits.shape(), &[2, classes]);
    assert_eq!(logits.data(), [bias, bias].concat());
}

#[test]
fn classifier_pools_the_timeline_mean() {
    let cfg = tiny_config();
    let (t, d, classes) = (3, cfg.feature_dim, 5);
    let mut store = ParamStore::new();
    let classifier = Classifier::register(&mut store, &cfg, classes, 21).unwrap();
    let weight = store.get(store.lookup("classifier.weight").unwrap()).value.clone();
    let bias = store.get(store.lookup("classifier.bias").unwrap()).value.clone();
    let fused = ramp(2 * t * d, 0.53);
    let mut expected = Vec::new();
    for b in 0..2 {
        let mut pooled = vec![0.0; d];
        for frame in 0..t {
            for c in 0..d {
                pooled[c] += fused[(b * t + frame) * d + c] / t as f64;
            }
        }
        let mut row = matmul(&pooled, &weight, 1, d, classes);
        for (r, bv) in row.iter_mut().zip(&bias) {
            *r += bv;
        }
        expected.extend(row);
    }
    let leaves = make_leaves(&store, store.ids());
    let logits = classifier
        .forward(&leaves, &Tensor::constant(fused.clone(), &[2, t, d]).unwrap())
        .unwrap();
    assert_close(logits.data(), &expected, 1e-12);

    let mut reversed = vec![0.0; fused.len()];
    for b in 0..2 {
        for frame in 0..t {
            let src = (b * t + frame) * d;
            let dst = (b * t + (t - 1 - frame)) * d;
            reversed[dst..dst + d].copy_from_slice(&fused[src..src + d]);
        }
    }
    let swapped = classifier
        .forward(&leaves, &Tensor::constant(reversed, &[2, t, d]).unwrap())
        .unwrap();
    assert_close(swapped.data(), logits.data(), 1e-12);
}

#[test]
fn attention_gradients_match_finite_differences() {
    let (t, d) = (3, 4);
    let (mut store, fusion) = module(FusionVariant::CrossAttention, d, d, 14);
    for name in ["fusion.w_q", "fusion.w_k", "fusion.w_v"] {
        let id = store.lookup(name).unwrap();
        for (i, v) in store.value_mut(id).iter_mut().enumerate() {
            *v = ((i as f64) * 0.41).sin() * 0.5;
        }
    }
    let x = Tensor::constant(ramp(t * d, 0.7), &[1, t, d]).unwrap();
    let tm = Tensor::constant(ramp(t * d, 0.29), &[1, t, d]).unwrap();
    let ids: Vec<_> = ["fusion.w_q", "fusion.w_k", "fusion.w_v", "fusion.norm.gamma", "fusion.norm.beta"]
        .iter()
        .map(|n| store.lookup(n).unwrap())
        .collect();
    check_gradients(
        &mut store,
        &ids,
        4,
        &mut |_, leaves| {
            let (fused, _) = fusion.forward(leaves, &x, Some(&tm)).unwrap();
            fused.mul(&fused).unwrap().sum_all()
        },
        1e-5,
        1e-6,
    );
}

#[test]
fn timeline_projection_gradients_match_finite_differences() {
    let cfg = tiny_config();
    let (l, d) = (cfg.l_max, cfg.feature_dim);
    let mut store = ParamStore::new();
    let mlp1 = Mlp1::register(&mut store, &cfg, 19).unwrap();
    let t_sub = Tensor::constant(ramp(2 * l * d, 0.33), &[2, l, d]).unwrap();
    let ids: Vec<_> = ["mlp1.fc1.weight", "mlp1.fc2.weight", "mlp1.len.weight", "mlp1.len.bias", "mlp1.bn.gamma"]
        .iter()
        .map(|n| store.lookup(n).unwrap())
        .collect();
    check_gradients(
        &mut store,
        &ids,
        4,
        &mut |store, leaves| {
            let out = mlp1
                .forward(store, leaves, &t_sub, &mut ForwardCtx::train(2))
                .unwrap();
            out.mul(&out).unwrap().sum_all()
        },
        1e-5,
        1e-5,
    );
}
