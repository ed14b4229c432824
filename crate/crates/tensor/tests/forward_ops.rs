use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subact_tensor::{Tensor, TensorError};

fn t(data: &[f64], shape: &[usize]) -> Tensor {
    Tensor::constant(data.to_vec(), shape).unwrap()
}

fn assert_close(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!(
            (g - w).abs() <= tol,
            "index {i}: got {g}, want {w} (tol {tol})"
        );
    }
}

// Independent triple-loop oracle for matrix products.
fn matmul_oracle(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    out
}

#[test]
fn matmul_identity_passthrough() {
    let eye = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
    let x = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
    let y = eye.matmul(&x).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn matmul_row_times_column() {
    let a = t(&[1.0, 2.0], &[1, 2]);
    let b = t(&[3.0, 4.0], &[2, 1]);
    let y = a.matmul(&b).unwrap();
    assert_eq!(y.shape(), &[1, 1]);
    assert_eq!(y.data(), &[11.0]);
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = t(&a, &[3, 4]).matmul(&t(&b, &[4, 2])).unwrap();
    assert_close(y.data(), &matmul_oracle(&a, &b, 3, 4, 2), 1e-12);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let err = t(&[0.0; 6], &[2, 3]).matmul(&t(&[0.0; 4], &[2, 2])).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
}

#[test]
fn bmm_matches_per_batch_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a: Vec<f64> = (0..2 * 3 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..2 * 4 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = t(&a, &[2, 3, 4]).bmm(&t(&b, &[2, 4, 2])).unwrap();
    for i in 0..2 {
        let want = matmul_oracle(&a[i * 12..(i + 1) * 12], &b[i * 8..(i + 1) * 8], 3, 4, 2);
        assert_close(&y.data()[i * 6..(i + 1) * 6], &want, 1e-12);
    }
}

#[test]
fn lmatmul_shares_left_operand_across_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let l: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r: Vec<f64> = (0..2 * 3 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = t(&l, &[3, 3]).lmatmul(&t(&r, &[2, 3, 2])).unwrap();
    for i in 0..2 {
        let want = matmul_oracle(&l, &r[i * 6..(i + 1) * 6], 3, 3, 2);
        assert_close(&y.data()[i * 6..(i + 1) * 6], &want, 1e-12);
    }
}

#[test]
fn softmax_uniform_logits() {
    let y = t(&[0.0, 0.0, 0.0], &[3]).softmax().unwrap();
    assert_close(y.data(), &[1.0 / 3.0; 3], 1e-15);
}

#[test]
fn softmax_shift_invariance() {
    let x = t(&[0.3, -1.2, 2.5, 0.0], &[4]);
    let shifted = x.add_const(17.5);
    let a = x.softmax().unwrap();
    let b = shifted.softmax().unwrap();
    assert_close(a.data(), b.data(), 1e-12);
}

#[test]
fn softmax_matches_direct_formula() {
    let x = [1.0, 2.0, 3.0];
    let y = t(&x, &[3]).softmax().unwrap();
    let z: f64 = x.iter().map(|v| v.exp()).sum();
    let want: Vec<f64> = x.iter().map(|v| v.exp() / z).collect();
    assert_close(y.data(), &want, 1e-12);
}

#[test]
fn softmax_rejects_nan() {
    let err = t(&[0.0, f64::NAN], &[2]).softmax().unwrap_err();
    assert!(matches!(err, TensorError::Numeric { op: "softmax", .. }));
}

#[test]
fn softmax_rows_are_independent() {
    let x = t(&[1.0, 2.0, 100.0, 100.0], &[2, 2]);
    let y = x.softmax().unwrap();
    let s0: f64 = y.data()[..2].iter().sum();
    let s1: f64 = y.data()[2..].iter().sum();
    assert!((s0 - 1.0).abs() < 1e-9 && (s1 - 1.0).abs() < 1e-9);
}

#[test]
fn logsumexp_matches_direct_formula() {
    let x = [0.5, -0.25, 1.75];
    let y = t(&x, &[3]).logsumexp().unwrap();
    let want = x.iter().map(|v| v.exp()).sum::<f64>().ln();
    assert_eq!(y.shape(), &[] as &[usize]);
    assert!((y.item().unwrap() - want).abs() < 1e-12);
}

#[test]
fn logsumexp_stable_for_large_logits() {
    let y = t(&[1000.0, 1000.0], &[2]).logsumexp().unwrap();
    assert!((y.item().unwrap() - (1000.0 + 2.0f64.ln())).abs() < 1e-9);
}

#[test]
fn layer_norm_constant_vector_is_zero() {
    let x = t(&[5.0, 5.0, 5.0], &[3]);
    let y = x
        .layer_norm(&Tensor::ones(&[3]), &Tensor::zeros(&[3]), 1e-5)
        .unwrap();
    assert_eq!(y.data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn layer_norm_two_points() {
    let x = t(&[1.0, 3.0], &[2]);
    let y = x
        .layer_norm(&Tensor::ones(&[2]), &Tensor::zeros(&[2]), 1e-5)
        .unwrap();
    assert_close(y.data(), &[-1.0, 1.0], 1e-3);
}

#[test]
fn layer_norm_matches_closed_form() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = t(&x, &[4])
        .layer_norm(&Tensor::ones(&[4]), &Tensor::zeros(&[4]), 1e-5)
        .unwrap();
    let mean = 2.5;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
    let want: Vec<f64> = x.iter().map(|v| (v - mean) / (var + 1e-5).sqrt()).collect();
    assert_close(y.data(), &want, 1e-12);
}

#[test]
fn batch_norm_statistics_are_per_feature() {
    // Two rows; feature 0 has values {1,3}, feature 1 has {10,10}.
    let x = t(&[1.0, 10.0, 3.0, 10.0], &[2, 2]);
    let (y, mean, var) = x
        .batch_norm_train(&Tensor::ones(&[2]), &Tensor::zeros(&[2]), 1e-5)
        .unwrap();
    assert_close(&mean, &[2.0, 10.0], 1e-12);
    assert_close(&var, &[1.0, 0.0], 1e-12);
    assert_close(&y.data()[0..1], &[-0.999995], 1e-5);
    assert_eq!(y.data()[1], 0.0);
}

#[test]
fn relu_examples() {
    let y = t(&[-1.0, 0.0, 2.0], &[3]).relu();
    assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    let x = t(&[0.5, 1.5], &[2]);
    assert_eq!(x.relu().data(), x.data());
}

#[test]
fn dropout_rate_zero_is_identity_in_both_modes() {
    let x = t(&[1.0, 2.0, 3.0], &[3]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for training in [false, true] {
        let y = x.dropout(0.0, training, &mut rng).unwrap();
        assert_eq!(y.data(), x.data());
    }
}

#[test]
fn dropout_eval_mode_bypasses() {
    let x = t(&[1.0, 2.0, 3.0, 4.0], &[4]);
    let y = x.dropout_seeded(0.5, false, &[1, 2]).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn dropout_same_seed_same_mask() {
    let x = t(&[1.0; 64], &[64]);
    let a = x.dropout_seeded(0.5, true, &[9, 1]).unwrap();
    let b = x.dropout_seeded(0.5, true, &[9, 1]).unwrap();
    assert_eq!(a.data(), b.data());
    let c = x.dropout_seeded(0.5, true, &[9, 2]).unwrap();
    assert_ne!(a.data(), c.data());
    // Survivors are scaled by 1/(1-rate).
    assert!(a.data().iter().all(|&v| v == 0.0 || (v - 2.0).abs() < 1e-15));
}

#[test]
fn dropout_rejects_rate_one() {
    let x = t(&[1.0], &[1]);
    assert!(x.dropout_seeded(1.0, true, &[0]).is_err());
}

#[test]
fn broadcast_add_row_vector() {
    let a = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
    let b = t(&[10.0, 20.0], &[2]);
    let y = a.add(&b).unwrap();
    assert_eq!(y.data(), &[11.0, 22.0, 13.0, 24.0]);
}

#[test]
fn broadcast_mul_column() {
    let a = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
    let b = t(&[2.0, 10.0], &[2, 1]);
    let y = a.mul(&b).unwrap();
    assert_eq!(y.data(), &[2.0, 4.0, 30.0, 40.0]);
}

#[test]
fn broadcast_rejects_incompatible() {
    let a = t(&[0.0; 6], &[2, 3]);
    let b = t(&[0.0; 2], &[2]);
    assert!(a.add(&b).is_err());
}

#[test]
fn div_rejects_zero_divisor() {
    let a = t(&[1.0], &[1]);
    let b = t(&[0.0], &[1]);
    assert!(matches!(a.div(&b), Err(TensorError::Numeric { op: "div", .. })));
}

#[test]
fn sum_and_mean_reductions() {
    let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
    assert_eq!(x.sum_axis(0).unwrap().data(), &[5.0, 7.0, 9.0]);
    assert_eq!(x.sum_axis(1).unwrap().data(), &[6.0, 15.0]);
    assert_eq!(x.sum_all().item().unwrap(), 21.0);
    assert!((x.mean_all().item().unwrap() - 3.5).abs() < 1e-15);
    assert_eq!(x.mean_axis(1).unwrap().data(), &[2.0, 5.0]);
}

#[test]
fn reshape_and_permute_roundtrip() {
    let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
    let y = x.reshape(&[3, 2]).unwrap();
    assert_eq!(y.data(), x.data());
    let p = x.permute(&[1, 0]).unwrap();
    assert_eq!(p.shape(), &[3, 2]);
    assert_eq!(p.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    let back = p.permute(&[1, 0]).unwrap();
    assert_eq!(back.data(), x.data());
}

#[test]
fn permute_three_axes() {
    let x = t(&(0..24).map(|v| v as f64).collect::<Vec<_>>(), &[2, 3, 4]);
    let y = x.permute(&[2, 0, 1]).unwrap();
    assert_eq!(y.shape(), &[4, 2, 3]);
    // y[k][i][j] == x[i][j][k]
    for i in 0..2 {
        for j in 0..3 {
            for k in 0..4 {
                assert_eq!(y.data()[(k * 2 + i) * 3 + j], x.data()[(i * 3 + j) * 4 + k]);
            }
        }
    }
}

#[test]
fn transpose_last_swaps_trailing_axes() {
    let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], &[2, 2, 2]);
    let y = x.transpose_last().unwrap();
    assert_eq!(y.data(), &[1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 6.0, 8.0]);
}

#[test]
fn gather_and_concat() {
    let table = t(&[0.0, 1.0, 10.0, 11.0, 20.0, 21.0], &[3, 2]);
    let g = Tensor::gather_rows(&table, &[2, 0, 2]).unwrap();
    assert_eq!(g.shape(), &[3, 2]);
    assert_eq!(g.data(), &[20.0, 21.0, 0.0, 1.0, 20.0, 21.0]);
    assert!(Tensor::gather_rows(&table, &[3]).is_err());

    let a = t(&[1.0, 2.0], &[1, 2]);
    let b = t(&[3.0, 4.0, 5.0, 6.0], &[2, 2]);
    let c = Tensor::concat_rows(&[a.clone(), b]).unwrap();
    assert_eq!(c.shape(), &[3, 2]);
    assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

    let d = t(&[9.0, 8.0], &[1, 2]);
    let e = a.concat_last(&d).unwrap();
    assert_eq!(e.shape(), &[1, 4]);
    assert_eq!(e.data(), &[1.0, 2.0, 9.0, 8.0]);
}

#[test]
fn stack_rows_adds_leading_axis() {
    let a = t(&[1.0, 2.0], &[2]);
    let b = t(&[3.0, 4.0], &[2]);
    let s = Tensor::stack_rows(&[a, b]).unwrap();
    assert_eq!(s.shape(), &[2, 2]);
    assert_eq!(s.data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn pick_per_row_selects_and_validates() {
    let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
    let y = x.pick_per_row(&[2, 0]).unwrap();
    assert_eq!(y.data(), &[3.0, 4.0]);
    assert!(x.pick_per_row(&[3, 0]).is_err());
}

#[test]
fn gelu_known_values() {
    let y = t(&[0.0, 1.0, -1.0], &[3]).gelu();
    assert_eq!(y.data()[0], 0.0);
    assert!((y.data()[1] - 0.8411919906082768).abs() < 1e-9);
    assert!((y.data()[2] + 0.15880800939172324).abs() < 1e-9);
}

#[test]
fn sqrt_rejects_negative() {
    assert!(t(&[-1.0], &[1]).sqrt().is_err());
    assert_eq!(t(&[4.0], &[1]).sqrt().unwrap().data(), &[2.0]);
}

#[test]
fn non_finite_diagnostic_names_first_bad_op() {
    // exp overflow is impossible here; force non-finite through division by a
    // tiny divisor after a benign chain.
    let a = t(&[1.0e300], &[1]);
    let b = a.mul(&a).unwrap(); // overflows to inf
    let c = b.add_const(1.0);
    assert!(!c.is_finite());
    assert_eq!(c.first_non_finite_op().as_deref(), Some("mul"));
}
