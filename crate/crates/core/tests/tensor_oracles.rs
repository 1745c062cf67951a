//! Oracle checks for the tensor engine: every implementation path is compared
//! against an independent brute-force reimplementation.

use mmcer_core::tensor::{grad_check, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// Triple-loop matrix product, kept deliberately naive.
fn matmul_oracle(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f32;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Direct nested-loop causal convolution over the zero left-padded input.
fn conv_oracle(
    x: &[f32],
    w: &[f32],
    t_len: usize,
    c_in: usize,
    k: usize,
    c_out: usize,
    dilation: usize,
) -> Vec<f32> {
    let mut out = vec![0.0f32; t_len * c_out];
    for t in 0..t_len {
        for co in 0..c_out {
            let mut acc = 0.0f32;
            for j in 0..k {
                let offset = (k - 1 - j) * dilation;
                if offset > t {
                    continue;
                }
                for ci in 0..c_in {
                    acc += x[(t - offset) * c_in + ci] * w[(j * c_in + ci) * c_out + co];
                }
            }
            out[t * c_out + co] = acc;
        }
    }
    out
}

fn softmax_oracle_f64(x: &[f32]) -> Vec<f64> {
    let max = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = x.iter().map(|&v| ((v as f64) - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn cross_entropy_oracle_f64(logits: &[f32], k: usize, targets: &[usize]) -> f64 {
    let mut total = 0.0f64;
    for (t, &y) in targets.iter().enumerate() {
        let row: Vec<f64> = logits[t * k..(t + 1) * k].iter().map(|&v| v as f64).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / targets.len() as f64
}

#[test]
fn matmul_matches_triple_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (m, k, n) = (4, 3, 5);
    let a_data = rand_vec(&mut rng, m * k);
    let b_data = rand_vec(&mut rng, k * n);
    let expected = matmul_oracle(&a_data, &b_data, m, k, n);

    let mut g = Graph::<f32>::new();
    let a = g.leaf_raw(vec![m, k], a_data, false).unwrap();
    let b = g.leaf_raw(vec![k, n], b_data, false).unwrap();
    let out = g.matmul(a, b).unwrap();
    for (got, want) in g.value(out).iter().zip(&expected) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (t_len, c_in, k, c_out, dilation) = (7, 2, 3, 4, 2);
    let x_data = rand_vec(&mut rng, t_len * c_in);
    let w_data = rand_vec(&mut rng, k * c_in * c_out);
    let expected = conv_oracle(&x_data, &w_data, t_len, c_in, k, c_out, dilation);

    let mut g = Graph::<f32>::new();
    let x = g.leaf_raw(vec![t_len, c_in], x_data, false).unwrap();
    let w = g.leaf_raw(vec![k, c_in, c_out], w_data, false).unwrap();
    let out = g.conv1d_causal(x, w, dilation).unwrap();
    for (got, want) in g.value(out).iter().zip(&expected) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn softmax_matches_64bit_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x_data = rand_vec(&mut rng, 5);
    let expected = softmax_oracle_f64(&x_data);

    let mut g = Graph::<f32>::new();
    let x = g.leaf_raw(vec![5], x_data, false).unwrap();
    let out = g.softmax(x, 0).unwrap();
    for (got, want) in g.value(out).iter().zip(&expected) {
        assert!(((*got as f64) - want).abs() < 1e-6);
    }
}

#[test]
fn cross_entropy_matches_64bit_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (t_len, k) = (3, 4);
    let logits_data = rand_vec(&mut rng, t_len * k);
    let targets = [1usize, 3, 0];
    let expected = cross_entropy_oracle_f64(&logits_data, k, &targets);

    let mut g = Graph::<f32>::new();
    let logits = g.leaf_raw(vec![t_len, k], logits_data, false).unwrap();
    let loss = g.cross_entropy(logits, &targets, None).unwrap();
    assert!(((g.value(loss)[0] as f64) - expected).abs() < 1e-5);
}

#[test]
fn conv_block_grad_check_64bit() {
    // conv → relu → conv with a bias shift that keeps pre-activations away
    // from the ReLU kink, where finite differences measure a secant instead
    // of the derivative.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let t_len = 6;
    let x = Tensor::<f64>::new(
        vec![t_len, 3],
        (0..t_len * 3).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let w1 = Tensor::<f64>::new(
        vec![3, 3, 4],
        (0..36).map(|_| rng.random_range(-0.5..0.5)).collect(),
    )
    .unwrap();
    let b1 = Tensor::<f64>::new(vec![4], vec![0.4; 4]).unwrap();
    let w2 = Tensor::<f64>::new(
        vec![3, 4, 2],
        (0..24).map(|_| rng.random_range(-0.5..0.5)).collect(),
    )
    .unwrap();

    let err = grad_check(
        |g: &mut Graph<f64>, vars: &[Var]| {
            let h = g.conv1d_causal(vars[0], vars[1], 1)?;
            let h = g.add_bias(h, vars[2])?;
            let h = g.relu(h)?;
            let h = g.conv1d_causal(h, vars[3], 2)?;
            g.sum(h)
        },
        &[x, w1, b1, w2],
        1e-3,
        1000,
        0,
    )
    .unwrap();
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn conv_causality_is_exact() {
    // Perturbing input frame t changes no output frame earlier than t.
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (t_len, c_in, k, c_out) = (9, 3, 3, 2);
    let x_data = rand_vec(&mut rng, t_len * c_in);
    let w_data = rand_vec(&mut rng, k * c_in * c_out);

    let run = |x: Vec<f32>| {
        let mut g = Graph::<f32>::new();
        let xv = g.leaf_raw(vec![t_len, c_in], x, false).unwrap();
        let wv = g.leaf_raw(vec![k, c_in, c_out], w_data.clone(), false).unwrap();
        let out = g.conv1d_causal(xv, wv, 2).unwrap();
        g.value(out).to_vec()
    };

    let base = run(x_data.clone());
    for t in 0..t_len {
        let mut perturbed = x_data.clone();
        perturbed[t * c_in] += 1.0;
        let changed = run(perturbed);
        for earlier in 0..t {
            for c in 0..c_out {
                assert_eq!(
                    base[earlier * c_out + c],
                    changed[earlier * c_out + c],
                    "frame {earlier} changed after perturbing frame {t}"
                );
            }
        }
    }
}

#[test]
fn deterministic_replay_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x_data = rand_vec(&mut rng, 4 * 3);
    let w_data = rand_vec(&mut rng, 3 * 5);

    let run = || {
        let mut g = Graph::<f32>::new();
        let x = g.leaf_raw(vec![4, 3], x_data.clone(), false).unwrap();
        let w = g.leaf_raw(vec![3, 5], w_data.clone(), false).unwrap();
        let h = g.matmul(x, w).unwrap();
        let h = g.relu(h).unwrap();
        let s = g.softmax(h, 1).unwrap();
        g.value(s).to_vec()
    };
    let a = run();
    let b = run();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
               b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}
