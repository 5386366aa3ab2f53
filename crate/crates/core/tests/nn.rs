mod common;

use common::rng;
use iavi::nn::{
    adam_step, cross_entropy, gradient_check, load_checkpoint, mse_loss, polyak_update, save_checkpoint, AdamState, Mlp,
};
use rand::Rng;

/// Loss over a batch: MSE on one chosen output per sample plus softmax
/// cross-entropy on all outputs, so both loss paths are checked.
fn batch_loss(net: &Mlp, inputs: &[Vec<f64>], picks: &[usize], targets: &[f64]) -> f64 {
    let mut total = 0.0;
    let preds: Vec<f64> = inputs
        .iter()
        .zip(picks)
        .map(|(x, &k)| net.forward(x).unwrap()[k])
        .collect();
    total += mse_loss(&preds, targets).0;
    for (x, &k) in inputs.iter().zip(picks) {
        total += cross_entropy(&net.forward(x).unwrap(), k, inputs.len()).0;
    }
    total
}

fn batch_grad(net: &Mlp, inputs: &[Vec<f64>], picks: &[usize], targets: &[f64]) -> Vec<f64> {
    let preds: Vec<f64> = inputs
        .iter()
        .zip(picks)
        .map(|(x, &k)| net.forward(x).unwrap()[k])
        .collect();
    let (_, dpred) = mse_loss(&preds, targets);
    let mut grads = vec![0.0; net.params().len()];
    for (i, (x, &k)) in inputs.iter().zip(picks).enumerate() {
        let out = net.forward(x).unwrap();
        let (_, mut g) = cross_entropy(&out, k, inputs.len());
        g[k] += dpred[i];
        for (acc, v) in grads.iter_mut().zip(net.backward(x, &g).unwrap()) {
            *acc += v;
        }
    }
    grads
}

#[test]
fn gradient_check_over_random_configurations() {
    let mut r = rng(2024);
    let mut worst = 0.0f64;
    for config in 0..50 {
        let depth = r.random_range(1..4);
        let mut sizes = vec![r.random_range(1..8)];
        for _ in 0..depth {
            sizes.push(r.random_range(1..12));
        }
        sizes.push(r.random_range(2..6));
        let net = Mlp::new(&sizes, config).unwrap();
        let batch = r.random_range(1..6);
        let inputs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..sizes[0]).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let out = *sizes.last().unwrap();
        let picks: Vec<usize> = (0..batch).map(|_| r.random_range(0..out)).collect();
        let targets: Vec<f64> = (0..batch).map(|_| r.random_range(-1.0..1.0)).collect();
        let analytic = batch_grad(&net, &inputs, &picks, &targets);
        let report = gradient_check(
            &net,
            &inputs,
            |n| batch_loss(n, &inputs, &picks, &targets),
            &analytic,
            1e-5,
            200,
            config,
        )
        .unwrap();
        assert!(report.checked > 0);
        worst = worst.max(report.max_relative_error);
    }
    assert!(worst <= 1e-4, "max relative error {worst}");
}

#[test]
fn linear_layer_gradient_by_hand() {
    // One linear layer 2 -> 1, MSE on a single sample: dL/dw = 2 (p - t) x.
    let net = Mlp::from_params(&[2, 1], vec![0.5, -1.0, 0.25]).unwrap();
    let x = [2.0, 3.0];
    let p = net.forward(&x).unwrap()[0];
    assert!((p - (1.0 - 3.0 + 0.25)).abs() < 1e-15);
    let (_, g) = mse_loss(&[p], &[1.0]);
    let grads = net.backward(&x, &g).unwrap();
    let d = 2.0 * (p - 1.0);
    assert_eq!(grads, vec![d * 2.0, d * 3.0, d]);
}

#[test]
fn rectifier_hand_trace() {
    // Hidden pre-activations are both negative, so only the output bias survives.
    let net = Mlp::from_params(&[2, 2, 1], vec![1.0, 1.0, 1.0, 1.0, -5.0, -5.0, 3.0, 3.0, 0.5]).unwrap();
    assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), vec![0.5]);
}

#[test]
fn adam_matches_reference_over_many_steps() {
    let mut r = rng(5);
    let n = 7;
    let mut params: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut reference = params.clone();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut state = AdamState::new(n);
    let lr = 0.01;
    for t in 1..=100 {
        let grads: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        adam_step(&mut params, &grads, &mut state, lr).unwrap();
        for i in 0..n {
            m[i] = 0.9 * m[i] + 0.1 * grads[i];
            v[i] = 0.999 * v[i] + 0.001 * grads[i] * grads[i];
            let mh = m[i] / (1.0 - 0.9f64.powi(t));
            let vh = v[i] / (1.0 - 0.999f64.powi(t));
            reference[i] -= lr * mh / (vh.sqrt() + 1e-8);
        }
    }
    for (a, b) in params.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut params = vec![0.0, 0.0, 0.0];
    let mut state = AdamState::new(3);
    adam_step(&mut params, &[4.0, -0.01, 0.0], &mut state, 0.1).unwrap();
    assert!((params[0] + 0.1).abs() < 1e-6);
    assert!((params[1] - 0.1).abs() < 1e-4);
    assert_eq!(params[2], 0.0);
}

#[test]
fn polyak_cases() {
    let online = Mlp::from_params(&[1, 1], vec![2.0, 2.0]).unwrap();
    let mut target = Mlp::zeros(&[1, 1]).unwrap();
    polyak_update(&mut target, &online, 0.0).unwrap();
    assert_eq!(target.params(), &[0.0, 0.0]);
    polyak_update(&mut target, &online, 0.5).unwrap();
    assert_eq!(target.params(), &[1.0, 1.0]);
    polyak_update(&mut target, &online, 1.0).unwrap();
    assert_eq!(target, online);
    let other = Mlp::zeros(&[2, 1]).unwrap();
    assert!(polyak_update(&mut target, &other, 0.5).is_err());
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    let net = Mlp::new(&[5, 64, 64, 3], 77).unwrap();
    save_checkpoint(&path, &net).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, net);
    let x = [0.1, -0.2, 0.3, 0.4, -0.5];
    assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"sizes":[2,2],"params":[1.0]}"#).unwrap();
    assert!(load_checkpoint(&path).is_err());
}
