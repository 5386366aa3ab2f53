//! Fully-connected networks with rectifier hidden layers and a linear
//! output, trained with Adam. Parameters are one flat `f64` vector; each
//! layer stores its `out × in` weight matrix row-major followed by its bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pub pre_activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has at least the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero network with the given layer sizes (input first).
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidDimension(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Uniform fan-in initialisation, `U(-1/√fan_in, 1/√fan_in)` for weights
    /// and biases alike.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out + fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::InvalidDimension(format!(
                "{} parameters for sizes {sizes:?} (expected {})",
                params.len(),
                net.params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offset of layer `l`'s weights, and its input/output widths.
    fn layer(&self, l: usize) -> (usize, usize, usize) {
        let offset = param_count(&self.sizes[..=l]);
        (offset, self.sizes[l], self.sizes[l + 1])
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.sizes == other.sizes
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.activations.pop().unwrap())
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        if input.len() != self.n_inputs() {
            return Err(Error::InvalidDimension(format!(
                "input of length {}, network expects {}",
                input.len(),
                self.n_inputs()
            )));
        }
        let n_layers = self.n_layers();
        let mut activations = Vec::with_capacity(n_layers + 1);
        let mut pre_activations = Vec::with_capacity(n_layers);
        activations.push(input.to_vec());
        for l in 0..n_layers {
            let (offset, n_in, n_out) = self.layer(l);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &activations[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            let out = if l + 1 < n_layers {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre_activations.push(z);
            activations.push(out);
        }
        Ok(ForwardTrace {
            activations,
            pre_activations,
        })
    }

    /// Accumulates `∂loss/∂params` into `grads` given `∂loss/∂output`.
    pub fn backward_into(&self, trace: &ForwardTrace, output_grad: &[f64], grads: &mut [f64]) -> Result<()> {
        if output_grad.len() != self.n_outputs() || grads.len() != self.params.len() {
            return Err(Error::InvalidDimension("gradient buffer does not match network".into()));
        }
        let n_layers = self.n_layers();
        let mut delta = output_grad.to_vec();
        for l in (0..n_layers).rev() {
            let (offset, n_in, n_out) = self.layer(l);
            if l + 1 < n_layers {
                for (d, z) in delta.iter_mut().zip(&trace.pre_activations[l]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &trace.activations[l];
            let (w_grad, rest) = grads[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                rest[o] += d;
                for (g, v) in w_grad[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *g += d * v;
                }
            }
            if l > 0 {
                let weights = &self.params[offset..offset + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// Gradient of a loss with respect to every parameter, given the loss
    /// gradient at the output for one input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(input)?;
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(&trace, output_grad, &mut grads)?;
        Ok(grads)
    }

    /// Signs of every hidden pre-activation over `inputs`; a change of this
    /// pattern means a rectifier kink was crossed.
    pub fn activation_pattern(&self, inputs: &[Vec<f64>]) -> Result<Vec<bool>> {
        let mut pattern = Vec::new();
        for x in inputs {
            let trace = self.forward_trace(x)?;
            for z in &trace.pre_activations[..self.n_layers() - 1] {
                pattern.extend(z.iter().map(|v| *v > 0.0));
            }
        }
        Ok(pattern)
    }
}

/// Mean squared error over one selected output per sample. Returns the loss
/// and the gradient with respect to each selected output.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let m = predictions.len() as f64;
    let loss = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / m;
    let grads = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| 2.0 * (p - t) / m)
        .collect();
    (loss, grads)
}

/// Softmax cross-entropy of one sample's logits against a class index,
/// scaled by `1 / batch`. Returns the loss contribution and logit gradient.
pub fn cross_entropy(logits: &[f64], label: usize, batch: usize) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let scale = 1.0 / batch as f64;
    let grads = probs
        .iter()
        .enumerate()
        .map(|(j, p)| scale * (p - if j == label { 1.0 } else { 0.0 }))
        .collect();
    ((lse - logits[label]) * scale, grads)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn for_net(net: &Mlp) -> Self {
        Self::new(net.params().len())
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::InvalidDimension("adam buffers do not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - state.beta1.powi(t);
    let correction2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        let v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / correction1;
        let v_hat = v / correction2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// `target ← (1 − τ) · target + τ · online`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::InvalidDimension(
            "target and online networks differ in shape".into(),
        ));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("tau {tau} outside [0, 1]")));
    }
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t = (1.0 - tau) * *t + tau * o;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a rectifier kink.
    pub excluded_kinks: usize,
}

/// Compares `analytic` against central differences of `loss` on a random
/// subsample of `n_coords` parameters (all of them if fewer exist).
///
/// The relative error of a coordinate is `|a − n| / max(|a|, |n|, 1e-6)`.
/// Coordinates whose `±step` perturbation changes the rectifier pattern on
/// `inputs` are excluded and counted.
pub fn gradient_check(
    net: &Mlp,
    inputs: &[Vec<f64>],
    loss: impl Fn(&Mlp) -> f64,
    analytic: &[f64],
    step: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput("finite-difference step must be positive".into()));
    }
    if analytic.len() != net.params.len() {
        return Err(Error::InvalidDimension(
            "analytic gradient does not match network".into(),
        ));
    }
    let n = net.params.len();
    let mut coords: Vec<usize> = (0..n).collect();
    if n_coords < n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..n_coords {
            let j = rng.random_range(i..n);
            coords.swap(i, j);
        }
        coords.truncate(n_coords);
    }
    let base_pattern = net.activation_pattern(inputs)?;
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        excluded_kinks: 0,
    };
    for i in coords {
        let original = probe.params[i];
        probe.params[i] = original + step;
        let plus_pattern = probe.activation_pattern(inputs)?;
        let plus = loss(&probe);
        probe.params[i] = original - step;
        let minus_pattern = probe.activation_pattern(inputs)?;
        let minus = loss(&probe);
        probe.params[i] = original;
        if plus_pattern != base_pattern || minus_pattern != base_pattern {
            report.excluded_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

/// JSON checkpoint of a network: layer sizes plus the flat parameter array.
pub fn save_checkpoint(path: impl AsRef<std::path::Path>, net: &Mlp) -> Result<()> {
    crate::io::write_json(path, net)
}

pub fn load_checkpoint(path: impl AsRef<std::path::Path>) -> Result<Mlp> {
    let net: Mlp = crate::io::read_json(path)?;
    Mlp::from_params(&net.sizes, net.params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let net = Mlp::from_params(&[2, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[3.5, -1.25]).unwrap(), vec![3.5, -1.25]);
    }

    #[test]
    fn dead_hidden_layer_leaves_bias_path() {
        // layer 1: 2 -> 2 with all pre-activations negative for x = (1, 1)
        // layer 2: 2 -> 2 with bias (0.3, -0.7)
        let params = vec![
            -1.0, -1.0, -2.0, 0.5, // W1
            0.0, 0.0, // b1 -> z = (-2, -1.5)
            4.0, 5.0, 6.0, 7.0, // W2
            0.3, -0.7, // b2
        ];
        let net = Mlp::from_params(&[2, 2, 2], params).unwrap();
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn shape_mismatch_reported() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::from_params(&[2, 2], vec![0.0; 5]).is_err());
    }

    #[test]
    fn zero_upstream_gradient() {
        let net = Mlp::new(&[3, 5, 2], 4).unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_layer_mse_gradient() {
        // single sample: grad W = (2/m)(pred - target) x^T, grad b = (2/m)(pred - target)
        let net = Mlp::from_params(&[2, 1], vec![0.5, -1.0, 0.25]).unwrap();
        let x = [2.0, 3.0];
        let pred = net.forward(&x).unwrap()[0]; // 1 - 3 + 0.25 = -1.75
        assert!((pred + 1.75).abs() < 1e-15);
        let (_, dl) = mse_loss(&[pred], &[1.0]);
        let g = net.backward(&x, &dl).unwrap();
        let r = 2.0 * (pred - 1.0);
        assert_eq!(g, vec![r * 2.0, r * 3.0, r]);
    }

    #[test]
    fn adam_zero_gradient_decays_moments() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        st.first_moment = vec![0.5, 0.5];
        st.second_moment = vec![0.25, 0.25];
        adam_step(&mut p, &[0.0, 0.0], &mut st, 0.1).unwrap();
        assert_eq!(st.first_moment, vec![0.45, 0.45]);
        assert!((st.second_moment[0] - 0.24975).abs() < 1e-15);
        assert_eq!(st.step, 1);

        let mut p = vec![1.0, -2.0];
        let mut fresh = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut fresh, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0, 1.0, 1.0];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[3.0, -0.02, 1e3], &mut st, 1e-3).unwrap();
        // m̂ = g, v̂ = g², so the step is lr · g / (|g| + ε) ≈ lr · sign(g)
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-10);
        assert!((p[1] - (1.0 + 1e-3)).abs() < 1e-9);
        assert!((p[2] - (1.0 - 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn adam_is_pure() {
        let g = [0.3, -0.1];
        let run = || {
            let mut p = vec![0.2, 0.4];
            let mut st = AdamState::new(2);
            adam_step(&mut p, &g, &mut st, 0.01).unwrap();
            (p, st)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn polyak_examples() {
        let online = Mlp::from_params(&[1, 1], vec![2.0, 2.0]).unwrap();
        let mut target = Mlp::zeros(&[1, 1]).unwrap();
        polyak_update(&mut target, &online, 0.5).unwrap();
        assert_eq!(target.params(), &[1.0, 1.0]);
        polyak_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target.params(), &[1.0, 1.0]);
        polyak_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.params(), online.params());
        assert!(polyak_update(&mut target, &online, 1.5).is_err());
    }

    #[test]
    fn gradient_check_linear_quadratic() {
        let net = Mlp::new(&[4, 3], 9).unwrap();
        let x = vec![0.3, -1.2, 0.8, 2.0];
        let target = [0.5, -0.5, 1.0];
        let loss = |n: &Mlp| {
            let out = n.forward(&x).unwrap();
            mse_loss(&out, &target).0
        };
        let out = net.forward(&x).unwrap();
        let (_, dl) = mse_loss(&out, &target);
        let g = net.backward(&x, &dl).unwrap();
        let report = gradient_check(&net, std::slice::from_ref(&x), loss, &g, 1e-5, 1000, 1).unwrap();
        assert_eq!(report.checked, 15);
        assert!(report.max_relative_error <= 1e-8, "{report:?}");
    }

    #[test]
    fn gradient_check_excludes_kinks() {
        // hidden pre-activation exactly 0 for x = (1, -1)
        let net = Mlp::from_params(&[2, 1, 1], vec![1.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let x = vec![1.0, -1.0];
        let loss = |n: &Mlp| n.forward(&x).unwrap()[0];
        let g = net.backward(&x, &[1.0]).unwrap();
        let report = gradient_check(&net, std::slice::from_ref(&x), loss, &g, 1e-5, 100, 0).unwrap();
        assert!(report.excluded_kinks > 0);
        assert_eq!(report.checked + report.excluded_kinks, 5);
    }

    #[test]
    fn cross_entropy_matches_definition() {
        let (loss, grad) = cross_entropy(&[1.0, 2.0, 0.5], 1, 1);
        let lse = (1f64.exp() + 2f64.exp() + 0.5f64.exp()).ln();
        assert!((loss - (lse - 2.0)).abs() < 1e-14);
        assert!(grad.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = Mlp::new(&[3, 4, 2], 11).unwrap();
        save_checkpoint(&path, &net).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), net);
    }
}
