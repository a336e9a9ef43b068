//! Randomized finite-difference validation harness.
//!
//! Shared by the `gradcheck` CLI subcommand and the acceptance suite:
//! every differentiable primitive, every full model variant, and the
//! interleaved-chain closed form are checked against independent
//! oracles (central finite differences, or the tape for the chain).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::InterleavedChain;
use crate::error::Result;
use crate::graph::{finite_diff_grad, rel_error, Activation, Graph, NodeId};
use crate::model::{Model, ModelSpec, Variant};
use crate::tensor::Tensor;

/// Outcome of one check group.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

fn take(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Compares the tape gradient of a scalar-valued construction against
/// central finite differences over a flat parameter vector.
fn check_case(
    build: impl Fn(&[f64]) -> (Graph, NodeId, Vec<NodeId>),
    theta: &[f64],
) -> f64 {
    let (mut g, loss, leafs) = build(theta);
    let grads = g.backward(loss).expect("scalar loss");
    let mut analytic = Vec::new();
    for leaf in leafs {
        analytic.extend_from_slice(grads.node(leaf).data());
    }
    let fd = finite_diff_grad(
        |t| {
            let (g, loss, _) = build(t);
            g.value(loss).item()
        },
        theta,
        1e-6,
    );
    analytic
        .iter()
        .zip(&fd)
        .map(|(a, b)| rel_error(*a, *b))
        .fold(0.0, f64::max)
}

/// Randomized checks of each primitive in isolation (affine, the three
/// activations, convolution, pooling, concatenation, both losses).
pub fn check_primitives(seed: u64, trials: usize) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        // Affine + activation stack over a concat of two inputs.
        {
            let (m, n1, n2) = (3usize, 2usize, 3usize);
            let n = n1 + n2;
            let mut theta = take(&mut rng, m * n + m + n);
            // ReLU trials need pre-activations away from the kink; nudge
            // the bias until they are.
            let kind = match trial % 3 {
                0 => Activation::Sigmoid,
                1 => Activation::Softplus,
                _ => Activation::Relu,
            };
            let build = |t: &[f64]| -> (Graph, NodeId, Vec<NodeId>) {
                let mut g = Graph::new();
                let w = g.input(Tensor::new(&[m, n], t[..m * n].to_vec()).unwrap());
                let b = g.input(Tensor::from_vec(t[m * n..m * n + m].to_vec()));
                let x1 = g.input(Tensor::from_vec(t[m * n + m..m * n + m + n1].to_vec()));
                let x2 = g.input(Tensor::from_vec(t[m * n + m + n1..].to_vec()));
                let x = g.concat(&[x1, x2]).unwrap();
                let z = g.affine(w, x, b).unwrap();
                let a = g.activation(kind, z);
                let loss = g.dot(a, Tensor::from_vec(vec![1.0; m])).unwrap();
                (g, loss, vec![w, b, x1, x2])
            };
            if kind == Activation::Relu {
                let pre_activations = |t: &[f64]| -> Vec<f64> {
                    let x = &t[m * n + m..];
                    (0..m)
                        .map(|i| t[m * n + i] + (0..n).map(|j| t[i * n + j] * x[j]).sum::<f64>())
                        .collect()
                };
                while pre_activations(&theta).iter().any(|v| v.abs() < 1e-3) {
                    for v in theta.iter_mut().take(m * n + m) {
                        *v += 0.21;
                    }
                }
            }
            worst = worst.max(check_case(build, &theta));
        }
        // Conv + pool + mean-squared loss.
        {
            let (c_out, k, len) = (2usize, 2usize, 7usize);
            let pooled_len = len - k; // conv: len-k+1, then pool(2, 1)
            let theta = take(&mut rng, c_out * k + c_out + len);
            let target: Vec<f64> = take(&mut rng, c_out * pooled_len);
            let build = |t: &[f64]| -> (Graph, NodeId, Vec<NodeId>) {
                let mut g = Graph::new();
                let kn = g.input(Tensor::new(&[c_out, 1, k], t[..c_out * k].to_vec()).unwrap());
                let b = g.input(Tensor::from_vec(t[c_out * k..c_out * k + c_out].to_vec()));
                let x1 = g.input(Tensor::from_vec(t[c_out * k + c_out..].to_vec()));
                let x = g.reshape(x1, &[1, len]).unwrap();
                let c = g.conv1d_valid(x, kn, b).unwrap();
                let a = g.activation(Activation::Softplus, c);
                let p = g.avg_pool1d(a, 2, 1).unwrap();
                let f = g.flatten(p);
                let loss = g.mse(f, Tensor::from_vec(target.clone())).unwrap();
                (g, loss, vec![kn, b, x1])
            };
            worst = worst.max(check_case(build, &theta));
        }
        // Gaussian negative log likelihood head.
        {
            let theta = vec![
                rng.random_range(-2.0..2.0),
                rng.random_range(0.5..2.0), // pre-softplus, sigma stays healthy
            ];
            let y = rng.random_range(-2.0..2.0);
            let build = |t: &[f64]| -> (Graph, NodeId, Vec<NodeId>) {
                let mut g = Graph::new();
                let mu = g.input(Tensor::scalar(t[0]));
                let pre = g.input(Tensor::scalar(t[1]));
                let sigma = g.activation(Activation::Softplus, pre);
                let loss = g.gaussian_nll(mu, sigma, y).unwrap();
                (g, loss, vec![mu, pre])
            };
            worst = worst.max(check_case(build, &theta));
        }
    }
    CheckReport {
        name: "primitives".to_string(),
        trials,
        max_rel_error: worst,
        tolerance: 1e-5,
    }
}

/// Minimum distance every ReLU pre-activation must keep from its kink
/// for the finite-difference oracle (step 1e-6) to be valid: the loss
/// has a corner at each kink, where central differences measure the
/// average of the two one-sided slopes instead of the derivative.
pub const RELU_MARGIN: f64 = 1e-4;

/// Full-model gradient check of one variant at one trial point. Returns
/// the max relative error, or `None` when the drawn point sits too close
/// to a ReLU kink (zero-initialized biases make exact kinks reachable,
/// e.g. through dead windows in later convolution stages).
pub fn model_grad_trial(variant: Variant, run_seed: u64) -> Result<Option<f64>> {
    let spec = ModelSpec::new(variant, 3).with_hidden(4).with_seed(run_seed);
    let mut model = Model::build(&spec)?;
    // Randomize every parameter (biases included) so pre-activations are
    // continuously distributed.
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed ^ 0xABCD);
    for p in model.params_mut().iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let x = Tensor::from_vec((0..6).map(|_| rng.random_range(0.0..1.0)).collect());
    let y = Tensor::from_vec((0..3).map(|_| rng.random_range(0.0..1.0)).collect());

    let mut pass = model.forward_train(&x, &y)?;
    if pass.graph.min_relu_margin() < RELU_MARGIN {
        return Ok(None);
    }
    let grads = pass.graph.backward(pass.loss)?;
    model.params_mut().zero_grads();
    pass.graph.accumulate_param_grads(&grads, model.params_mut());
    let analytic: Vec<f64> = model
        .params()
        .iter()
        .flat_map(|p| p.grad.data().to_vec())
        .collect();

    let theta: Vec<f64> = model
        .params()
        .iter()
        .flat_map(|p| p.value.data().to_vec())
        .collect();
    let mut probe = model.clone();
    let fd = finite_diff_grad(
        |t| {
            let mut off = 0;
            for p in probe.params_mut().iter_mut() {
                let n = p.value.len();
                p.value.data_mut().copy_from_slice(&t[off..off + n]);
                off += n;
            }
            probe.forward_train(&x, &y).unwrap().loss_value
        },
        &theta,
        1e-6,
    );
    let mut worst = 0.0f64;
    for (a, b) in analytic.iter().zip(&fd) {
        worst = worst.max(rel_error(*a, *b));
    }
    Ok(Some(worst))
}

/// Randomized full-model gradient checks over all four variants at a
/// scaled-down size (tau 3, hidden width 4). Inputs are drawn from the
/// scaled data range [0, 1]; trial points within [`RELU_MARGIN`] of a
/// ReLU kink are skipped deterministically and replaced by the next
/// seed.
pub fn check_model_variants(seed: u64, trials_per_variant: usize) -> Result<CheckReport> {
    let mut worst = 0.0f64;
    let variants = [Variant::Fn, Variant::Fn2, Variant::Cfn, Variant::Cfn2];
    for (vi, &variant) in variants.iter().enumerate() {
        let mut completed = 0;
        let mut attempt = 0u64;
        while completed < trials_per_variant {
            let run_seed = seed
                .wrapping_add((vi * trials_per_variant) as u64)
                .wrapping_add(attempt);
            attempt += 1;
            if attempt > 4 * trials_per_variant as u64 {
                return Err(crate::error::Error::Argument(
                    "too many kink-adjacent trial points; widen the margin or reseed".into(),
                ));
            }
            match model_grad_trial(variant, run_seed)? {
                Some(err) => {
                    worst = worst.max(err);
                    completed += 1;
                }
                None => continue,
            }
        }
    }
    Ok(CheckReport {
        name: "model-variants".to_string(),
        trials: trials_per_variant * variants.len(),
        max_rel_error: worst,
        tolerance: 1e-5,
    })
}

/// Closed-form interleaved-chain gradients against the tape, over sigmoid
/// chains of each depth in `depths`.
pub fn check_chain_equivalence(depths: impl Iterator<Item = usize>, seed: u64) -> Result<CheckReport> {
    let mut worst = 0.0f64;
    let mut trials = 0;
    for depth in depths {
        let chain = InterleavedChain::random(depth, Activation::Sigmoid, seed + depth as u64)?;
        let analytic = chain.analytic_grads();
        let tape = chain.tape_grads()?;
        for (a, b) in analytic
            .w_hidden
            .iter()
            .chain(&analytic.w_out)
            .zip(tape.w_hidden.iter().chain(&tape.w_out))
        {
            worst = worst.max(rel_error(*a, *b));
        }
        trials += 1;
    }
    Ok(CheckReport {
        name: "interleaved-chain".to_string(),
        trials,
        max_rel_error: worst,
        tolerance: 1e-9,
    })
}
