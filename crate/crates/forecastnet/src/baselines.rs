//! Reference predictors: a single-hidden-layer MLP trained with the same
//! machinery, and the seasonal-naive repeat of the previous cycle.

use crate::error::{Error, Result};
use crate::graph::Activation;
use crate::model::{CellPlan, HeadPlan, Model, NetPlan, Topology};
use crate::cells::InitScheme;

/// Single-hidden-layer MLP: 2 tau inputs, 4 tau ReLU hidden units, tau
/// linear outputs, trained with mean squared error like the linear
/// model variants.
pub fn build_mlp(tau: usize, seed: u64) -> Result<Model> {
    if tau < 1 {
        return Err(Error::Spec("tau must be >= 1".into()));
    }
    Model::from_plan(NetPlan {
        name: "mlp".to_string(),
        topology: Topology::Terminal,
        cell: CellPlan::Dense {
            widths: vec![4 * tau],
            activation: Activation::Relu,
            init: InitScheme::He,
        },
        head: HeadPlan::Linear,
        n_inputs: 2 * tau,
        n_outputs: tau,
        seed,
    })
}

/// Repeats the most recent seasonal cycle: the forecast for the next tau
/// steps is the last tau input values.
pub fn seasonal_naive(input: &[f64], tau: usize) -> Result<Vec<f64>> {
    if input.len() != 2 * tau {
        return Err(Error::Dimension(format!(
            "seasonal naive expects 2 tau = {} inputs, got {}",
            2 * tau,
            input.len()
        )));
    }
    Ok(input[tau..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{finite_diff_grad, rel_error};
    use crate::metrics::mase;
    use crate::model::PredictMode;
    use crate::synth::gen_baseline;
    use crate::tensor::Tensor;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_widths() {
        let m = build_mlp(12, 0).unwrap();
        assert_eq!(m.n_inputs(), 24);
        assert_eq!(m.n_outputs(), 12);
        // One trunk with a 48-unit hidden layer: 48 * 24 weights + 48
        // biases + 12 heads of (48 + 1).
        let census = m.param_census();
        assert_eq!(census.total, 48 * 24 + 48 + 12 * 49);
        assert_eq!(census.per_cell.len(), 1);
    }

    #[test]
    fn mlp_zero_weights_zero_forecast() {
        let mut m = build_mlp(4, 0).unwrap();
        for p in m.params_mut().iter_mut() {
            p.value.fill_zero();
        }
        let x = Tensor::from_vec(vec![0.7; 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = m.forward_predict(&x, PredictMode::Mean, &mut rng).unwrap();
        assert!(r.point.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mlp_gradient_check() {
        let mut m = build_mlp(3, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec((0..6).map(|_| rng.random_range(0.0..1.0)).collect());
        let y = Tensor::from_vec((0..3).map(|_| rng.random_range(0.0..1.0)).collect());

        let mut pass = m.forward_train(&x, &y).unwrap();
        let grads = pass.graph.backward(pass.loss).unwrap();
        m.params_mut().zero_grads();
        pass.graph.accumulate_param_grads(&grads, m.params_mut());
        let analytic: Vec<f64> = m.params().iter().flat_map(|p| p.grad.data().to_vec()).collect();

        let theta: Vec<f64> = m.params().iter().flat_map(|p| p.value.data().to_vec()).collect();
        let mut probe = m.clone();
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
        for (a, b) in analytic.iter().zip(&fd) {
            assert!(rel_error(*a, *b) < 1e-5, "mlp grad {} vs fd {}", a, b);
        }
    }

    #[test]
    fn seasonal_naive_repeats_last_cycle() {
        let input: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let out = seasonal_naive(&input, 10).unwrap();
        assert_eq!(out, (11..=20).map(|i| i as f64).collect::<Vec<_>>());
        assert!(seasonal_naive(&input, 8).is_err());
    }

    #[test]
    fn seasonal_naive_exact_on_periodic_series() {
        // tau equal to the full period: repeating the last cycle is exact.
        let series: Vec<f64> = (0..300)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 50.0).sin())
            .collect();
        let tau = 50;
        for start in (0..150).step_by(17) {
            let input = &series[start..start + 2 * tau];
            let target = &series[start + 2 * tau..start + 3 * tau];
            let fc = seasonal_naive(input, tau).unwrap();
            for (f, t) in fc.iter().zip(target) {
                assert!((f - t).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn seasonal_naive_positive_mase_on_baseline_synthetic() {
        // The baseline series repeats every 100 steps, not every 20, so
        // repeating the last 20 values leaves real error.
        let s = gen_baseline(600);
        let tau = 20;
        let insample = &s.values[..500];
        let mut worst = 0.0f64;
        for start in (500 - 2 * tau..s.len() - 3 * tau).step_by(7) {
            let input = &s.values[start..start + 2 * tau];
            let target = &s.values[start + 2 * tau..start + 3 * tau];
            let fc = seasonal_naive(input, tau).unwrap();
            worst = worst.max(mase(&fc, target, insample).unwrap());
        }
        assert!(worst > 0.01, "seasonal naive should err on the 100-periodic series");
    }
}
