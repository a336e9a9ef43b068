//! Single-neuron interleaved chain with a closed-form gradient.
//!
//! A chain of scalar hidden units, each followed by a scalar linear
//! output tap. Because each output's target value (rather than the
//! output itself) is fed to the next hidden unit, the backpropagated
//! gradient of a hidden weight decomposes into a *sum over output taps*:
//! the tap k positions downstream contributes its loss derivative times
//! the tap weight times a product of k inter-cell factors. Nearby taps
//! contribute through short products, which is what keeps early-layer
//! gradients alive in deep chains; a tap k cells away contributes
//! through k factors and decays like a plain feed-forward chain of the
//! same depth.
//!
//! The closed-form evaluation here is an independent second route to
//! the same derivative as the tape-based [`Graph::backward`]; the two
//! are compared in tests to within 1e-9.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Activation, Graph, NodeId};
use crate::tensor::Tensor;

/// One position in the chain: a scalar hidden unit and its output tap.
#[derive(Debug, Clone)]
pub struct ChainCell {
    /// Weight from the previous hidden activation (the chain input for
    /// the first cell).
    pub w_hidden: f64,
    pub b_hidden: f64,
    /// Weight on the teacher-forced previous target value; unused in the
    /// first cell.
    pub w_feed: f64,
    /// Output tap weight and bias (linear output).
    pub w_out: f64,
    pub b_out: f64,
}

/// Scalar interleaved chain: input, cells, per-cell activation, and the
/// targets that serve both as loss references and teacher-forced feeds.
#[derive(Debug, Clone)]
pub struct InterleavedChain {
    pub input: f64,
    pub cells: Vec<ChainCell>,
    pub activation: Activation,
    pub targets: Vec<f64>,
}

/// Forward-pass intermediates.
#[derive(Debug, Clone)]
pub struct ChainForward {
    pub pre_activations: Vec<f64>,
    pub activations: Vec<f64>,
    pub outputs: Vec<f64>,
    /// Mean squared error over the output taps.
    pub loss: f64,
}

/// Per-cell gradients of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainGrads {
    pub w_hidden: Vec<f64>,
    pub w_out: Vec<f64>,
}

impl InterleavedChain {
    pub fn new(
        input: f64,
        cells: Vec<ChainCell>,
        activation: Activation,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Argument("chain needs at least one cell".into()));
        }
        if targets.len() != cells.len() {
            return Err(Error::Argument(format!(
                "chain has {} cells but {} targets",
                cells.len(),
                targets.len()
            )));
        }
        Ok(InterleavedChain {
            input,
            cells,
            activation,
            targets,
        })
    }

    /// Random chain of the given depth, reproducible from the seed.
    pub fn random(depth: usize, activation: Activation, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = (0..depth)
            .map(|_| ChainCell {
                w_hidden: rng.random_range(-1.5..1.5),
                b_hidden: rng.random_range(-0.5..0.5),
                w_feed: rng.random_range(-1.0..1.0),
                w_out: rng.random_range(-1.5..1.5),
                b_out: rng.random_range(-0.5..0.5),
            })
            .collect();
        let targets = (0..depth).map(|_| rng.random_range(-1.0..1.0)).collect();
        InterleavedChain::new(rng.random_range(-1.0..1.0), cells, activation, targets)
    }

    pub fn depth(&self) -> usize {
        self.cells.len()
    }

    pub fn forward(&self) -> ChainForward {
        let n = self.depth();
        let mut pre = Vec::with_capacity(n);
        let mut act = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        let mut a_prev = self.input;
        for (i, cell) in self.cells.iter().enumerate() {
            let feed = if i > 0 { cell.w_feed * self.targets[i - 1] } else { 0.0 };
            let z = cell.w_hidden * a_prev + feed + cell.b_hidden;
            let a = self.activation.apply(z);
            pre.push(z);
            act.push(a);
            out.push(cell.w_out * a + cell.b_out);
            a_prev = a;
        }
        let loss = out
            .iter()
            .zip(&self.targets)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>()
            / n as f64;
        ChainForward {
            pre_activations: pre,
            activations: act,
            outputs: out,
            loss,
        }
    }

    /// Closed-form gradients: for hidden weight l, a sum over taps k >= 0
    /// of (loss derivative at tap l+k) x (tap weight) x (product of the k
    /// inter-cell factors between l and l+k) x (local derivative of the
    /// activation with respect to its weight). For the last cell the sum
    /// degenerates to the single k = 0 term.
    pub fn analytic_grads(&self) -> ChainGrads {
        let fwd = self.forward();
        let n = self.depth();
        let dloss_dout: Vec<f64> = fwd
            .outputs
            .iter()
            .zip(&self.targets)
            .map(|(o, t)| 2.0 * (o - t) / n as f64)
            .collect();

        let mut w_hidden = vec![0.0; n];
        let mut w_out = vec![0.0; n];
        for l in 0..n {
            let a_in = if l == 0 { self.input } else { fwd.activations[l - 1] };
            let local = self.activation.derivative(fwd.pre_activations[l]) * a_in;
            let mut sum = 0.0;
            let mut factor_product = 1.0;
            for k in 0..(n - l) {
                sum += dloss_dout[l + k] * self.cells[l + k].w_out * factor_product;
                if l + k + 1 < n {
                    // Inter-cell factor: activation derivative of the next
                    // hidden unit times its chain weight.
                    factor_product *= self.activation.derivative(fwd.pre_activations[l + k + 1])
                        * self.cells[l + k + 1].w_hidden;
                }
            }
            w_hidden[l] = sum * local;
            w_out[l] = dloss_dout[l] * fwd.activations[l];
        }
        ChainGrads { w_hidden, w_out }
    }

    /// Gradient of the first cell's hidden weight under the degenerate
    /// configuration where only the final tap carries loss: the single
    /// surviving term is a pure product of per-cell factors, the shape a
    /// plain (non-interleaved) feed-forward chain would produce.
    pub fn pure_product_first_grad(&self) -> f64 {
        let fwd = self.forward();
        let n = self.depth();
        let mut g = 2.0 * (fwd.outputs[n - 1] - self.targets[n - 1]) / n as f64;
        g *= self.cells[n - 1].w_out;
        for j in (1..n).rev() {
            g *= self.activation.derivative(fwd.pre_activations[j]) * self.cells[j].w_hidden;
        }
        g * self.activation.derivative(fwd.pre_activations[0]) * self.input
    }

    /// Builds the same chain on a computation record and returns the
    /// tape-derived gradients: the independent route used to validate
    /// [`InterleavedChain::analytic_grads`].
    pub fn tape_grads(&self) -> Result<ChainGrads> {
        let n = self.depth();
        let mut g = Graph::new();
        let mut w_hidden_nodes = Vec::with_capacity(n);
        let mut w_out_nodes = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        let mut a_prev: Option<NodeId> = None;
        let input = g.input(Tensor::from_vec(vec![self.input]));
        for (i, cell) in self.cells.iter().enumerate() {
            // Hidden unit as a 1x2 affine over [previous activation, feed].
            let (src, feed_v) = match a_prev {
                None => (input, 0.0),
                Some(a) => (a, self.targets[i - 1]),
            };
            let feed = g.input(Tensor::from_vec(vec![feed_v]));
            let joint = g.concat(&[src, feed])?;
            let w = g.input(Tensor::new(&[1, 2], vec![cell.w_hidden, cell.w_feed])?);
            let b = g.input(Tensor::from_vec(vec![cell.b_hidden]));
            let z = g.affine(w, joint, b)?;
            let a = g.activation(self.activation, z);
            w_hidden_nodes.push(w);

            let wo = g.input(Tensor::new(&[1, 1], vec![cell.w_out])?);
            let bo = g.input(Tensor::from_vec(vec![cell.b_out]));
            let out = g.affine(wo, a, bo)?;
            w_out_nodes.push(wo);
            outputs.push(out);
            a_prev = Some(a);
        }
        let stacked = g.concat(&outputs)?;
        let loss = g.mse(stacked, Tensor::from_vec(self.targets.clone()))?;
        let grads = g.backward(loss)?;
        Ok(ChainGrads {
            // Entry 0 of the 1x2 weight is the chain weight.
            w_hidden: w_hidden_nodes.iter().map(|&w| grads.node(w).data()[0]).collect(),
            w_out: w_out_nodes.iter().map(|&w| grads.node(w).data()[0]).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::finite_diff_grad;

    #[test]
    fn empty_chain_rejected() {
        assert!(matches!(
            InterleavedChain::new(0.0, vec![], Activation::Sigmoid, vec![]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn last_cell_reduces_to_single_term() {
        // For the final cell only the k = 0 tap exists: the gradient is
        // dL/dout * w_out * act'(z) * a_in exactly.
        let chain = InterleavedChain::random(5, Activation::Sigmoid, 3).unwrap();
        let fwd = chain.forward();
        let grads = chain.analytic_grads();
        let n = chain.depth();
        let dl = 2.0 * (fwd.outputs[n - 1] - chain.targets[n - 1]) / n as f64;
        let expect = dl
            * chain.cells[n - 1].w_out
            * Activation::Sigmoid.derivative(fwd.pre_activations[n - 1])
            * fwd.activations[n - 2];
        assert!((grads.w_hidden[n - 1] - expect).abs() < 1e-15);
    }

    #[test]
    fn depth6_analytic_equals_tape() {
        let chain = InterleavedChain::random(6, Activation::Sigmoid, 7).unwrap();
        let analytic = chain.analytic_grads();
        let tape = chain.tape_grads().unwrap();
        for (a, b) in analytic.w_hidden.iter().zip(&tape.w_hidden) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} vs {}", a, b);
        }
        for (a, b) in analytic.w_out.iter().zip(&tape.w_out) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let chain = InterleavedChain::random(5, Activation::Sigmoid, 11).unwrap();
        let analytic = chain.analytic_grads();
        let theta: Vec<f64> = chain.cells.iter().map(|c| c.w_hidden).collect();
        let fd = finite_diff_grad(
            |t| {
                let mut c = chain.clone();
                for (cell, w) in c.cells.iter_mut().zip(t) {
                    cell.w_hidden = *w;
                }
                c.forward().loss
            },
            &theta,
            1e-6,
        );
        for (a, b) in analytic.w_hidden.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn zeroed_intermediate_taps_recover_pure_product() {
        let mut chain = InterleavedChain::random(7, Activation::Sigmoid, 13).unwrap();
        let n = chain.depth();
        for cell in chain.cells.iter_mut().take(n - 1) {
            cell.w_out = 0.0;
        }
        let analytic = chain.analytic_grads();
        let product = chain.pure_product_first_grad();
        assert!(
            (analytic.w_hidden[0] - product).abs() <= 1e-15 * product.abs().max(1e-300),
            "sum form {} vs product form {}",
            analytic.w_hidden[0],
            product
        );
    }

    #[test]
    fn deep_chain_first_cell_gradient_dominated_by_near_tap() {
        // In a deep sigmoid chain the k = 0 term should dominate the first
        // cell's gradient: distant taps decay through long factor products.
        let chain = InterleavedChain::random(30, Activation::Sigmoid, 17).unwrap();
        let fwd = chain.forward();
        let grads = chain.analytic_grads();
        let local = Activation::Sigmoid.derivative(fwd.pre_activations[0]) * chain.input;
        let k0 = 2.0 * (fwd.outputs[0] - chain.targets[0]) / chain.depth() as f64
            * chain.cells[0].w_out
            * local;
        let tail = grads.w_hidden[0] - k0;
        assert!(
            tail.abs() < k0.abs(),
            "near-tap term {} should dominate tail {}",
            k0,
            tail
        );
    }
}
