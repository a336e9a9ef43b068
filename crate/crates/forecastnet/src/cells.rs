//! Hidden-cell building blocks and output heads.
//!
//! Two cell families are provided: a densely connected cell (a stack of
//! affine + activation layers) and a convolutional cell (two conv /
//! average-pool stages followed by a dense layer). Output heads are
//! either a Gaussian mixture-density head emitting (mu, sigma) or a
//! plain linear head emitting one scalar.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Activation, Graph, NodeId, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// normal(0, sqrt(2 / fan_in)); pairs with ReLU.
    He,
    /// normal(0, sqrt(2 / (fan_in + fan_out))); pairs with sigmoid.
    XavierNormal,
}

/// Draws a weight tensor for the given shape.
///
/// Matrix shapes are [out, in]; convolution kernels are
/// [c_out, c_in, k] with fan_in = c_in * k and fan_out = c_out * k.
/// Biases are not drawn here; they start at zero.
pub fn init_params(shape: &[usize], scheme: InitScheme, rng: &mut impl Rng) -> Result<Tensor> {
    let (fan_in, fan_out) = match shape {
        [m, n] => (*n, *m),
        [c_out, c_in, k] => (c_in * k, c_out * k),
        _ => {
            return Err(Error::Argument(format!(
                "init_params expects a 2-D or 3-D shape, got {:?}",
                shape
            )))
        }
    };
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Argument(format!(
            "init_params requires nonzero fans, shape {:?}",
            shape
        )));
    }
    let std = match scheme {
        InitScheme::He => (2.0 / fan_in as f64).sqrt(),
        InitScheme::XavierNormal => (2.0 / (fan_in + fan_out) as f64).sqrt(),
    };
    let normal = Normal::new(0.0, std).expect("std is positive and finite");
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    Tensor::new(shape, data)
}

/// One affine layer with an optional activation.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub in_width: usize,
    pub out_width: usize,
    pub activation: Option<Activation>,
}

impl DenseLayer {
    pub fn build(
        in_width: usize,
        out_width: usize,
        activation: Option<Activation>,
        scheme: InitScheme,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = store.alloc(init_params(&[out_width, in_width], scheme, rng)?);
        let b = store.alloc(Tensor::zeros(&[out_width]));
        Ok(DenseLayer {
            w,
            b,
            in_width,
            out_width,
            activation,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, input: NodeId) -> Result<NodeId> {
        let w = g.param(store.get(self.w));
        let b = g.param(store.get(self.b));
        let z = g.affine(w, input, b)?;
        Ok(match self.activation {
            Some(kind) => g.activation(kind, z),
            None => z,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }
}

/// Densely connected hidden cell: a stack of affine + activation layers.
#[derive(Debug, Clone)]
pub struct DenseCell {
    pub layers: Vec<DenseLayer>,
}

impl DenseCell {
    /// `widths` are the hidden layer widths in order; each layer uses the
    /// same activation.
    pub fn build(
        in_width: usize,
        widths: &[usize],
        activation: Activation,
        scheme: InitScheme,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::Argument("dense cell needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = in_width;
        for &w in widths {
            layers.push(DenseLayer::build(prev, w, Some(activation), scheme, store, rng)?);
            prev = w;
        }
        Ok(DenseCell { layers })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, input: NodeId) -> Result<NodeId> {
        let mut a = input;
        for layer in &self.layers {
            a = layer.forward(g, store, a)?;
        }
        Ok(a)
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].in_width
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().expect("non-empty").out_width
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| l.param_ids()).collect()
    }

    pub fn first_weight(&self) -> ParamId {
        self.layers[0].w
    }

    pub fn last_weight(&self) -> ParamId {
        self.layers.last().expect("non-empty").w
    }
}

/// One convolution stage: filters plus bias.
#[derive(Debug, Clone)]
pub struct ConvStage {
    pub kernels: ParamId,
    pub bias: ParamId,
}

/// Convolutional hidden cell: conv -> activation -> pool, twice, then a
/// dense layer. The 1-D cell input is treated as a single channel.
#[derive(Debug, Clone)]
pub struct ConvCell {
    pub stage1: ConvStage,
    pub stage2: ConvStage,
    pub dense: DenseLayer,
    pub in_len: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub pool_stride: usize,
    pub activation: Activation,
}

impl ConvCell {
    /// Sequence length after both conv/pool stages.
    pub fn flattened_len(
        in_len: usize,
        kernel: usize,
        pool: usize,
        pool_stride: usize,
    ) -> Option<usize> {
        let mut len = in_len;
        for _ in 0..2 {
            len = len.checked_sub(kernel - 1)?; // conv: len - k + 1
            if len < pool {
                return None;
            }
            len = (len - pool) / pool_stride + 1;
        }
        Some(len)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn build(
        in_len: usize,
        filters: usize,
        kernel: usize,
        pool: usize,
        pool_stride: usize,
        dense_width: usize,
        activation: Activation,
        scheme: InitScheme,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let final_len = Self::flattened_len(in_len, kernel, pool, pool_stride).ok_or_else(|| {
            Error::Dimension(format!(
                "conv cell input length {} too short for kernel {} and pool {}",
                in_len, kernel, pool
            ))
        })?;
        let stage1 = ConvStage {
            kernels: store.alloc(init_params(&[filters, 1, kernel], scheme, rng)?),
            bias: store.alloc(Tensor::zeros(&[filters])),
        };
        let stage2 = ConvStage {
            kernels: store.alloc(init_params(&[filters, filters, kernel], scheme, rng)?),
            bias: store.alloc(Tensor::zeros(&[filters])),
        };
        let dense = DenseLayer::build(
            filters * final_len,
            dense_width,
            Some(activation),
            scheme,
            store,
            rng,
        )?;
        Ok(ConvCell {
            stage1,
            stage2,
            dense,
            in_len,
            filters,
            kernel,
            pool,
            pool_stride,
            activation,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, input: NodeId) -> Result<NodeId> {
        let in_len = g.value(input).len();
        if in_len != self.in_len {
            return Err(Error::Dimension(format!(
                "conv cell expects input length {}, got {}",
                self.in_len, in_len
            )));
        }
        let mut a = g.reshape(input, &[1, in_len])?;
        for stage in [&self.stage1, &self.stage2] {
            let k = g.param(store.get(stage.kernels));
            let b = g.param(store.get(stage.bias));
            let c = g.conv1d_valid(a, k, b)?;
            let act = g.activation(self.activation, c);
            a = g.avg_pool1d(act, self.pool, self.pool_stride)?;
        }
        let flat = g.flatten(a);
        self.dense.forward(g, store, flat)
    }

    pub fn out_width(&self) -> usize {
        self.dense.out_width
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![
            self.stage1.kernels,
            self.stage1.bias,
            self.stage2.kernels,
            self.stage2.bias,
        ];
        ids.extend(self.dense.param_ids());
        ids
    }

    pub fn first_weight(&self) -> ParamId {
        self.stage1.kernels
    }

    pub fn last_weight(&self) -> ParamId {
        self.dense.w
    }
}

/// Gaussian mixture-density head: two affine maps from the cell output
/// to a scalar mean and a softplus-constrained standard deviation.
#[derive(Debug, Clone)]
pub struct MixtureHead {
    pub w_mu: ParamId,
    pub b_mu: ParamId,
    pub w_sigma: ParamId,
    pub b_sigma: ParamId,
    pub in_width: usize,
}

impl MixtureHead {
    pub fn build(
        in_width: usize,
        scheme: InitScheme,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(MixtureHead {
            w_mu: store.alloc(init_params(&[1, in_width], scheme, rng)?),
            b_mu: store.alloc(Tensor::zeros(&[1])),
            w_sigma: store.alloc(init_params(&[1, in_width], scheme, rng)?),
            b_sigma: store.alloc(Tensor::zeros(&[1])),
            in_width,
        })
    }

    /// Returns scalar (mu, sigma) nodes; sigma > 0 by construction.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        cell_out: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let w_mu = g.param(store.get(self.w_mu));
        let b_mu = g.param(store.get(self.b_mu));
        let mu = g.affine(w_mu, cell_out, b_mu)?;
        let w_sigma = g.param(store.get(self.w_sigma));
        let b_sigma = g.param(store.get(self.b_sigma));
        let pre = g.affine(w_sigma, cell_out, b_sigma)?;
        let sigma = g.activation(Activation::Softplus, pre);
        Ok((mu, sigma))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w_mu, self.b_mu, self.w_sigma, self.b_sigma]
    }
}

/// Linear output head: one affine map to a scalar, no activation.
#[derive(Debug, Clone)]
pub struct LinearHead {
    pub w: ParamId,
    pub b: ParamId,
    pub in_width: usize,
}

impl LinearHead {
    pub fn build(
        in_width: usize,
        scheme: InitScheme,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(LinearHead {
            w: store.alloc(init_params(&[1, in_width], scheme, rng)?),
            b: store.alloc(Tensor::zeros(&[1])),
            in_width,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, cell_out: NodeId) -> Result<NodeId> {
        let w = g.param(store.get(self.w));
        let b = g.param(store.get(self.b));
        g.affine(w, cell_out, b)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{finite_diff_grad, rel_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn he_init_sample_std() {
        // fan_in = 8 -> std sqrt(2/8) = 0.5; estimate over 1e5 draws.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = init_params(&[12_500, 8], InitScheme::He, &mut rng).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!(
            (std - 0.5).abs() < 0.01,
            "he init std over 1e5 draws: {} (want 0.5 +- 0.01)",
            std
        );
    }

    #[test]
    fn xavier_init_sample_std() {
        // fan_in = 6, fan_out = 4 -> std sqrt(2/10).
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let want = (2.0_f64 / 10.0).sqrt();
        let mut values = Vec::new();
        for _ in 0..200 {
            let t = init_params(&[4, 6], InitScheme::XavierNormal, &mut rng).unwrap();
            values.extend_from_slice(t.data());
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!((std - want).abs() < 0.02, "xavier std {} vs {}", std, want);
    }

    #[test]
    fn init_same_seed_identical() {
        let a = init_params(&[3, 5], InitScheme::He, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = init_params(&[3, 5], InitScheme::He, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn init_rejects_zero_fan() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(init_params(&[0, 4], InitScheme::He, &mut rng).is_err());
        assert!(init_params(&[4, 0], InitScheme::He, &mut rng).is_err());
        assert!(init_params(&[4], InitScheme::He, &mut rng).is_err());
    }

    #[test]
    fn biases_start_at_zero() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = DenseLayer::build(4, 3, Some(Activation::Relu), InitScheme::He, &mut store, &mut rng)
            .unwrap();
        assert!(store.get(layer.b).value.data().iter().all(|&v| v == 0.0));
    }

    fn forward_dense(cell: &DenseCell, store: &ParamStore, input: Vec<f64>) -> Vec<f64> {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(input));
        let out = cell.forward(&mut g, store, x).unwrap();
        g.value(out).data().to_vec()
    }

    #[test]
    fn dense_cell_zero_params_zero_output() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell =
            DenseCell::build(3, &[4, 4], Activation::Relu, InitScheme::He, &mut store, &mut rng)
                .unwrap();
        for p in store.iter_mut() {
            p.value.fill_zero();
        }
        let out = forward_dense(&cell, &store, vec![1.0, -2.0, 3.0]);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_cell_identity_like_single_unit() {
        // 1-unit, 1-layer ReLU cell with unit weight passes positives through.
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cell =
            DenseCell::build(1, &[1], Activation::Relu, InitScheme::He, &mut store, &mut rng)
                .unwrap();
        store.get_mut(cell.layers[0].w).value.data_mut()[0] = 1.0;
        let out = forward_dense(&cell, &store, vec![2.0]);
        assert_eq!(out, vec![2.0]);
    }

    #[test]
    fn dense_cell_width_mismatch() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cell =
            DenseCell::build(3, &[4], Activation::Relu, InitScheme::He, &mut store, &mut rng)
                .unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(cell.forward(&mut g, &store, x).is_err());
    }

    #[test]
    fn dense_cell_gradient_matches_finite_differences() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cell = DenseCell::build(
            3,
            &[4, 4],
            Activation::Sigmoid,
            InitScheme::He,
            &mut store,
            &mut rng,
        )
        .unwrap();
        let input = vec![0.3, -0.8, 1.2];
        let w1 = cell.layers[0].w;

        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(input.clone()));
        let out = cell.forward(&mut g, &store, x).unwrap();
        let loss = g.dot(out, Tensor::from_vec(vec![1.0; 4])).unwrap();
        let grads = g.backward(loss).unwrap();
        let w1_node = g
            .param_nodes()
            .find(|(_, pid)| *pid == w1)
            .map(|(n, _)| n)
            .unwrap();
        let analytic = grads.node(w1_node).data().to_vec();

        let theta0 = store.get(w1).value.data().to_vec();
        let mut store_fd = store.clone();
        let fd = finite_diff_grad(
            |t| {
                store_fd.get_mut(w1).value.data_mut().copy_from_slice(t);
                let mut g = Graph::new();
                let x = g.input(Tensor::from_vec(input.clone()));
                let out = cell.forward(&mut g, &store_fd, x).unwrap();
                let loss = g.dot(out, Tensor::from_vec(vec![1.0; 4])).unwrap();
                g.value(loss).item()
            },
            &theta0,
            1e-6,
        );
        for (a, b) in analytic.iter().zip(&fd) {
            assert!(rel_error(*a, *b) < 1e-5, "dense cell w1 grad {} vs fd {}", a, b);
        }
    }

    #[test]
    fn conv_cell_zero_input_zero_output() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cell = ConvCell::build(
            10,
            4,
            2,
            2,
            1,
            4,
            Activation::Relu,
            InitScheme::He,
            &mut store,
            &mut rng,
        )
        .unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![0.0; 10]));
        let out = cell.forward(&mut g, &store, x).unwrap();
        // Zero input, zero biases: every pre-activation is 0, ReLU keeps 0.
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_cell_stage_length_arithmetic() {
        // Input 50: conv -> 49, pool -> 48, conv -> 47, pool -> 46.
        assert_eq!(ConvCell::flattened_len(50, 2, 2, 1), Some(46));
        assert_eq!(ConvCell::flattened_len(5, 2, 2, 1), Some(1));
        assert_eq!(ConvCell::flattened_len(4, 2, 2, 1), None);
    }

    #[test]
    fn conv_cell_too_short_input_rejected() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let res = ConvCell::build(
            4,
            4,
            2,
            2,
            1,
            4,
            Activation::Relu,
            InitScheme::He,
            &mut store,
            &mut rng,
        );
        assert!(matches!(res, Err(Error::Dimension(_))));
    }

    #[test]
    fn conv_cell_gradient_matches_finite_differences() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cell = ConvCell::build(
            8,
            3,
            2,
            2,
            1,
            3,
            Activation::Sigmoid,
            InitScheme::He,
            &mut store,
            &mut rng,
        )
        .unwrap();
        let input: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();

        // Flatten all params, check the full-cell gradient.
        let ids = cell.param_ids();
        let mut theta = Vec::new();
        for &id in &ids {
            theta.extend_from_slice(store.get(id).value.data());
        }
        let assign = |store: &mut ParamStore, t: &[f64]| {
            let mut off = 0;
            for &id in &ids {
                let p = store.get_mut(id);
                let n = p.value.len();
                p.value.data_mut().copy_from_slice(&t[off..off + n]);
                off += n;
            }
        };

        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(input.clone()));
        let out = cell.forward(&mut g, &store, x).unwrap();
        let loss = g.dot(out, Tensor::from_vec(vec![1.0; 3])).unwrap();
        let grads = g.backward(loss).unwrap();
        let mut analytic = Vec::new();
        for &id in &ids {
            let node = g.param_nodes().find(|(_, pid)| *pid == id).map(|(n, _)| n).unwrap();
            analytic.extend_from_slice(grads.node(node).data());
        }

        let mut store_fd = store.clone();
        let fd = finite_diff_grad(
            |t| {
                assign(&mut store_fd, t);
                let mut g = Graph::new();
                let x = g.input(Tensor::from_vec(input.clone()));
                let out = cell.forward(&mut g, &store_fd, x).unwrap();
                let loss = g.dot(out, Tensor::from_vec(vec![1.0; 3])).unwrap();
                g.value(loss).item()
            },
            &theta,
            1e-6,
        );
        for (a, b) in analytic.iter().zip(&fd) {
            assert!(rel_error(*a, *b) < 1e-5, "conv cell grad {} vs fd {}", a, b);
        }
    }

    #[test]
    fn mixture_head_zero_params() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let head = MixtureHead::build(4, InitScheme::He, &mut store, &mut rng).unwrap();
        for p in store.iter_mut() {
            p.value.fill_zero();
        }
        let mut g = Graph::new();
        let a = g.input(Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let (mu, sigma) = head.forward(&mut g, &store, a).unwrap();
        assert_eq!(g.value(mu).item(), 0.0);
        assert!((g.value(sigma).item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mixture_head_bias_only_mean() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let head = MixtureHead::build(4, InitScheme::He, &mut store, &mut rng).unwrap();
        for p in store.iter_mut() {
            p.value.fill_zero();
        }
        store.get_mut(head.b_mu).value.data_mut()[0] = 1.5;
        let mut g = Graph::new();
        let a = g.input(Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let (mu, _) = head.forward(&mut g, &store, a).unwrap();
        assert_eq!(g.value(mu).item(), 1.5);
    }

    #[test]
    fn mixture_head_sigma_always_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let mut store = ParamStore::new();
            let head = MixtureHead::build(3, InitScheme::He, &mut store, &mut rng).unwrap();
            for p in store.iter_mut() {
                for v in p.value.data_mut() {
                    *v = rng.random_range(-50.0..50.0);
                }
            }
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
            let mut g = Graph::new();
            let an = g.input(Tensor::from_vec(a));
            let (_, sigma) = head.forward(&mut g, &store, an).unwrap();
            assert!(g.value(sigma).item() > 0.0);
        }
    }

    #[test]
    fn gaussian_nll_minimized_at_target() {
        // Gradient sign flips around mu = y for fixed sigma.
        let y = 0.7;
        let below = finite_diff_grad(
            |t| crate::graph::gaussian_nll(t[0], 0.9, y).unwrap(),
            &[y - 0.1],
            1e-6,
        )[0];
        let above = finite_diff_grad(
            |t| crate::graph::gaussian_nll(t[0], 0.9, y).unwrap(),
            &[y + 0.1],
            1e-6,
        )[0];
        assert!(below < 0.0 && above > 0.0, "grad below {} above {}", below, above);
    }
}
