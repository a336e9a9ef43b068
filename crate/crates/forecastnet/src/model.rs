//! Model assembly: chained hidden cells with interleaved output heads.
//!
//! In the interleaved topology there is one hidden cell and one output
//! head per forecast step. Cell 1 reads the input window only; every
//! later cell reads the concatenation of the input window, the previous
//! cell's activation, and the previous forecast value. During training
//! the previous forecast is replaced by the ground-truth target
//! (teacher forcing), so output heads never feed gradient back into the
//! chain. No parameter is shared between positions: the network is
//! sequential but not recurrent, which is what makes it time-variant.
//!
//! A terminal topology is also provided for the MLP-style baselines:
//! one trunk cell whose final activation feeds every output head.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cells::{ConvCell, DenseCell, InitScheme, LinearHead, MixtureHead};
use crate::error::{Error, Result};
use crate::graph::{Activation, Graph, NodeId, ParamId, ParamStore};
use crate::tensor::Tensor;

/// The four published architecture variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Dense cells, Gaussian mixture-density output.
    Fn,
    /// Convolutional cells, Gaussian mixture-density output.
    Cfn,
    /// Dense cells, linear output.
    Fn2,
    /// Convolutional cells, linear output.
    Cfn2,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fn" => Ok(Variant::Fn),
            "cfn" => Ok(Variant::Cfn),
            "fn2" => Ok(Variant::Fn2),
            "cfn2" => Ok(Variant::Cfn2),
            other => Err(Error::Argument(format!(
                "unknown variant '{}', expected fn|cfn|fn2|cfn2",
                other
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fn => "fn",
            Variant::Cfn => "cfn",
            Variant::Fn2 => "fn2",
            Variant::Cfn2 => "cfn2",
        }
    }

    pub fn is_conv(self) -> bool {
        matches!(self, Variant::Cfn | Variant::Cfn2)
    }

    pub fn is_mixture(self) -> bool {
        matches!(self, Variant::Fn | Variant::Cfn)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// High-level architecture description: variant, seasonal period,
/// hidden width, and the seed that fixes the initial parameters.
///
/// The input width is always twice the seasonal period and the number
/// of forecast steps equals the period: the model reads two seasonal
/// cycles and forecasts one cycle ahead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub tau: usize,
    pub hidden: usize,
    pub seed: u64,
}

pub const DEFAULT_HIDDEN: usize = 24;

impl ModelSpec {
    pub fn new(variant: Variant, tau: usize) -> Self {
        ModelSpec {
            variant,
            tau,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn n_inputs(&self) -> usize {
        2 * self.tau
    }

    pub fn n_outputs(&self) -> usize {
        self.tau
    }

    /// Full structural plan for this spec.
    pub fn plan(&self) -> Result<NetPlan> {
        if self.tau < 1 {
            return Err(Error::Spec("tau must be >= 1".into()));
        }
        if self.hidden < 1 {
            return Err(Error::Spec("hidden width must be >= 1".into()));
        }
        let cell = if self.variant.is_conv() {
            CellPlan::Conv {
                filters: self.hidden,
                kernel: 2,
                pool: 2,
                pool_stride: 1,
                dense_width: self.hidden,
                activation: Activation::Relu,
                init: InitScheme::He,
            }
        } else {
            CellPlan::Dense {
                widths: vec![self.hidden, self.hidden],
                activation: Activation::Relu,
                init: InitScheme::He,
            }
        };
        let head = if self.variant.is_mixture() {
            HeadPlan::Mixture
        } else {
            HeadPlan::Linear
        };
        Ok(NetPlan {
            name: self.variant.name().to_string(),
            topology: Topology::Interleaved,
            cell,
            head,
            n_inputs: self.n_inputs(),
            n_outputs: self.n_outputs(),
            seed: self.seed,
        })
    }
}

/// How cells and heads are wired together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// One cell per forecast step, heads interleaved between cells.
    Interleaved,
    /// One trunk cell; all heads read its final activation.
    Terminal,
}

/// Hidden-cell family and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellPlan {
    Dense {
        widths: Vec<usize>,
        activation: Activation,
        init: InitScheme,
    },
    Conv {
        filters: usize,
        kernel: usize,
        pool: usize,
        pool_stride: usize,
        dense_width: usize,
        activation: Activation,
        init: InitScheme,
    },
}

impl CellPlan {
    pub fn out_width(&self) -> usize {
        match self {
            CellPlan::Dense { widths, .. } => *widths.last().expect("non-empty widths"),
            CellPlan::Conv { dense_width, .. } => *dense_width,
        }
    }

    pub fn init(&self) -> InitScheme {
        match self {
            CellPlan::Dense { init, .. } => *init,
            CellPlan::Conv { init, .. } => *init,
        }
    }
}

/// Output-head family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadPlan {
    Mixture,
    Linear,
}

/// Complete serializable description of a network: enough to rebuild
/// the exact parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetPlan {
    pub name: String,
    pub topology: Topology,
    pub cell: CellPlan,
    pub head: HeadPlan,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum Cell {
    Dense(DenseCell),
    Conv(ConvCell),
}

impl Cell {
    fn forward(&self, g: &mut Graph, store: &ParamStore, input: NodeId) -> Result<NodeId> {
        match self {
            Cell::Dense(c) => c.forward(g, store, input),
            Cell::Conv(c) => c.forward(g, store, input),
        }
    }

    fn param_ids(&self) -> Vec<ParamId> {
        match self {
            Cell::Dense(c) => c.param_ids(),
            Cell::Conv(c) => c.param_ids(),
        }
    }

    fn first_weight(&self) -> ParamId {
        match self {
            Cell::Dense(c) => c.first_weight(),
            Cell::Conv(c) => c.first_weight(),
        }
    }

    fn last_weight(&self) -> ParamId {
        match self {
            Cell::Dense(c) => c.last_weight(),
            Cell::Conv(c) => c.last_weight(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Head {
    Mixture(MixtureHead),
    Linear(LinearHead),
}

impl Head {
    fn param_ids(&self) -> Vec<ParamId> {
        match self {
            Head::Mixture(h) => h.param_ids(),
            Head::Linear(h) => h.param_ids(),
        }
    }
}

/// An instantiated network: plan, cells, heads, and the parameter store.
#[derive(Debug, Clone)]
pub struct Model {
    plan: NetPlan,
    pub(crate) cells: Vec<Cell>,
    pub(crate) heads: Vec<Head>,
    pub(crate) params: ParamStore,
}

/// How forecasts are propagated through the chain at inference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    /// Feed the predictive mean forward; deterministic.
    Mean,
    /// Draw from the predictive distribution and feed the draw forward.
    Sample,
}

impl PredictMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(PredictMode::Mean),
            "sample" => Ok(PredictMode::Sample),
            other => Err(Error::Argument(format!(
                "unknown mode '{}', expected mean|sample",
                other
            ))),
        }
    }
}

/// One multi-step forecast. Values are in the model's input space; when
/// inputs were min-max scaled, callers invert the scaling afterwards.
#[derive(Debug, Clone)]
pub struct ForecastResult {
    pub point: Tensor,
    /// Per-step predictive standard deviation; absent for linear heads.
    pub sigma: Option<Tensor>,
    pub mode: PredictMode,
}

/// Forward pass in training configuration: the tape, the scalar loss
/// node, and the per-step head outputs (mean for mixture heads).
pub struct TrainPass {
    pub graph: Graph,
    pub loss: NodeId,
    pub step_outputs: Vec<NodeId>,
    pub loss_value: f64,
}

/// Parameter-count census; `shared` must be zero for a well-formed model.
#[derive(Debug, Clone, PartialEq)]
pub struct Census {
    pub total: usize,
    pub per_cell: Vec<usize>,
    pub shared: usize,
}

impl Model {
    /// Builds a model for one of the published variants.
    pub fn build(spec: &ModelSpec) -> Result<Model> {
        Model::from_plan(spec.plan()?)
    }

    /// Builds a model from an explicit plan. Initialization is fully
    /// determined by `plan.seed`.
    pub fn from_plan(plan: NetPlan) -> Result<Model> {
        if plan.n_outputs < 1 || plan.n_inputs < 1 {
            return Err(Error::Spec("plan needs at least one input and output".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        let mut store = ParamStore::new();
        let cell_out = plan.cell.out_width();

        let n_cells = match plan.topology {
            Topology::Interleaved => plan.n_outputs,
            Topology::Terminal => 1,
        };
        let mut cells = Vec::with_capacity(n_cells);
        let mut heads = Vec::with_capacity(plan.n_outputs);
        for i in 0..n_cells {
            // Later cells also see the previous activation and forecast.
            let in_width = if matches!(plan.topology, Topology::Interleaved) && i > 0 {
                plan.n_inputs + cell_out + 1
            } else {
                plan.n_inputs
            };
            let cell = match &plan.cell {
                CellPlan::Dense {
                    widths,
                    activation,
                    init,
                } => Cell::Dense(DenseCell::build(
                    in_width, widths, *activation, *init, &mut store, &mut rng,
                )?),
                CellPlan::Conv {
                    filters,
                    kernel,
                    pool,
                    pool_stride,
                    dense_width,
                    activation,
                    init,
                } => {
                    if ConvCell::flattened_len(in_width, *kernel, *pool, *pool_stride).is_none() {
                        return Err(Error::Spec(format!(
                            "input width {} too short for the convolutional cell \
                             (kernel {}, pool {}); increase tau",
                            in_width, kernel, pool
                        )));
                    }
                    Cell::Conv(ConvCell::build(
                        in_width,
                        *filters,
                        *kernel,
                        *pool,
                        *pool_stride,
                        *dense_width,
                        *activation,
                        *init,
                        &mut store,
                        &mut rng,
                    )?)
                }
            };
            cells.push(cell);
            if matches!(plan.topology, Topology::Interleaved) {
                heads.push(Model::build_head(&plan, cell_out, &mut store, &mut rng)?);
            }
        }
        if matches!(plan.topology, Topology::Terminal) {
            for _ in 0..plan.n_outputs {
                heads.push(Model::build_head(&plan, cell_out, &mut store, &mut rng)?);
            }
        }
        Ok(Model {
            plan,
            cells,
            heads,
            params: store,
        })
    }

    fn build_head(
        plan: &NetPlan,
        in_width: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Head> {
        Ok(match plan.head {
            HeadPlan::Mixture => {
                Head::Mixture(MixtureHead::build(in_width, plan.cell.init(), store, rng)?)
            }
            HeadPlan::Linear => {
                Head::Linear(LinearHead::build(in_width, plan.cell.init(), store, rng)?)
            }
        })
    }

    pub fn plan(&self) -> &NetPlan {
        &self.plan
    }

    pub fn n_inputs(&self) -> usize {
        self.plan.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.plan.n_outputs
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Weight tensor of the first hidden layer (gradient logging).
    pub fn first_hidden_weight(&self) -> ParamId {
        self.cells.first().expect("non-empty").first_weight()
    }

    /// Weight tensor of the last hidden layer (gradient logging).
    pub fn last_hidden_weight(&self) -> ParamId {
        self.cells.last().expect("non-empty").last_weight()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != [self.plan.n_inputs] {
            return Err(Error::Dimension(format!(
                "expected input shape [{}], got {:?}",
                self.plan.n_inputs,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Teacher-forced training pass: the forecast value fed to each later
    /// cell is the ground-truth target, not the model output. Loss is the
    /// mean Gaussian negative log likelihood over steps for mixture heads
    /// and the mean squared error for linear heads.
    pub fn forward_train(&self, x: &Tensor, y: &Tensor) -> Result<TrainPass> {
        self.check_input(x)?;
        if y.shape() != [self.plan.n_outputs] {
            return Err(Error::Dimension(format!(
                "expected target shape [{}], got {:?}",
                self.plan.n_outputs,
                y.shape()
            )));
        }
        let mut g = Graph::new();
        let x_node = g.input(x.clone());

        let mut step_outputs = Vec::with_capacity(self.plan.n_outputs);
        let mut nll_nodes = Vec::new();
        match self.plan.topology {
            Topology::Interleaved => {
                let mut prev_activation: Option<NodeId> = None;
                for (i, (cell, head)) in self.cells.iter().zip(&self.heads).enumerate() {
                    let cell_in = match prev_activation {
                        None => x_node,
                        Some(a_prev) => {
                            // Teacher forcing: feed the observed value.
                            let forced = g.input(Tensor::from_vec(vec![y.data()[i - 1]]));
                            g.concat(&[x_node, a_prev, forced])?
                        }
                    };
                    let a = cell.forward(&mut g, &self.params, cell_in)?;
                    match head {
                        Head::Mixture(h) => {
                            let (mu, sigma) = h.forward(&mut g, &self.params, a)?;
                            let nll = g.gaussian_nll(mu, sigma, y.data()[i])?;
                            nll_nodes.push(nll);
                            step_outputs.push(mu);
                        }
                        Head::Linear(h) => {
                            let yhat = h.forward(&mut g, &self.params, a)?;
                            step_outputs.push(yhat);
                        }
                    }
                    prev_activation = Some(a);
                }
            }
            Topology::Terminal => {
                let a = self.cells[0].forward(&mut g, &self.params, x_node)?;
                for (i, head) in self.heads.iter().enumerate() {
                    match head {
                        Head::Mixture(h) => {
                            let (mu, sigma) = h.forward(&mut g, &self.params, a)?;
                            let nll = g.gaussian_nll(mu, sigma, y.data()[i])?;
                            nll_nodes.push(nll);
                            step_outputs.push(mu);
                        }
                        Head::Linear(h) => {
                            let yhat = h.forward(&mut g, &self.params, a)?;
                            step_outputs.push(yhat);
                        }
                    }
                }
            }
        }

        let loss = match self.plan.head {
            HeadPlan::Mixture => {
                let stacked = g.concat(&nll_nodes)?;
                g.mean(stacked)
            }
            HeadPlan::Linear => {
                let stacked = g.concat(&step_outputs)?;
                g.mse(stacked, y.clone())?
            }
        };
        let loss_value = g.value(loss).item();
        Ok(TrainPass {
            graph: g,
            loss,
            step_outputs,
            loss_value,
        })
    }

    /// Inference pass. For mixture heads, `mode` selects whether the mean
    /// or a draw from N(mu, sigma^2) is fed to the next cell (and
    /// reported as the point path). Linear heads ignore the mode.
    pub fn forward_predict(
        &self,
        x: &Tensor,
        mode: PredictMode,
        rng: &mut impl Rng,
    ) -> Result<ForecastResult> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let x_node = g.input(x.clone());

        let mut point = Vec::with_capacity(self.plan.n_outputs);
        let mut sigmas = Vec::with_capacity(self.plan.n_outputs);
        match self.plan.topology {
            Topology::Interleaved => {
                let mut prev: Option<(NodeId, NodeId)> = None; // (activation, fed forecast)
                for (cell, head) in self.cells.iter().zip(&self.heads) {
                    let cell_in = match prev {
                        None => x_node,
                        Some((a_prev, fed)) => g.concat(&[x_node, a_prev, fed])?,
                    };
                    let a = cell.forward(&mut g, &self.params, cell_in)?;
                    let fed = match head {
                        Head::Mixture(h) => {
                            let (mu, sigma) = h.forward(&mut g, &self.params, a)?;
                            let mu_v = g.value(mu).item();
                            let sigma_v = g.value(sigma).item();
                            sigmas.push(sigma_v);
                            match mode {
                                PredictMode::Mean => {
                                    point.push(mu_v);
                                    mu
                                }
                                PredictMode::Sample => {
                                    let draw = Normal::new(mu_v, sigma_v)
                                        .map_err(|e| Error::Domain(e.to_string()))?
                                        .sample(rng);
                                    point.push(draw);
                                    g.input(Tensor::from_vec(vec![draw]))
                                }
                            }
                        }
                        Head::Linear(h) => {
                            let yhat = h.forward(&mut g, &self.params, a)?;
                            point.push(g.value(yhat).item());
                            yhat
                        }
                    };
                    prev = Some((a, fed));
                }
            }
            Topology::Terminal => {
                let a = self.cells[0].forward(&mut g, &self.params, x_node)?;
                for head in &self.heads {
                    match head {
                        Head::Mixture(h) => {
                            let (mu, sigma) = h.forward(&mut g, &self.params, a)?;
                            let mu_v = g.value(mu).item();
                            let sigma_v = g.value(sigma).item();
                            sigmas.push(sigma_v);
                            match mode {
                                PredictMode::Mean => point.push(mu_v),
                                PredictMode::Sample => {
                                    let draw = Normal::new(mu_v, sigma_v)
                                        .map_err(|e| Error::Domain(e.to_string()))?
                                        .sample(rng);
                                    point.push(draw);
                                }
                            }
                        }
                        Head::Linear(h) => {
                            let yhat = h.forward(&mut g, &self.params, a)?;
                            point.push(g.value(yhat).item());
                        }
                    }
                }
            }
        }
        Ok(ForecastResult {
            point: Tensor::from_vec(point),
            sigma: if matches!(self.plan.head, HeadPlan::Mixture) {
                Some(Tensor::from_vec(sigmas))
            } else {
                None
            },
            mode,
        })
    }

    /// Counts parameters per (cell, head) position and detects sharing.
    ///
    /// `shared` is the number of parameter references beyond the first,
    /// over all positions; it must be zero for a freshly built model.
    pub fn param_census(&self) -> Census {
        let mut groups: Vec<Vec<ParamId>> = Vec::new();
        match self.plan.topology {
            Topology::Interleaved => {
                for (cell, head) in self.cells.iter().zip(&self.heads) {
                    let mut ids = cell.param_ids();
                    ids.extend(head.param_ids());
                    groups.push(ids);
                }
            }
            Topology::Terminal => {
                let mut ids = self.cells[0].param_ids();
                for head in &self.heads {
                    ids.extend(head.param_ids());
                }
                groups.push(ids);
            }
        }
        let mut seen = vec![0usize; self.params.len()];
        let mut per_cell = Vec::with_capacity(groups.len());
        let mut total = 0;
        let mut shared = 0;
        for group in &groups {
            let mut count = 0;
            for id in group {
                let p = self.params.get(*id);
                count += p.value.len();
                seen[id.0] += 1;
                if seen[id.0] > 1 {
                    shared += 1;
                }
            }
            per_cell.push(count);
            total += count;
        }
        Census {
            total,
            per_cell,
            shared,
        }
    }

    /// Writes a checkpoint: a length-prefixed JSON header describing the
    /// plan and per-parameter shapes, followed by each parameter's values
    /// as raw little-endian doubles in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            plan: self.plan.clone(),
            params: self
                .params
                .iter()
                .map(|p| ParamEntry {
                    id: p.id.0,
                    shape: p.value.shape().to_vec(),
                })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        file.write_all(&header_bytes)?;
        for p in self.params.iter() {
            for v in p.value.data() {
                file.write_all(&v.to_le_bytes())?;
            }
        }
        file.flush()?;
        Ok(())
    }

    /// Reads a checkpoint written by [`Model::save`]. The architecture is
    /// rebuilt from the stored plan and every parameter is overwritten
    /// with the stored values, so the round trip is bit-exact.
    pub fn load(path: &Path) -> Result<Model> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut len_bytes = [0u8; 8];
        file.read_exact(&mut len_bytes)
            .map_err(|_| Error::Format("truncated checkpoint: missing header length".into()))?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        if header_len > 16 * 1024 * 1024 {
            return Err(Error::Format("unreasonable header length".into()));
        }
        let mut header_bytes = vec![0u8; header_len];
        file.read_exact(&mut header_bytes)
            .map_err(|_| Error::Format("truncated checkpoint: incomplete header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::Format(format!("bad checkpoint header: {}", e)))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {} (expected {})",
                header.format_version, CHECKPOINT_VERSION
            )));
        }
        let mut model = Model::from_plan(header.plan)?;
        if header.params.len() != model.params.len() {
            return Err(Error::Format(format!(
                "checkpoint lists {} parameters, plan builds {}",
                header.params.len(),
                model.params.len()
            )));
        }
        for entry in &header.params {
            if entry.id >= model.params.len()
                || model.params.get(ParamId(entry.id)).value.shape() != entry.shape.as_slice()
            {
                return Err(Error::Format(format!(
                    "parameter {} shape mismatch against plan",
                    entry.id
                )));
            }
        }
        for entry in &header.params {
            let p = model.params.get_mut(ParamId(entry.id));
            let n = p.value.len();
            let mut buf = vec![0u8; n * 8];
            file.read_exact(&mut buf)
                .map_err(|_| Error::Format("truncated checkpoint: incomplete parameter data".into()))?;
            for (i, chunk) in buf.chunks_exact(8).enumerate() {
                p.value.data_mut()[i] = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
        }
        Ok(model)
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    plan: NetPlan,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    id: usize,
    shape: Vec<usize>,
}
