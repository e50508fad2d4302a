//! The graph context encoder: an encoder/decoder stack of GINe
//! convolutions with top-k pooling on the way down and structural
//! unpooling with residual skips on the way back up.
//!
//! A forward pass registers every parameter on a fresh [`Tape`] and
//! returns the reconstruction heads together with the named parameter
//! handles, so callers can read gradients by parameter name after
//! `backward`.

mod layers;

pub use layers::{
    edge_update, gine_conv, mlp_forward, topk_pool, unpool, ConvLayer, ConvVars, Mlp, MlpVars,
    PoolRecord, Stage,
};

use crate::graph::Batch;
use crate::rng::{self, tag};
use crate::tensor::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("num_layers must be an even number of at least 2, got {0}")]
    BadLayerCount(usize),
    #[error("hidden_channels must be at least 1")]
    ZeroHidden,
    #[error("pooling_rate must lie in (0, 1], got {0}")]
    BadPoolingRate(f64),
    #[error("{0} must be at least 1")]
    ZeroDim(&'static str),
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("classifier head is not attached; call attach_head first")]
    MissingHead,
}

/// Architecture hyperparameters. `num_layers` counts convolutions in
/// total; half encode, half decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GceConfig {
    pub num_layers: usize,
    pub hidden_channels: usize,
    pub pooling_rate: f64,
    pub use_residual: bool,
    pub edge_updates: bool,
    pub train_epsilon: bool,
    pub node_in_dim: usize,
    pub edge_in_dim: usize,
}

impl GceConfig {
    /// The reference setup: 6 layers, 50 channels, rate 0.5, residual
    /// skips and per-layer edge updates on, trainable epsilon.
    pub fn defaults(node_in_dim: usize, edge_in_dim: usize) -> GceConfig {
        GceConfig {
            num_layers: 6,
            hidden_channels: 50,
            pooling_rate: 0.5,
            use_residual: true,
            edge_updates: true,
            train_epsilon: true,
            node_in_dim,
            edge_in_dim,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_layers < 2 || self.num_layers % 2 != 0 {
            return Err(ConfigError::BadLayerCount(self.num_layers));
        }
        if self.hidden_channels == 0 {
            return Err(ConfigError::ZeroHidden);
        }
        if !(self.pooling_rate > 0.0 && self.pooling_rate <= 1.0) {
            return Err(ConfigError::BadPoolingRate(self.pooling_rate));
        }
        if self.node_in_dim == 0 {
            return Err(ConfigError::ZeroDim("node_in_dim"));
        }
        if self.edge_in_dim == 0 {
            return Err(ConfigError::ZeroDim("edge_in_dim"));
        }
        Ok(())
    }

    pub fn encoder_layers(&self) -> usize {
        self.num_layers / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayer {
    conv: ConvLayer,
    edge_mlp: Mlp,
    pool_p: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
struct DecoderLayer {
    conv: ConvLayer,
    edge_mlp: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GceModel {
    config: GceConfig,
    node_in: Mlp,
    edge_in: Mlp,
    enc: Vec<EncoderLayer>,
    dec: Vec<DecoderLayer>,
    node_out: Mlp,
    edge_out: Mlp,
    head: Option<Mlp>,
}

/// Tape handles for every registered parameter, mirroring the model
/// structure.
pub struct ModelVars {
    pub node_in: MlpVars,
    pub edge_in: MlpVars,
    pub enc: Vec<(ConvVars, MlpVars, Var)>,
    pub dec: Vec<(ConvVars, MlpVars)>,
    pub node_out: MlpVars,
    pub edge_out: MlpVars,
    pub head: Option<MlpVars>,
}

/// Reconstruction heads plus the named parameter handles of the pass.
pub struct ForwardOutput {
    pub node_recon: Var,
    pub edge_recon: Var,
    pub params: Vec<(String, Var)>,
}

/// Per-graph logits plus the named parameter handles of the pass.
pub struct ClassifierOutput {
    pub logits: Var,
    pub params: Vec<(String, Var)>,
}

/// Encoder tensors are shared between pretraining and fine-tuning;
/// everything else is task-specific.
pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("node_in.") || name.starts_with("edge_in.") || name.starts_with("enc")
}

impl GceModel {
    /// Builds a freshly initialised model. All weights draw from a
    /// stream keyed by `seed`, uniform within `1/sqrt(fan_in)`.
    pub fn new(config: GceConfig, seed: u64) -> Result<GceModel, ModelError> {
        config.validate()?;
        let h = config.hidden_channels;
        let mut rng = rng::stream(seed, &[tag::INIT, 0]);
        let node_in = Mlp::init(config.node_in_dim, h, h, &mut rng);
        let edge_in = Mlp::init(config.edge_in_dim, h, h, &mut rng);
        let mut enc = Vec::new();
        for _ in 0..config.encoder_layers() {
            let conv = ConvLayer::init(h, config.train_epsilon, &mut rng);
            let edge_mlp = Mlp::init(3 * h, h, h, &mut rng);
            let pool_p = loop {
                let p = layers_uniform(&mut rng, h);
                if p.data().iter().any(|v| *v != 0.0) {
                    break p.with_grad();
                }
            };
            enc.push(EncoderLayer { conv, edge_mlp, pool_p });
        }
        let mut dec = Vec::new();
        for _ in 0..config.encoder_layers() {
            let conv = ConvLayer::init(h, config.train_epsilon, &mut rng);
            let edge_mlp = Mlp::init(3 * h, h, h, &mut rng);
            dec.push(DecoderLayer { conv, edge_mlp });
        }
        let node_out = Mlp::init(h, h, config.node_in_dim, &mut rng);
        let edge_out = Mlp::init(h, h, config.edge_in_dim, &mut rng);
        Ok(GceModel { config, node_in, edge_in, enc, dec, node_out, edge_out, head: None })
    }

    pub fn config(&self) -> &GceConfig {
        &self.config
    }

    pub fn has_head(&self) -> bool {
        self.head.is_some()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.head.as_ref().map(|m| m.out_dim())
    }

    /// Adds (or replaces) the classification head, a fresh 2-layer MLP
    /// from hidden width to `num_classes` logits.
    pub fn attach_head(&mut self, num_classes: usize, seed: u64) {
        assert!(num_classes >= 2, "a classifier needs at least 2 classes");
        let h = self.config.hidden_channels;
        let mut rng = rng::stream(seed, &[tag::INIT, 1]);
        self.head = Some(Mlp::init(h, h, num_classes, &mut rng));
    }

    /// Visits every parameter as `(name, tensor)` in a fixed order.
    pub fn visit_params<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.node_in.visit("node_in", f);
        self.edge_in.visit("edge_in", f);
        for (i, layer) in self.enc.iter().enumerate() {
            layer.conv.visit(&format!("enc{i}"), f);
            layer.edge_mlp.visit(&format!("enc{i}.edge"), f);
            f(format!("enc{i}.pool_p"), &layer.pool_p);
        }
        for (i, layer) in self.dec.iter().enumerate() {
            layer.conv.visit(&format!("dec{i}"), f);
            layer.edge_mlp.visit(&format!("dec{i}.edge"), f);
        }
        self.node_out.visit("node_out", f);
        self.edge_out.visit("edge_out", f);
        if let Some(head) = &self.head {
            head.visit("head", f);
        }
    }

    /// Mutable visit in the same order as [`visit_params`].
    ///
    /// [`visit_params`]: GceModel::visit_params
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.node_in.visit_mut("node_in", f);
        self.edge_in.visit_mut("edge_in", f);
        for (i, layer) in self.enc.iter_mut().enumerate() {
            layer.conv.visit_mut(&format!("enc{i}"), f);
            layer.edge_mlp.visit_mut(&format!("enc{i}.edge"), f);
            f(format!("enc{i}.pool_p"), &mut layer.pool_p);
        }
        for (i, layer) in self.dec.iter_mut().enumerate() {
            layer.conv.visit_mut(&format!("dec{i}"), f);
            layer.edge_mlp.visit_mut(&format!("dec{i}.edge"), f);
        }
        self.node_out.visit_mut("node_out", f);
        self.edge_out.visit_mut("edge_out", f);
        if let Some(head) = &mut self.head {
            head.visit_mut("head", f);
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params(&mut |name, _| names.push(name));
        names
    }

    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, t| n += t.numel());
        n
    }

    /// Registers all parameters on a tape, returning structured handles
    /// and the flat `(name, var)` list in visit order.
    pub fn register(&self, tape: &mut Tape) -> (ModelVars, Vec<(String, Var)>) {
        let mut sink = Vec::new();
        let node_in = self.node_in.register(tape, "node_in", &mut sink);
        let edge_in = self.edge_in.register(tape, "edge_in", &mut sink);
        let mut enc = Vec::new();
        for (i, layer) in self.enc.iter().enumerate() {
            let conv = layer.conv.register(tape, &format!("enc{i}"), &mut sink);
            let edge_mlp = layer.edge_mlp.register(tape, &format!("enc{i}.edge"), &mut sink);
            let pool_p = tape.leaf(&layer.pool_p);
            sink.push((format!("enc{i}.pool_p"), pool_p));
            enc.push((conv, edge_mlp, pool_p));
        }
        let mut dec = Vec::new();
        for (i, layer) in self.dec.iter().enumerate() {
            let conv = layer.conv.register(tape, &format!("dec{i}"), &mut sink);
            let edge_mlp = layer.edge_mlp.register(tape, &format!("dec{i}.edge"), &mut sink);
            dec.push((conv, edge_mlp));
        }
        let node_out = self.node_out.register(tape, "node_out", &mut sink);
        let edge_out = self.edge_out.register(tape, "edge_out", &mut sink);
        let head = self.head.as_ref().map(|m| m.register(tape, "head", &mut sink));
        (ModelVars { node_in, edge_in, enc, dec, node_out, edge_out, head }, sink)
    }

    /// Rebuilds [`ModelVars`] from vars laid out in visit order.
    /// Counterpart of [`register`] for callers that manage leaves
    /// themselves (gradient checking does).
    ///
    /// [`register`]: GceModel::register
    pub fn assemble_vars(&self, vars: &[Var]) -> ModelVars {
        fn take(it: &mut impl Iterator<Item = Var>) -> Var {
            it.next().expect("too few vars for this model")
        }
        fn take_mlp(it: &mut impl Iterator<Item = Var>) -> MlpVars {
            MlpVars { w1: take(it), b1: take(it), w2: take(it), b2: take(it) }
        }
        fn take_conv(it: &mut impl Iterator<Item = Var>) -> ConvVars {
            ConvVars { theta: take_mlp(it), phi: take_mlp(it), eps: take(it) }
        }
        let it = &mut vars.iter().copied();
        let node_in = take_mlp(it);
        let edge_in = take_mlp(it);
        let mut enc = Vec::new();
        for _ in 0..self.enc.len() {
            enc.push((take_conv(it), take_mlp(it), take(it)));
        }
        let mut dec = Vec::new();
        for _ in 0..self.dec.len() {
            dec.push((take_conv(it), take_mlp(it)));
        }
        let node_out = take_mlp(it);
        let edge_out = take_mlp(it);
        let head = self.head.as_ref().map(|_| take_mlp(it));
        assert!(it.next().is_none(), "too many vars for this model");
        ModelVars { node_in, edge_in, enc, dec, node_out, edge_out, head }
    }

    fn check_batch(&self, batch: &Batch) {
        let g = batch.merged();
        assert_eq!(
            g.node_features().cols(),
            self.config.node_in_dim,
            "batch node features have width {}, model expects {}",
            g.node_features().cols(),
            self.config.node_in_dim
        );
        assert_eq!(
            g.edge_features().cols(),
            self.config.edge_in_dim,
            "batch edge features have width {}, model expects {}",
            g.edge_features().cols(),
            self.config.edge_in_dim
        );
    }

    /// Runs the full encoder/decoder pass and projects back to input
    /// widths: node reconstruction is `N x node_in_dim`, edge
    /// reconstruction `E x edge_in_dim` over the input's directed
    /// entries.
    pub fn forward(&self, tape: &mut Tape, batch: &Batch) -> ForwardOutput {
        self.check_batch(batch);
        let (vars, params) = self.register(tape);
        let (node_recon, edge_recon) = forward_core(tape, &self.config, &vars, batch);
        ForwardOutput { node_recon, edge_recon, params }
    }

    /// [`forward`] over externally managed parameter handles, for
    /// callers that must own the leaves (gradient checking does; see
    /// [`assemble_vars`]).
    ///
    /// [`forward`]: GceModel::forward
    /// [`assemble_vars`]: GceModel::assemble_vars
    pub fn forward_with_vars(&self, tape: &mut Tape, vars: &ModelVars, batch: &Batch) -> (Var, Var) {
        self.check_batch(batch);
        forward_core(tape, &self.config, vars, batch)
    }

    /// Encoder stack, per-graph mean pooling, then the head MLP.
    /// Logits are `num_graphs x num_classes`.
    pub fn classifier_forward(
        &self,
        tape: &mut Tape,
        batch: &Batch,
    ) -> Result<ClassifierOutput, ModelError> {
        if self.head.is_none() {
            return Err(ModelError::MissingHead);
        }
        self.check_batch(batch);
        let (vars, params) = self.register(tape);
        let logits = classifier_core(tape, &self.config, &vars, batch);
        Ok(ClassifierOutput { logits, params })
    }
}

fn layers_uniform(rng: &mut impl rand::Rng, h: usize) -> Tensor {
    let bound = 1.0 / (h as f64).sqrt();
    let data = (0..h).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::matrix(h, 1, data)
}

struct EncodeState {
    x: Var,
    e: Var,
    stage: Stage,
    skips: Vec<(Var, Var)>,
    records: Vec<PoolRecord>,
}

fn encode(tape: &mut Tape, cfg: &GceConfig, vars: &ModelVars, batch: &Batch) -> EncodeState {
    let g = batch.merged();
    let x_in = tape.constant(g.node_features().clone());
    let e_in = tape.constant(g.edge_features().clone());
    let mut x = mlp_forward(tape, &vars.node_in, x_in);
    let mut e = mlp_forward(tape, &vars.edge_in, e_in);
    let mut stage = Stage::of_batch(batch);
    let mut skips = Vec::new();
    let mut records = Vec::new();
    for (conv, edge_mlp, pool_p) in &vars.enc {
        x = gine_conv(tape, x, &stage.edges, e, conv);
        if cfg.edge_updates {
            e = edge_update(tape, e, x, &stage.edges, edge_mlp);
        }
        skips.push((x, e));
        let (xp, ep, next_stage, record) = topk_pool(tape, x, e, &stage, *pool_p, cfg.pooling_rate);
        x = xp;
        e = ep;
        stage = next_stage;
        records.push(record);
    }
    EncodeState { x, e, stage, skips, records }
}

fn forward_core(tape: &mut Tape, cfg: &GceConfig, vars: &ModelVars, batch: &Batch) -> (Var, Var) {
    let state = encode(tape, cfg, vars, batch);
    let mut x = state.x;
    let mut e = state.e;
    let depth = vars.dec.len();
    for (i, (conv, edge_mlp)) in vars.dec.iter().enumerate() {
        let record = &state.records[depth - 1 - i];
        let (skip_x, skip_e) = state.skips[depth - 1 - i];
        x = unpool(tape, x, record);
        if cfg.use_residual {
            x = tape.add(x, skip_x);
        }
        e = skip_e;
        x = gine_conv(tape, x, &record.pre.edges, e, conv);
        if cfg.edge_updates {
            e = edge_update(tape, e, x, &record.pre.edges, edge_mlp);
        }
    }
    let node_recon = mlp_forward(tape, &vars.node_out, x);
    let edge_recon = mlp_forward(tape, &vars.edge_out, e);
    (node_recon, edge_recon)
}

fn classifier_core(tape: &mut Tape, cfg: &GceConfig, vars: &ModelVars, batch: &Batch) -> Var {
    let head = vars.head.as_ref().expect("classifier_core needs a head");
    let state = encode(tape, cfg, vars, batch);
    let num_graphs = state.stage.num_graphs;
    let h = cfg.hidden_channels;
    let sums = tape.scatter_add(state.x, &state.stage.graph_of_node, num_graphs);
    let mut counts = vec![0.0; num_graphs];
    for &g in &state.stage.graph_of_node {
        counts[g] += 1.0;
    }
    assert!(counts.iter().all(|&c| c > 0.0), "a graph lost all nodes during pooling");
    let counts = tape.constant(Tensor::matrix(num_graphs, 1, counts));
    let counts = tape.repeat_col(counts, h);
    let mean = tape.div(sums, counts);
    mlp_forward(tape, head, mean)
}
